use std::path::PathBuf;

use thiserror::Error;

use crate::pool_math::Token;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:e})"
    )]
    NonConvergence { residual: f64, iterations: usize },

    #[error("reserves are off the pool curve: invariant {invariant} vs k {k}")]
    OffCurve { invariant: f64, k: f64 },

    #[error("swap output {requested} of {token:?} exceeds available reserve {available}")]
    SwapExceedsReserves {
        token: Token,
        requested: f64,
        available: f64,
    },

    #[error("pool already unlocked in block {block}")]
    SessionAlreadyOpen { block: u64 },

    #[error("no open unlock session")]
    NoOpenSession,

    #[error("escrow short: owes {owed} of {token:?} but only {posted} posted")]
    EscrowShortfall {
        token: Token,
        owed: f64,
        posted: f64,
    },

    #[error("pool liquidation: settlement needs {owed} of {token:?}, pool holds {available}")]
    Liquidation {
        token: Token,
        owed: f64,
        available: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
