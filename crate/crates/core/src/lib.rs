//! Diamond pools: a constant-function market maker that keeps a share of the
//! value its arbitrageurs would otherwise extract.
//!
//! The protocol math (`pool_math`, `diamond`, `conversion`, `block_engine`)
//! is generic over [`scalar::Scalar`], implemented for `f32` and `f64`; the
//! aliases below fix it to `f64`. The market model and the Monte Carlo
//! harness work in `f64`.

// range checks are written as `!(x > 0)` so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod block_engine;
pub mod conversion;
pub mod diamond;
pub mod error;
pub mod harness;
pub mod market_model;
pub mod pool_math;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use pool_math::Token;

pub type Reserves = pool_math::Reserves<f64>;
pub type PoolCurve = pool_math::PoolCurve<f64>;
pub type CurveKind = pool_math::CurveKind<f64>;
pub type DiamondPool = diamond::DiamondPool<f64>;
pub type DiamondParams = diamond::DiamondParams<f64>;
pub type Vault = diamond::Vault<f64>;
pub type BlockResult = diamond::BlockResult<f64>;
pub type ConversionProcess = conversion::ConversionProcess<f64>;
pub type FuturesPosition = conversion::FuturesPosition<f64>;
pub type BlockEngine = block_engine::BlockEngine<f64>;
pub type Order = block_engine::Order<f64>;

pub type Reserves32 = pool_math::Reserves<f32>;
pub type PoolCurve32 = pool_math::PoolCurve<f32>;
pub type DiamondPool32 = diamond::DiamondPool<f32>;
pub type BlockEngine32 = block_engine::BlockEngine<f32>;
