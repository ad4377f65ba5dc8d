//! Vault conversion: the periodic conversion auction (PCA) and per-block
//! conversion against futures (CvF), futures settlement and collateral sizing.
//!
//! All values are in token-x units unless stated otherwise. A futures
//! position denominated in token y with strike `p_c` pays the long side
//! `notional * (p_T - p_c)`; one denominated in token x pays the long side
//! `notional * (p_c - p_T) / p_c` (long x is short y at the same strike).

use serde::{Deserialize, Serialize};

use crate::diamond::Vault;
use crate::error::{Error, Result};
use crate::pool_math::Token;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Long,
    Short,
}

impl Side {
    fn sign<T: Scalar>(self) -> T {
        match self {
            Side::Long => T::one(),
            Side::Short => -T::one(),
        }
    }
}

/// The pool's side of a per-block conversion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FuturesPosition<T> {
    /// Quantity of `token` the contract references.
    pub notional: T,
    pub token: Token,
    pub strike: T,
    pub pool_side: Side,
    pub opened_at: u64,
}

impl<T: Scalar> FuturesPosition<T> {
    pub fn new(
        notional: T,
        token: Token,
        strike: T,
        pool_side: Side,
        opened_at: u64,
    ) -> Result<Self> {
        if !(notional > T::zero()) || !(strike > T::zero()) {
            return Err(Error::param(format!(
                "futures need positive notional and strike, got {notional} @ {strike}"
            )));
        }
        Ok(Self {
            notional,
            token,
            strike,
            pool_side,
            opened_at,
        })
    }

    /// Pool profit at settlement price `p_t`, token-x units.
    pub fn pnl(&self, p_t: T) -> T {
        let long = match self.token {
            Token::Y => self.notional * (p_t - self.strike),
            Token::X => self.notional * (self.strike - p_t) / self.strike,
        };
        self.pool_side.sign::<T>() * long
    }
}

/// Token amounts moving into the pool (negative components leave it).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SettlementPair<T> {
    pub s_x: T,
    pub s_y: T,
}

impl<T: Scalar> SettlementPair<T> {
    pub fn zero() -> Self {
        Self {
            s_x: T::zero(),
            s_y: T::zero(),
        }
    }

    pub fn value_at(&self, eps: T) -> T {
        self.s_x + self.s_y * eps
    }

    pub fn is_zero(&self) -> bool {
        self.s_x.is_zero() && self.s_y.is_zero()
    }
}

impl<T: Scalar> std::ops::Add for SettlementPair<T> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            s_x: self.s_x + rhs.s_x,
            s_y: self.s_y + rhs.s_y,
        }
    }
}

/// Outcome of one auction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuctionQuote<T> {
    /// Tokens offered.
    pub quantity: T,
    pub token: Token,
    /// Winning bid in the other token. Negative means the seller pays.
    pub clearing_bid: T,
}

/// How far the winning bid sits from fair value: `bid = fair * (1 + markup)`.
/// Competitive bidders clear at fair value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuctionModel<T> {
    markup: T,
}

impl<T: Scalar> Default for AuctionModel<T> {
    fn default() -> Self {
        Self::fair()
    }
}

impl<T: Scalar> AuctionModel<T> {
    pub fn fair() -> Self {
        Self { markup: T::zero() }
    }

    /// Under-competitive auction clearing at `fair * (1 - h)`, `h` in [0, 1).
    pub fn haircut(h: T) -> Result<Self> {
        if !(h >= T::zero() && h < T::one()) {
            return Err(Error::param(format!(
                "auction haircut must lie in [0, 1), got {h}"
            )));
        }
        Ok(Self { markup: -h })
    }

    /// Bidders overpaying by a fraction `m >= 0`.
    pub fn premium(m: T) -> Result<Self> {
        if !(m >= T::zero() && m.is_finite()) {
            return Err(Error::param(format!(
                "auction premium must be non-negative, got {m}"
            )));
        }
        Ok(Self { markup: m })
    }

    pub fn markup(&self) -> T {
        self.markup
    }

    pub fn clear(&self, fair_value: T) -> T {
        fair_value * (T::one() + self.markup)
    }
}

/// Source of the settlement price for the batch-auction oracle.
pub trait PriceSource<T> {
    fn quote(&mut self, eps: T) -> T;
}

/// Oracle that settles exactly at the external price.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactPrice;

impl<T: Scalar> PriceSource<T> for ExactPrice {
    fn quote(&mut self, eps: T) -> T {
        eps
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettlementMode {
    /// Competitive auction of the converted tokens at their conversion price.
    #[default]
    FuturesAuction,
    /// Settle at a frequent-batch-auction clearing price.
    BatchOracle,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConversionProcess<T> {
    Pca { auction: AuctionModel<T> },
    Cvf { settlement: SettlementMode },
}

impl<T: Scalar> Default for ConversionProcess<T> {
    fn default() -> Self {
        ConversionProcess::Pca {
            auction: AuctionModel::fair(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcaOutcome<T> {
    /// Tokens re-added to the pool: the winning bid plus the unconverted half.
    pub pair: SettlementPair<T>,
    pub quote: AuctionQuote<T>,
    /// Winning bid minus fair value, token-x units. Zero for a fair auction.
    pub transfer: T,
}

/// Auctions half of a single-typed vault. An empty vault converts to nothing.
pub fn pca_convert<T: Scalar>(
    vault: &Vault<T>,
    eps: T,
    auction: &AuctionModel<T>,
) -> Result<Option<PcaOutcome<T>>> {
    check_positive(eps, "external price")?;
    let Some((token, balance)) = vault.single()? else {
        return Ok(None);
    };
    let eta = balance * T::half();
    Ok(Some(match token {
        Token::Y => {
            let fair = eta * eps;
            let bid = auction.clear(fair);
            PcaOutcome {
                pair: SettlementPair { s_x: bid, s_y: eta },
                quote: AuctionQuote {
                    quantity: eta,
                    token,
                    clearing_bid: bid,
                },
                transfer: bid - fair,
            }
        }
        Token::X => {
            let fair = eta / eps;
            let bid = auction.clear(fair);
            PcaOutcome {
                pair: SettlementPair { s_x: eta, s_y: bid },
                quote: AuctionQuote {
                    quantity: eta,
                    token,
                    clearing_bid: bid,
                },
                transfer: (bid - fair) * eps,
            }
        }
    }))
}

/// Converts half of a single-typed vault at pool price `p_c` and opens the
/// offsetting futures position (pool long the token it sold). Returns the
/// tokens to re-add to the pool, in the pool's own ratio.
pub fn cvf_convert<T: Scalar>(
    vault: &Vault<T>,
    p_c: T,
    opened_at: u64,
) -> Result<Option<(SettlementPair<T>, FuturesPosition<T>)>> {
    check_positive(p_c, "conversion price")?;
    let Some((token, balance)) = vault.single()? else {
        return Ok(None);
    };
    let eta = balance * T::half();
    let pair = match token {
        Token::Y => SettlementPair {
            s_x: eta * p_c,
            s_y: eta,
        },
        Token::X => SettlementPair {
            s_x: eta,
            s_y: eta / p_c,
        },
    };
    let pos = FuturesPosition::new(eta, token, p_c, Side::Long, opened_at)?;
    Ok(Some((pair, pos)))
}

/// Settles one position at `p_t`, split in equal value across both tokens:
/// `s_x = s_y * p_t` and `s_x + s_y * p_t = PnL`.
pub fn settle_futures<T: Scalar>(pos: &FuturesPosition<T>, p_t: T) -> Result<SettlementPair<T>> {
    check_positive(p_t, "settlement price")?;
    let pnl = pos.pnl(p_t);
    Ok(SettlementPair {
        s_x: pnl * T::half(),
        s_y: pnl / (T::two() * p_t),
    })
}

/// The price futures settle at. The futures auction clears at the external
/// price under competition; the batch oracle reports through `source`.
pub fn settle_price<T: Scalar, S: PriceSource<T>>(
    mode: SettlementMode,
    eps_t: T,
    source: &mut S,
) -> T {
    match mode {
        SettlementMode::FuturesAuction => eps_t,
        SettlementMode::BatchOracle => source.quote(eps_t),
    }
}

/// Winning bid when the right and obligation to buy the position's tokens
/// at the strike is auctioned. A negative bid is paid by the pool.
pub fn futures_auction_bid<T: Scalar>(pos: &FuturesPosition<T>, eps_t: T) -> AuctionQuote<T> {
    AuctionQuote {
        quantity: pos.notional,
        token: pos.token,
        clearing_bid: pos.pnl(eps_t),
    }
}

/// Minimal arbitrageur collateral `(pi_x, pi_y)` for futures on `lambda_y`
/// tokens of y at price `p`, covering a move of up to `sigma_t` against the
/// arbitrageur and held in the pool ratio at the worst-case price.
pub fn futures_collateral<T: Scalar>(
    arb_side: Side,
    p: T,
    sigma_t: T,
    lambda_y: T,
) -> Result<(T, T)> {
    check_positive(p, "price")?;
    if !(sigma_t > T::zero() && sigma_t.is_finite()) {
        return Err(Error::domain(format!(
            "max expected move must be positive, got {sigma_t}"
        )));
    }
    if lambda_y < T::zero() {
        return Err(Error::domain(format!(
            "notional must be non-negative, got {lambda_y}"
        )));
    }
    let one = T::one();
    Ok(match arb_side {
        Side::Long => {
            let worst = p / (one + sigma_t);
            let pi_y = lambda_y * (p - worst) / (T::two() * worst);
            (pi_y * worst, pi_y)
        }
        Side::Short => {
            let worst = p * (one + sigma_t);
            let pi_y = lambda_y * p * sigma_t / (T::two() * worst);
            (pi_y * worst, pi_y)
        }
    })
}

fn check_positive<T: Scalar>(v: T, what: &str) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must be positive, got {v}")))
    }
}
