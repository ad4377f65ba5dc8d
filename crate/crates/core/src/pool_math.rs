//! Constant-function pool mathematics.
//!
//! Prices are quoted as token-x per token-y. The product invariant
//! `rx * ry = k` has closed forms for everything below; other curves go
//! through a bisection on the first-order condition `price(R) = eps` along
//! the invariant.
//!
//! For the product invariant the LVR of a move from `(rx, ry)` to the
//! optimum at `eps` is `(sqrt(rx) - sqrt(ry * eps))^2`. That form has no
//! cancellation, so it stays accurate when `eps` is close to the pool price.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{rel_eq, Scalar};

const MAX_BISECTIONS: usize = 200;
const MAX_BRACKET_STEPS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Token {
    X,
    Y,
}

impl Token {
    pub fn other(self) -> Token {
        match self {
            Token::X => Token::Y,
            Token::Y => Token::X,
        }
    }
}

/// Token quantities held by a pool.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Reserves<T> {
    pub rx: T,
    pub ry: T,
}

impl<T: Scalar> Reserves<T> {
    /// Validated constructor: both finite, non-negative, not both zero.
    pub fn new(rx: T, ry: T) -> Result<Self> {
        if !(rx.is_finite() && ry.is_finite()) || rx < T::zero() || ry < T::zero() {
            return Err(Error::domain(format!(
                "reserves must be finite and non-negative, got ({rx}, {ry})"
            )));
        }
        if rx.is_zero() && ry.is_zero() {
            return Err(Error::domain("a live pool cannot hold (0, 0)"));
        }
        Ok(Self { rx, ry })
    }

    pub fn get(&self, token: Token) -> T {
        match token {
            Token::X => self.rx,
            Token::Y => self.ry,
        }
    }

    pub fn get_mut(&mut self, token: Token) -> &mut T {
        match token {
            Token::X => &mut self.rx,
            Token::Y => &mut self.ry,
        }
    }

    /// Portfolio value in token-x units at price `eps`.
    pub fn value_at(&self, eps: T) -> T {
        self.rx + self.ry * eps
    }

    pub fn shifted(&self, dx: T, dy: T) -> Self {
        Self {
            rx: self.rx + dx,
            ry: self.ry + dy,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.rx > T::zero() && self.ry > T::zero()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CurveKind<T> {
    /// `rx * ry = k`, price `rx / ry`.
    Product,
    /// `rx^w * ry^(1-w) = k`, price `(1-w)/w * rx/ry`. Solved numerically.
    Weighted { weight_x: T },
}

/// An invariant curve together with its constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoolCurve<T> {
    pub kind: CurveKind<T>,
    pub k: T,
}

impl<T: Scalar> PoolCurve<T> {
    pub fn product(k: T) -> Result<Self> {
        Self::with_k(CurveKind::Product, k)
    }

    pub fn with_k(kind: CurveKind<T>, k: T) -> Result<Self> {
        if let CurveKind::Weighted { weight_x } = kind {
            if !(weight_x > T::zero() && weight_x < T::one()) {
                return Err(Error::param(format!(
                    "curve weight must lie in (0, 1), got {weight_x}"
                )));
            }
        }
        if !(k > T::zero() && k.is_finite()) {
            return Err(Error::param(format!(
                "pool constant must be positive, got {k}"
            )));
        }
        Ok(Self { kind, k })
    }

    /// The curve of `kind` passing through `r`.
    pub fn through(kind: CurveKind<T>, r: &Reserves<T>) -> Result<Self> {
        Self::with_k(kind, invariant(&kind, r))
    }

    /// Same kind, constant recomputed from `r`.
    pub fn rebased(&self, r: &Reserves<T>) -> Result<Self> {
        Self::through(self.kind, r)
    }

    pub fn invariant(&self, r: &Reserves<T>) -> T {
        invariant(&self.kind, r)
    }

    pub fn price(&self, r: &Reserves<T>) -> Result<T> {
        price_of(&self.kind, r)
    }

    pub fn contains(&self, r: &Reserves<T>) -> bool {
        rel_eq(self.invariant(r), self.k, T::money_tol())
    }

    pub fn ry_on_curve(&self, rx: T) -> T {
        match self.kind {
            CurveKind::Product => self.k / rx,
            CurveKind::Weighted { weight_x: w } => {
                (self.k / rx.powf(w)).powf(T::one() / (T::one() - w))
            }
        }
    }

    pub fn rx_on_curve(&self, ry: T) -> T {
        match self.kind {
            CurveKind::Product => self.k / ry,
            CurveKind::Weighted { weight_x: w } => {
                (self.k / ry.powf(T::one() - w)).powf(T::one() / w)
            }
        }
    }

    fn ensure_contains(&self, r: &Reserves<T>) -> Result<()> {
        if self.contains(r) {
            Ok(())
        } else {
            Err(Error::OffCurve {
                invariant: self.invariant(r).as_f64(),
                k: self.k.as_f64(),
            })
        }
    }
}

fn invariant<T: Scalar>(kind: &CurveKind<T>, r: &Reserves<T>) -> T {
    match *kind {
        CurveKind::Product => r.rx * r.ry,
        CurveKind::Weighted { weight_x: w } => r.rx.powf(w) * r.ry.powf(T::one() - w),
    }
}

fn price_of<T: Scalar>(kind: &CurveKind<T>, r: &Reserves<T>) -> Result<T> {
    if !(r.rx > T::zero() && r.ry > T::zero()) {
        return Err(Error::domain(format!(
            "price undefined for reserves ({}, {})",
            r.rx, r.ry
        )));
    }
    Ok(match *kind {
        CurveKind::Product => r.rx / r.ry,
        CurveKind::Weighted { weight_x: w } => (T::one() - w) / w * r.rx / r.ry,
    })
}

fn check_price<T: Scalar>(eps: T) -> Result<()> {
    if eps > T::zero() && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "external price must be positive, got {eps}"
        )))
    }
}

/// Pool price of `r` on `curve`, token-x per token-y.
pub fn price<T: Scalar>(curve: &PoolCurve<T>, r: &Reserves<T>) -> Result<T> {
    curve.price(r)
}

/// Result of moving a pool to the optimum for an external price.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArbOutcome<T> {
    pub target: Reserves<T>,
    /// Token-x flow into the pool (negative when the pool pays out x).
    pub delta_x: T,
    /// Token-y flow into the pool.
    pub delta_y: T,
    /// LVR of the move, token-x units.
    pub lvr: T,
}

/// Finds a root of the increasing function `ratio(z) - 1` over `z > 0`,
/// starting from `start`. `ratio` must be continuous and strictly
/// increasing. Works in log space: bracket by doubling, then bisect on the
/// geometric midpoint.
pub(crate) fn bisect_ratio<T, F>(start: T, ratio: F) -> Result<T>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let tol = T::solver_tol();
    let residual = |z: T| (ratio(z) - T::one()).abs();
    if residual(start) <= tol {
        return Ok(start);
    }
    let two = T::two();
    let (mut lo, mut hi) = (start, start);
    let mut steps = 0;
    while ratio(lo) > T::one() {
        lo = lo / two;
        steps += 1;
        if steps > MAX_BRACKET_STEPS || lo <= T::min_positive_value() {
            return Err(Error::NonConvergence {
                residual: residual(lo).as_f64(),
                iterations: steps,
            });
        }
    }
    while ratio(hi) < T::one() {
        hi = hi * two;
        steps += 1;
        if steps > MAX_BRACKET_STEPS || !hi.is_finite() {
            return Err(Error::NonConvergence {
                residual: residual(hi).as_f64(),
                iterations: steps,
            });
        }
    }
    let mut best = start;
    for _ in 0..MAX_BISECTIONS {
        let mid = (lo * hi).sqrt();
        let r = ratio(mid);
        best = mid;
        if (r - T::one()).abs() <= tol {
            return Ok(mid);
        }
        if r < T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
        if lo >= hi {
            break;
        }
    }
    let res = residual(best);
    if res <= tol {
        Ok(best)
    } else {
        Err(Error::NonConvergence {
            residual: res.as_f64(),
            iterations: MAX_BISECTIONS,
        })
    }
}

/// Point on `curve` whose price is `eps`, found numerically. Works for any
/// curve kind; the product invariant normally takes the closed form instead.
pub fn solve_target_numeric<T: Scalar>(
    curve: &PoolCurve<T>,
    eps: T,
    start_rx: T,
) -> Result<Reserves<T>> {
    check_price(eps)?;
    let rx = bisect_ratio(start_rx, |rx| {
        let ry = curve.ry_on_curve(rx);
        price_of(&curve.kind, &Reserves { rx, ry })
            .map(|p| p / eps)
            .unwrap_or(T::nan())
    })?;
    Ok(Reserves {
        rx,
        ry: curve.ry_on_curve(rx),
    })
}

/// Solves for the reserve of `free` such that the pool price equals
/// `target_price` with the other reserve held at `fixed`.
pub fn solve_reserve_for_price<T: Scalar>(
    kind: &CurveKind<T>,
    free: Token,
    fixed: T,
    start: T,
    target_price: T,
) -> Result<T> {
    check_price(target_price)?;
    match (kind, free) {
        (CurveKind::Product, Token::X) => Ok(fixed * target_price),
        (CurveKind::Product, Token::Y) => Ok(fixed / target_price),
        (_, Token::X) => bisect_ratio(start, |rx| {
            price_of(kind, &Reserves { rx, ry: fixed })
                .map(|p| p / target_price)
                .unwrap_or(T::nan())
        }),
        // price falls as ry grows, so bisect on the reciprocal ratio
        (_, Token::Y) => bisect_ratio(start, |ry| {
            price_of(kind, &Reserves { rx: fixed, ry })
                .map(|p| target_price / p)
                .unwrap_or(T::nan())
        }),
    }
}

/// The optimal arbitrage against `r` (which must lie on `curve`) at
/// external price `eps`.
pub fn arb_target<T: Scalar>(
    curve: &PoolCurve<T>,
    r: &Reserves<T>,
    eps: T,
) -> Result<ArbOutcome<T>> {
    check_price(eps)?;
    curve.ensure_contains(r)?;
    match curve.kind {
        CurveKind::Product => {
            // a^2 = rx, b^2 = ry * eps; the optimum is (a b, a b / eps).
            let a = r.rx.sqrt();
            let b = (r.ry * eps).sqrt();
            let ab = a * b;
            let gap = a - b;
            Ok(ArbOutcome {
                target: Reserves {
                    rx: ab,
                    ry: ab / eps,
                },
                delta_x: -a * gap,
                delta_y: b * gap / eps,
                lvr: gap * gap,
            })
        }
        CurveKind::Weighted { .. } => {
            let target = solve_target_numeric(curve, eps, r.rx)?;
            let lvr = (r.value_at(eps) - target.value_at(eps)).max(T::zero());
            Ok(ArbOutcome {
                target,
                delta_x: target.rx - r.rx,
                delta_y: target.ry - r.ry,
                lvr,
            })
        }
    }
}

/// Minimum value `eps * ry + rx` over the curve.
pub fn pool_value<T: Scalar>(curve: &PoolCurve<T>, eps: T) -> Result<T> {
    check_price(eps)?;
    match curve.kind {
        CurveKind::Product => Ok(T::two() * (curve.k * eps).sqrt()),
        CurveKind::Weighted { .. } => {
            // start where rx == ry, which is rx = k for this family
            let t = solve_target_numeric(curve, eps, curve.k)?;
            Ok(t.value_at(eps))
        }
    }
}

/// LVR between a block ending at `r_prev` and the next external price.
pub fn lvr<T: Scalar>(r_prev: &Reserves<T>, eps_next: T, curve: &PoolCurve<T>) -> Result<T> {
    check_price(eps_next)?;
    let v = match curve.kind {
        CurveKind::Product => {
            let gap = r_prev.rx.sqrt() - (r_prev.ry * eps_next).sqrt();
            // second term vanishes when r_prev is exactly on the curve
            let off =
                T::two() * eps_next.sqrt() * ((r_prev.rx * r_prev.ry).sqrt() - curve.k.sqrt());
            gap * gap + off
        }
        CurveKind::Weighted { .. } => r_prev.value_at(eps_next) - pool_value(curve, eps_next)?,
    };
    Ok(v.max(T::zero()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwapOutcome<T> {
    pub amount_out: T,
    pub reserves: Reserves<T>,
    /// Curve rebased on the post-swap reserves (fee included).
    pub curve: PoolCurve<T>,
}

/// Exact-input swap. The fee is taken on input: `(1 - fee) * amount_in`
/// travels along the invariant, then the whole input lands in the reserves
/// and `k` is recomputed.
pub fn swap_exact_in<T: Scalar>(
    curve: &PoolCurve<T>,
    r: &Reserves<T>,
    amount_in: T,
    side: Token,
    fee: T,
) -> Result<SwapOutcome<T>> {
    if !(fee >= T::zero() && fee < T::one()) {
        return Err(Error::param(format!("fee must lie in [0, 1), got {fee}")));
    }
    if !(amount_in >= T::zero() && amount_in.is_finite()) {
        return Err(Error::domain(format!(
            "swap input must be non-negative, got {amount_in}"
        )));
    }
    if amount_in.is_zero() {
        return Ok(SwapOutcome {
            amount_out: T::zero(),
            reserves: *r,
            curve: *curve,
        });
    }
    let effective = (T::one() - fee) * amount_in;
    let out_token = side.other();
    let available = r.get(out_token);
    let amount_out = match curve.kind {
        CurveKind::Product => {
            let reserve_in = r.get(side);
            available * effective / (reserve_in + effective)
        }
        CurveKind::Weighted { .. } => {
            let local = curve.rebased(r)?;
            match side {
                Token::X => available - local.ry_on_curve(r.rx + effective),
                Token::Y => available - local.rx_on_curve(r.ry + effective),
            }
        }
    };
    if !(amount_out < available) || amount_out < T::zero() {
        return Err(Error::SwapExceedsReserves {
            token: out_token,
            requested: amount_out.as_f64(),
            available: available.as_f64(),
        });
    }
    let mut reserves = *r;
    *reserves.get_mut(side) = reserves.get(side) + amount_in;
    *reserves.get_mut(out_token) = available - amount_out;
    let curve = curve.rebased(&reserves)?;
    Ok(SwapOutcome {
        amount_out,
        reserves,
        curve,
    })
}

/// Fee-free input needed to move `r` to price `eps`, or `None` if the
/// pool already sits there.
pub fn input_to_reach<T: Scalar>(
    curve: &PoolCurve<T>,
    r: &Reserves<T>,
    eps: T,
) -> Result<Option<(Token, T)>> {
    let arb = arb_target(curve, r, eps)?;
    Ok(if arb.delta_x > T::zero() {
        Some((Token::X, arb.delta_x))
    } else if arb.delta_y > T::zero() {
        Some((Token::Y, arb.delta_y))
    } else {
        None
    })
}
