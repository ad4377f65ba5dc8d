//! Floating-point scalar abstraction used by the protocol math.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the pool, vault and escrow arithmetic is written against.
///
/// Implemented for `f32` and `f64`. The simulation harness is f64 only.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an f64 literal. Panics only if the target type cannot hold it,
    /// which never happens for the finite constants used in this crate.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    /// Relative price tolerance for root finding: 1e-12, widened to a few
    /// ulps for narrow types.
    #[inline]
    fn solver_tol() -> Self {
        Self::lit(1e-12).max(Self::epsilon() * Self::lit(64.0))
    }

    /// Relative tolerance for "same monetary amount" comparisons.
    #[inline]
    fn money_tol() -> Self {
        Self::lit(1e-9).max(Self::epsilon() * Self::lit(256.0))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `|a - b| <= tol * max(|a|, |b|)`.
#[inline]
pub fn rel_eq<T: Scalar>(a: T, b: T, tol: T) -> bool {
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= tol * scale
}

/// Neumaier-compensated sum; order dependent but far less so than naive
/// summation, and bit-reproducible for a fixed input order.
pub fn compensated_sum<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_eq_handles_zero() {
        assert!(rel_eq(0.0_f64, 0.0, 1e-9));
        assert!(!rel_eq(0.0_f64, 1e-300, 1e-9));
        assert!(rel_eq(1.0_f64, 1.0 + 1e-12, 1e-9));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn tolerances_widen_for_f32() {
        assert_eq!(f64::solver_tol(), 1e-12);
        assert!(f32::solver_tol() > 1e-6);
    }
}
