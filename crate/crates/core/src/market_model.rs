//! Stochastic environment for the simulations: martingale price paths,
//! the benchmark CFMM and HODL portfolios, matched retail flow, noisy
//! settlement oracles and a first-price auction model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::conversion::PriceSource;
use crate::diamond::DiamondPool;
use crate::error::{Error, Result};
use crate::pool_math::{arb_target, swap_exact_in, PoolCurve, Reserves, Token};

/// RNG for one path: the master seed picks the key, the path index picks
/// the stream, so paths are independent of scheduling.
pub fn path_rng(master_seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_id);
    rng
}

/// How the daily move maps to the per-block log-return deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Calibration {
    /// `s = daily_move / blocks_per_day`.
    #[default]
    PerBlock,
    /// Mean absolute daily return equals `daily_move`:
    /// `s = daily_move * sqrt(pi / 2) / sqrt(blocks_per_day)`.
    FoldedNormal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathParams {
    pub daily_move: f64,
    pub blocks_per_day: u32,
    pub days: u32,
    pub eps0: f64,
    pub calibration: Calibration,
}

impl PathParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.daily_move >= 0.0 && self.daily_move.is_finite()) {
            return Err(Error::param(format!(
                "daily move must be non-negative, got {}",
                self.daily_move
            )));
        }
        if self.blocks_per_day == 0 || self.days == 0 {
            return Err(Error::param("blocks per day and days must be at least 1"));
        }
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return Err(Error::param(format!(
                "starting price must be positive, got {}",
                self.eps0
            )));
        }
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        self.blocks_per_day as usize * self.days as usize
    }

    pub fn block_sigma(&self) -> f64 {
        let bpd = f64::from(self.blocks_per_day);
        match self.calibration {
            Calibration::PerBlock => self.daily_move / bpd,
            Calibration::FoldedNormal => {
                self.daily_move * std::f64::consts::FRAC_PI_2.sqrt() / bpd.sqrt()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PricePath {
    /// `blocks + 1` prices starting at `eps0`.
    pub eps: Vec<f64>,
    pub master_seed: u64,
    pub path_id: u64,
}

impl PricePath {
    pub fn last(&self) -> f64 {
        *self.eps.last().expect("path has at least one price")
    }
}

/// Lognormal martingale: each block multiplies by `exp(z)` with
/// `z ~ N(-s^2/2, s^2)`.
pub fn gen_path(params: &PathParams, master_seed: u64, path_id: u64) -> Result<PricePath> {
    params.validate()?;
    let n = params.blocks();
    let s = params.block_sigma();
    let mut eps = Vec::with_capacity(n + 1);
    eps.push(params.eps0);
    if s == 0.0 {
        eps.resize(n + 1, params.eps0);
    } else {
        let dist = Normal::new(-0.5 * s * s, s).map_err(|e| Error::param(e.to_string()))?;
        let mut rng = path_rng(master_seed, path_id);
        let mut p = params.eps0;
        for _ in 0..n {
            p *= dist.sample(&mut rng).exp();
            eps.push(p);
        }
    }
    Ok(PricePath {
        eps,
        master_seed,
        path_id,
    })
}

/// Settlement price source with multiplicative mean-one lognormal error.
#[derive(Clone, Debug)]
pub struct NoisyOracle {
    sigma: f64,
    rng: ChaCha8Rng,
}

impl NoisyOracle {
    pub fn new(sigma: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::param(format!(
                "oracle noise must be non-negative, got {sigma}"
            )));
        }
        Ok(Self { sigma, rng })
    }
}

impl PriceSource<f64> for NoisyOracle {
    fn quote(&mut self, eps: f64) -> f64 {
        if self.sigma == 0.0 {
            return eps;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        eps * (self.sigma * z - 0.5 * self.sigma * self.sigma).exp()
    }
}

/// Plain CFMM benchmark and the HODL snapshot it started from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchmarkState {
    pub curve: PoolCurve<f64>,
    pub reserves: Reserves<f64>,
    pub hodl: Reserves<f64>,
}

impl BenchmarkState {
    pub fn new(reserves: Reserves<f64>) -> Result<Self> {
        let reserves = Reserves::new(reserves.rx, reserves.ry)?;
        Ok(Self {
            curve: PoolCurve::product(reserves.rx * reserves.ry)?,
            reserves,
            hodl: reserves,
        })
    }

    /// Moves the CFMM to its optimal state at `eps`; returns the LVR.
    pub fn arbitrage(&mut self, eps: f64) -> Result<f64> {
        let arb = arb_target(&self.curve, &self.reserves, eps)?;
        self.reserves = arb.target;
        Ok(arb.lvr)
    }

    pub fn swap(&mut self, amount_in: f64, side: Token, fee: f64) -> Result<f64> {
        let out = swap_exact_in(&self.curve, &self.reserves, amount_in, side, fee)?;
        self.reserves = out.reserves;
        self.curve = out.curve;
        Ok(out.amount_out)
    }

    pub fn cfmm_value(&self, eps: f64) -> f64 {
        self.reserves.value_at(eps)
    }

    pub fn hodl_value(&self, eps: f64) -> f64 {
        hodl_value(&self.hodl, eps)
    }
}

pub fn hodl_value(hodl: &Reserves<f64>, eps_t: f64) -> f64 {
    hodl.rx + hodl.ry * eps_t
}

/// Arbitrageur action on a Diamond pool: the optimal end-of-block move.
pub fn arb_agent(
    pool: &mut DiamondPool<f64>,
    eps: f64,
) -> Result<crate::diamond::BlockResult<f64>> {
    pool.apply_arbitrage(eps)
}

/// Anything retail orders can trade against.
pub trait RetailVenue {
    fn reserves(&self) -> Reserves<f64>;
    fn swap(&mut self, amount_in: f64, side: Token, fee: f64) -> Result<f64>;
}

impl RetailVenue for BenchmarkState {
    fn reserves(&self) -> Reserves<f64> {
        self.reserves
    }

    fn swap(&mut self, amount_in: f64, side: Token, fee: f64) -> Result<f64> {
        BenchmarkState::swap(self, amount_in, side, fee)
    }
}

impl RetailVenue for DiamondPool<f64> {
    fn reserves(&self) -> Reserves<f64> {
        DiamondPool::reserves(self)
    }

    fn swap(&mut self, amount_in: f64, side: Token, fee: f64) -> Result<f64> {
        DiamondPool::swap(self, amount_in, side, fee)
    }
}

/// Price-neutral retail flow: each block a trader sells `volume / 2` worth
/// of x for y, then sells the y received back for x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetailFlow {
    pub daily_turnover_fraction: f64,
    pub blocks_per_day: u32,
    /// Largest leg as a fraction of the input-side reserve.
    pub max_leg_fraction: f64,
}

impl RetailFlow {
    pub const DEFAULT_TURNOVER: f64 = 0.10;

    pub fn new(daily_turnover_fraction: f64, blocks_per_day: u32) -> Result<Self> {
        if !(daily_turnover_fraction >= 0.0 && daily_turnover_fraction.is_finite()) {
            return Err(Error::param(format!(
                "turnover must be non-negative, got {daily_turnover_fraction}"
            )));
        }
        if blocks_per_day == 0 {
            return Err(Error::param("blocks per day must be at least 1"));
        }
        Ok(Self {
            daily_turnover_fraction,
            blocks_per_day,
            max_leg_fraction: 0.1,
        })
    }

    /// Traded value per block, in x units, for a pool of value `tvl`.
    pub fn block_volume(&self, tvl: f64) -> f64 {
        self.daily_turnover_fraction * tvl / f64::from(self.blocks_per_day)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RetailOutcome {
    /// Change in reserve value at the pre-trade pool price.
    pub fee_revenue: f64,
    pub capped: bool,
}

/// One block of retail flow sized on the venue's own reserve value.
pub fn apply_retail_flow<V: RetailVenue>(
    venue: &mut V,
    flow: &RetailFlow,
    fee: f64,
) -> Result<RetailOutcome> {
    let r0 = venue.reserves();
    let volume = flow.block_volume(r0.value_at(r0.rx / r0.ry));
    apply_retail_volume(venue, volume, flow.max_leg_fraction, fee)
}

/// Matched buy and sell legs of `volume / 2` each, in x units. A leg above
/// `max_leg_fraction` of the x reserve is capped.
pub fn apply_retail_volume<V: RetailVenue>(
    venue: &mut V,
    volume: f64,
    max_leg_fraction: f64,
    fee: f64,
) -> Result<RetailOutcome> {
    if !(0.0..1.0).contains(&fee) {
        return Err(Error::param(format!("fee must lie in [0, 1), got {fee}")));
    }
    if !(volume >= 0.0 && volume.is_finite()) {
        return Err(Error::param(format!(
            "retail volume must be non-negative, got {volume}"
        )));
    }
    if volume == 0.0 {
        return Ok(RetailOutcome::default());
    }
    let r0 = venue.reserves();
    let p = r0.rx / r0.ry;
    let mut leg = volume / 2.0;
    let cap = max_leg_fraction * r0.rx;
    let capped = leg > cap;
    if capped {
        leg = cap;
    }
    let got_y = venue.swap(leg, Token::X, fee)?;
    venue.swap(got_y, Token::Y, fee)?;
    let r1 = venue.reserves();
    Ok(RetailOutcome {
        fee_revenue: r1.value_at(p) - r0.value_at(p),
        capped,
    })
}

/// Symmetric first-price sealed-bid auction with private values uniform on
/// `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstPriceAuction {
    pub bidders: u32,
    pub lo: f64,
    pub hi: f64,
}

impl FirstPriceAuction {
    pub fn new(bidders: u32, lo: f64, hi: f64) -> Result<Self> {
        if bidders < 2 {
            return Err(Error::param("an auction needs at least two bidders"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::param(format!("value range [{lo}, {hi}] is empty")));
        }
        Ok(Self { bidders, lo, hi })
    }

    /// Bayes-Nash equilibrium bid for private value `v`.
    pub fn equilibrium_bid(&self, v: f64) -> f64 {
        let n = f64::from(self.bidders);
        self.lo + (n - 1.0) / n * (v - self.lo)
    }

    pub fn expected_revenue(&self) -> f64 {
        let n = f64::from(self.bidders);
        self.lo + (n - 1.0) / (n + 1.0) * (self.hi - self.lo)
    }

    /// Draws values and returns the winning equilibrium bid.
    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let dist = Uniform::new(self.lo, self.hi).expect("range checked on construction");
        let top = (0..self.bidders)
            .map(|_| dist.sample(rng))
            .fold(f64::MIN, f64::max);
        self.equilibrium_bid(top)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(daily_move: f64, bpd: u32, days: u32, calibration: Calibration) -> PathParams {
        PathParams {
            daily_move,
            blocks_per_day: bpd,
            days,
            eps0: 1.0,
            calibration,
        }
    }

    #[test]
    fn zero_move_is_constant() {
        let p = gen_path(&params(0.0, 10, 5, Calibration::PerBlock), 1, 0).unwrap();
        assert_eq!(p.eps.len(), 51);
        assert!(p.eps.iter().all(|&e| e == 1.0));
    }

    #[test]
    fn invalid_params() {
        assert!(gen_path(&params(-0.1, 10, 5, Calibration::PerBlock), 1, 0).is_err());
        assert!(gen_path(&params(0.1, 0, 5, Calibration::PerBlock), 1, 0).is_err());
        assert!(gen_path(&params(0.1, 10, 0, Calibration::PerBlock), 1, 0).is_err());
    }

    #[test]
    fn one_step_martingale() {
        let pp = params(0.05, 1, 1, Calibration::FoldedNormal);
        let n = 100_000u64;
        let xs: Vec<f64> = (0..n)
            .map(|i| gen_path(&pp, 7, i).unwrap().eps[1])
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn folded_normal_calibration() {
        let pp = params(0.05, 10, 10_000, Calibration::FoldedNormal);
        let path = gen_path(&pp, 11, 0).unwrap();
        let daily: Vec<f64> = path.eps.iter().step_by(10).copied().collect();
        let mean_abs = daily
            .windows(2)
            .map(|w| (w[1] / w[0] - 1.0).abs())
            .sum::<f64>()
            / (daily.len() - 1) as f64;
        assert!(
            (mean_abs / 0.05 - 1.0).abs() < 0.05,
            "mean |daily return| {mean_abs}"
        );
    }

    #[test]
    fn per_block_sigma() {
        assert_eq!(
            params(0.05, 10, 1, Calibration::PerBlock).block_sigma(),
            0.005
        );
    }

    #[test]
    fn paths_are_deterministic_and_distinct() {
        let pp = params(0.05, 10, 30, Calibration::PerBlock);
        let a = gen_path(&pp, 3, 4).unwrap();
        let b = gen_path(&pp, 3, 4).unwrap();
        let c = gen_path(&pp, 3, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.eps, c.eps);
        assert!(a.eps.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn benchmark_arbitrage_example() {
        let mut b = BenchmarkState::new(Reserves {
            rx: 100.0,
            ry: 100.0,
        })
        .unwrap();
        let lvr = b.arbitrage(1.21).unwrap();
        assert!((b.reserves.rx - 110.0).abs() < 1e-9);
        assert!((b.reserves.ry - 90.909091).abs() < 1e-6);
        assert!((lvr - 1.0).abs() < 1e-12);
        assert_eq!(b.arbitrage(1.21).unwrap(), 0.0);
    }

    #[test]
    fn diamond_arb_agent_example() {
        let mut pool = DiamondPool::product(100.0, 100.0, 0.95, 1).unwrap();
        arb_agent(&mut pool, 1.21).unwrap();
        assert!((pool.reserves().rx - 100.5).abs() < 1e-9);
        assert!((pool.reserves().ry - 83.057851).abs() < 1e-6);
        assert!(!pool.vault().is_empty());
    }

    #[test]
    fn hodl_examples() {
        assert!(
            (hodl_value(
                &Reserves {
                    rx: 100.0,
                    ry: 100.0
                },
                1.31
            ) - 231.0)
                .abs()
                < 1e-12
        );
        assert_eq!(hodl_value(&Reserves { rx: 0.0, ry: 5.0 }, 2.0), 10.0);
        let b = BenchmarkState::new(Reserves {
            rx: 1e8,
            ry: 76336.0,
        })
        .unwrap();
        let eps0 = 1e8 / 76336.0;
        assert_eq!(b.hodl_value(eps0), b.cfmm_value(eps0));
    }

    #[test]
    fn retail_fee_revenue_example() {
        let mut b = BenchmarkState::new(Reserves {
            rx: 100.0,
            ry: 100.0,
        })
        .unwrap();
        // TVL 200 and 10 blocks per day with 10% turnover gives volume 2
        let flow = RetailFlow::new(0.1, 10).unwrap();
        let out = apply_retail_flow(&mut b, &flow, 0.003).unwrap();
        assert!(
            (out.fee_revenue - 0.006).abs() < 1e-4,
            "{}",
            out.fee_revenue
        );
        assert!(!out.capped);
    }

    #[test]
    fn retail_without_fee_is_neutral() {
        let start = Reserves {
            rx: 100.0,
            ry: 80.0,
        };
        let mut b = BenchmarkState::new(start).unwrap();
        let flow = RetailFlow::new(0.1, 10).unwrap();
        apply_retail_flow(&mut b, &flow, 0.0).unwrap();
        assert!((b.reserves.rx - start.rx).abs() < 1e-9 * start.rx);
        assert!((b.reserves.ry - start.ry).abs() < 1e-9 * start.ry);

        let mut idle = BenchmarkState::new(start).unwrap();
        let none = RetailFlow::new(0.0, 10).unwrap();
        assert_eq!(
            apply_retail_flow(&mut idle, &none, 0.003).unwrap(),
            RetailOutcome::default()
        );
        assert_eq!(idle.reserves, start);
    }

    #[test]
    fn retail_cap_counts() {
        let mut b = BenchmarkState::new(Reserves {
            rx: 100.0,
            ry: 100.0,
        })
        .unwrap();
        let flow = RetailFlow::new(5.0, 1).unwrap();
        assert!(apply_retail_flow(&mut b, &flow, 0.003).unwrap().capped);
        assert!(apply_retail_flow(&mut b, &flow, 1.0).is_err());
    }

    #[test]
    fn noisy_oracle_is_unbiased() {
        let mut o = NoisyOracle::new(0.01, path_rng(5, 0)).unwrap();
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| o.quote(2.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 2.0).abs() <= 3.0 * sd / (n as f64).sqrt());
        let mut exact = NoisyOracle::new(0.0, path_rng(5, 0)).unwrap();
        assert_eq!(exact.quote(2.0), 2.0);
    }

    #[test]
    fn first_price_auction() {
        let a = FirstPriceAuction::new(4, 1.0, 2.0).unwrap();
        assert!((a.equilibrium_bid(2.0) - 1.75).abs() < 1e-12);
        assert!((a.expected_revenue() - 1.6).abs() < 1e-12);
        let mut rng = path_rng(9, 0);
        let n = 40_000;
        let mean = (0..n).map(|_| a.run(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.6).abs() < 0.005);
        assert!(FirstPriceAuction::new(1, 0.0, 1.0).is_err());
    }
}
