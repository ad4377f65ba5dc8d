//! Monte Carlo runner: scenario configuration, per-path simulation of the
//! Diamond pool against the CFMM and HODL benchmarks, sweeps and CSV output.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conversion::{AuctionModel, ConversionProcess, SettlementMode};
use crate::diamond::DiamondPool;
use crate::error::{Error, Result};
use crate::market_model::{
    apply_retail_flow, gen_path, path_rng, BenchmarkState, Calibration, NoisyOracle, PathParams,
    PricePath, RetailFlow,
};
use crate::pool_math::Reserves;
use crate::scalar::compensated_sum;

/// Offset between the price-path and oracle RNG keys of the same path.
const ORACLE_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConversionMode {
    #[default]
    Pca,
    Cvf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub beta: f64,
    pub tau_blocks: u64,
    pub blocks_per_day: u32,
    pub days: u32,
    pub n_paths: u64,
    pub daily_move: f64,
    pub fee: f64,
    pub conversion_mode: ConversionMode,
    pub settlement_mode: SettlementMode,
    pub auction_haircut: f64,
    pub rx0: f64,
    pub ry0: f64,
    pub eps0: f64,
    pub master_seed: u64,
    pub calibration: Calibration,
    /// Lognormal error of the batch oracle; 0 is an exact oracle.
    pub oracle_noise: f64,
    pub retail_turnover: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            beta: 0.95,
            tau_blocks: 10,
            blocks_per_day: 10,
            days: 365,
            n_paths: 500,
            daily_move: 0.05,
            fee: 0.0,
            conversion_mode: ConversionMode::Pca,
            settlement_mode: SettlementMode::FuturesAuction,
            auction_haircut: 0.0,
            rx0: 1e8,
            ry0: 76336.0,
            eps0: 1310.0,
            master_seed: 42,
            calibration: Calibration::PerBlock,
            oracle_noise: 0.0,
            retail_turnover: RetailFlow::DEFAULT_TURNOVER,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.tau_blocks == 0 {
            return bad("tau_blocks must be at least 1".into());
        }
        if self.blocks_per_day == 0 || self.days == 0 {
            return bad("blocks_per_day and days must be at least 1".into());
        }
        if !(self.daily_move >= 0.0 && self.daily_move.is_finite()) {
            return bad(format!(
                "daily_move must be non-negative, got {}",
                self.daily_move
            ));
        }
        if !(0.0..1.0).contains(&self.fee) {
            return bad(format!("fee must lie in [0, 1), got {}", self.fee));
        }
        if !(0.0..1.0).contains(&self.auction_haircut) {
            return bad(format!(
                "auction_haircut must lie in [0, 1), got {}",
                self.auction_haircut
            ));
        }
        for (name, v) in [("rx0", self.rx0), ("ry0", self.ry0), ("eps0", self.eps0)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.oracle_noise >= 0.0 && self.oracle_noise.is_finite()) {
            return bad(format!(
                "oracle_noise must be non-negative, got {}",
                self.oracle_noise
            ));
        }
        if !(self.retail_turnover >= 0.0 && self.retail_turnover.is_finite()) {
            return bad(format!(
                "retail_turnover must be non-negative, got {}",
                self.retail_turnover
            ));
        }
        Ok(())
    }

    pub fn path_params(&self) -> PathParams {
        PathParams {
            daily_move: self.daily_move,
            blocks_per_day: self.blocks_per_day,
            days: self.days,
            eps0: self.eps0,
            calibration: self.calibration,
        }
    }

    pub fn process(&self) -> Result<ConversionProcess<f64>> {
        Ok(match self.conversion_mode {
            ConversionMode::Pca => ConversionProcess::Pca {
                auction: AuctionModel::haircut(self.auction_haircut)?,
            },
            ConversionMode::Cvf => ConversionProcess::Cvf {
                settlement: self.settlement_mode,
            },
        })
    }
}

/// Horizon metrics of one simulated path. Field order is the CSV column order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathResult {
    pub path_id: u64,
    pub final_eps: f64,
    pub v_cfmm: f64,
    pub v_diamond: f64,
    pub v_hodl: f64,
    pub ratio_diamond_cfmm: f64,
    pub ratio_hodl_cfmm: f64,
    pub cumulative_cfmm_lvr: f64,
    pub cumulative_rebate: f64,
}

pub const CSV_HEADER: [&str; 9] = [
    "path_id",
    "final_eps",
    "v_cfmm",
    "v_diamond",
    "v_hodl",
    "ratio_diamond_cfmm",
    "ratio_hodl_cfmm",
    "cumulative_cfmm_lvr",
    "cumulative_rebate",
];

/// Side information gathered while simulating a path.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PathAudit {
    /// Largest per-block accounting residual relative to pool value.
    pub max_closure_residual: f64,
    pub retail_capped: u64,
    pub conversions: u64,
}

pub fn run_path(cfg: &ScenarioConfig, path_id: u64) -> Result<PathResult> {
    let path = gen_path(&cfg.path_params(), cfg.master_seed, path_id)?;
    run_on_path(cfg, &path).map(|(r, _)| r)
}

/// Simulates `path` under `cfg`; every block runs the benchmark and Diamond
/// arbitrage, retail flow when the fee is positive, then the vault logic.
pub fn run_on_path(cfg: &ScenarioConfig, path: &PricePath) -> Result<(PathResult, PathAudit)> {
    cfg.validate()?;
    let start = Reserves::new(cfg.rx0, cfg.ry0)?;
    let mut bench = BenchmarkState::new(start)?;
    let mut pool = DiamondPool::product(cfg.rx0, cfg.ry0, cfg.beta, cfg.tau_blocks)?;
    let process = cfg.process()?;
    let mut oracle = NoisyOracle::new(
        cfg.oracle_noise,
        path_rng(cfg.master_seed ^ ORACLE_KEY, path.path_id),
    )?;
    let flow = RetailFlow::new(cfg.retail_turnover, cfg.blocks_per_day)?;
    let retail = cfg.fee > 0.0 && cfg.retail_turnover > 0.0;

    let mut cfmm_lvr = Vec::with_capacity(path.eps.len());
    let mut rebates = Vec::with_capacity(path.eps.len());
    let mut audit = PathAudit::default();
    for &eps in &path.eps[1..] {
        let v_before = pool.value_at(eps);
        cfmm_lvr.push(bench.arbitrage(eps)?);
        let arb = pool.apply_arbitrage(eps)?;
        rebates.push(arb.rebate());
        let mut fee_income = 0.0;
        if retail {
            let c = apply_retail_flow(&mut bench, &flow, cfg.fee)?;
            let d = apply_retail_flow(&mut pool, &flow, cfg.fee)?;
            fee_income = d.fee_revenue;
            audit.retail_capped += u64::from(c.capped) + u64::from(d.capped);
        }
        let block = pool.finish_block(arb, eps, &process, &mut oracle)?;
        let v_after = pool.value_at(eps);
        if block.conversion.auction.is_some() || block.conversion.settled > 0 {
            audit.conversions += 1;
        }
        let residual =
            (v_after - v_before) + block.arb_profit - block.conversion.transfer - fee_income;
        audit.max_closure_residual = audit
            .max_closure_residual
            .max(residual.abs() / v_after.abs());
    }

    let final_eps = path.last();
    let v_cfmm = bench.cfmm_value(final_eps);
    let v_diamond = pool.value_at(final_eps);
    let v_hodl = bench.hodl_value(final_eps);
    let result = PathResult {
        path_id: path.path_id,
        final_eps,
        v_cfmm,
        v_diamond,
        v_hodl,
        ratio_diamond_cfmm: v_diamond / v_cfmm,
        ratio_hodl_cfmm: v_hodl / v_cfmm,
        cumulative_cfmm_lvr: compensated_sum(cfmm_lvr),
        cumulative_rebate: compensated_sum(rebates),
    };
    Ok((result, audit))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean_ratio: f64,
    /// Sample standard deviation; 0 for a single path.
    pub std_ratio: f64,
    pub mean_hodl_ratio: f64,
    pub mean_cfmm_lvr: f64,
    pub mean_rebate: f64,
}

impl Summary {
    pub fn of(results: &[PathResult]) -> Self {
        let n = results.len();
        if n == 0 {
            return Self::default();
        }
        let nf = n as f64;
        let mean = |f: fn(&PathResult) -> f64| compensated_sum(results.iter().map(f)) / nf;
        let mean_ratio = mean(|r| r.ratio_diamond_cfmm);
        let std_ratio = if n > 1 {
            let ss = compensated_sum(
                results
                    .iter()
                    .map(|r| (r.ratio_diamond_cfmm - mean_ratio).powi(2)),
            );
            (ss / (nf - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            n,
            mean_ratio,
            std_ratio,
            mean_hodl_ratio: mean(|r| r.ratio_hodl_cfmm),
            mean_cfmm_lvr: mean(|r| r.cumulative_cfmm_lvr),
            mean_rebate: mean(|r| r.cumulative_rebate),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOutcome {
    /// Completed paths, ordered by `path_id`.
    pub results: Vec<PathResult>,
    /// Paths dropped because the pool could not cover a futures settlement.
    pub liquidated: Vec<u64>,
    pub retail_capped: u64,
    /// Largest per-block accounting residual over all paths.
    pub max_closure_residual: f64,
    pub summary: Summary,
}

/// Runs `f` on a dedicated pool of `workers` threads, or the global pool.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::Config("workers must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let params = cfg.path_params();
    let outcomes: Vec<(u64, Result<(PathResult, PathAudit)>)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|id| {
            (
                id,
                gen_path(&params, cfg.master_seed, id).and_then(|p| run_on_path(cfg, &p)),
            )
        })
        .collect();

    let mut results = Vec::with_capacity(outcomes.len());
    let mut liquidated = Vec::new();
    let mut retail_capped = 0;
    let mut max_closure_residual: f64 = 0.0;
    for (id, outcome) in outcomes {
        match outcome {
            Ok((r, audit)) => {
                retail_capped += audit.retail_capped;
                max_closure_residual = max_closure_residual.max(audit.max_closure_residual);
                results.push(r);
            }
            Err(Error::Liquidation { .. }) => liquidated.push(id),
            Err(e) => return Err(e),
        }
    }
    let summary = Summary::of(&results);
    Ok(ScenarioOutcome {
        results,
        liquidated,
        retail_capped,
        max_closure_residual,
        summary,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Beta,
    DailyMove,
    Tau,
    Fee,
    Days,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Beta => "beta",
            SweepVariable::DailyMove => "daily_move",
            SweepVariable::Tau => "tau",
            SweepVariable::Fee => "fee",
            SweepVariable::Days => "days",
        }
    }
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "beta" => SweepVariable::Beta,
            "daily_move" => SweepVariable::DailyMove,
            "tau" => SweepVariable::Tau,
            "fee" => SweepVariable::Fee,
            "days" => SweepVariable::Days,
            other => return Err(Error::Config(format!("unknown sweep variable {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn new(variable: SweepVariable, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        Ok(Self { variable, values })
    }

    /// `base` with the swept variable set to `value`.
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let whole = |v: f64| -> Result<u64> {
            if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as u64)
            } else {
                Err(Error::Config(format!(
                    "{} needs a positive whole number, got {v}",
                    self.variable.name()
                )))
            }
        };
        let mut cfg = base.clone();
        match self.variable {
            SweepVariable::Beta => cfg.beta = value,
            SweepVariable::DailyMove => cfg.daily_move = value,
            SweepVariable::Tau => cfg.tau_blocks = whole(value)?,
            SweepVariable::Fee => cfg.fee = value,
            SweepVariable::Days => cfg.days = whole(value)? as u32,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: ScenarioOutcome,
}

/// One scenario per swept value, all sharing the base master seed so paths
/// differ only through the swept variable.
pub fn run_sweep(spec: &SweepSpec, base: &ScenarioConfig) -> Result<Vec<SweepRow>> {
    spec.values
        .iter()
        .map(|&value| {
            let cfg = spec.apply(base, value)?;
            Ok(SweepRow {
                value,
                outcome: run_scenario(&cfg)?,
            })
        })
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

/// Header then one row per result, in the order given.
pub fn emit_csv(results: &[PathResult], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in results {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const SWEEP_CSV_HEADER: [&str; 9] = [
    "variable",
    "value",
    "n_paths",
    "liquidations",
    "mean_ratio_diamond_cfmm",
    "std_ratio_diamond_cfmm",
    "mean_ratio_hodl_cfmm",
    "mean_cumulative_cfmm_lvr",
    "mean_cumulative_rebate",
];

/// One summary row per swept value.
pub fn emit_sweep_csv(variable: SweepVariable, rows: &[SweepRow], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(SWEEP_CSV_HEADER).map_err(csv_err)?;
    for row in rows {
        let s = &row.outcome.summary;
        w.serialize((
            variable.name(),
            row.value,
            s.n,
            row.outcome.liquidated.len(),
            s.mean_ratio,
            s.std_ratio,
            s.mean_hodl_ratio,
            s.mean_cfmm_lvr,
            s.mean_rebate,
        ))
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
