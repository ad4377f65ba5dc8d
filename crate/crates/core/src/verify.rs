//! Acceptance checks, shared by the `verify` subcommand and the acceptance
//! test target. Each check returns a report instead of panicking.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block_engine::{BlockEngine, ExecutionReport, Order};
use crate::conversion::{
    settle_futures, AuctionModel, ConversionProcess, ExactPrice, FuturesPosition, SettlementMode,
    Side,
};
use crate::diamond::DiamondPool;
use crate::error::{Error, Result};
use crate::harness::{
    run_scenario, run_sweep, with_workers, ConversionMode, ScenarioConfig, SweepSpec, SweepVariable,
};
use crate::market_model::{gen_path, Calibration, NoisyOracle, PathParams};
use crate::pool_math::{input_to_reach, lvr, swap_exact_in, PoolCurve, Reserves, Token};

const VERIFY_SEED: u64 = 20_240_601;

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(
    id: u8,
    title: &'static str,
    f: impl FnOnce() -> Result<(bool, String)>,
) -> CriterionReport {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionReport {
        id,
        title,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

fn with_budget(mut r: CriterionReport, budget: Duration) -> CriterionReport {
    if r.elapsed > budget {
        r.passed = false;
        r.detail = format!("{}; over the {:.0}s budget", r.detail, budget.as_secs_f64());
    }
    r
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = crate::scalar::compensated_sum(xs.iter().copied()) / n;
    let var = crate::scalar::compensated_sum(xs.iter().map(|x| (x - mean).powi(2))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Arbitrage profit equals `(1 - beta) * LVR` on random product pools.
pub fn rebate_share() -> CriterionReport {
    let r = timed(1, "arbitrage profit is (1 - beta) LVR", || {
        let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED);
        let cases = 10_000;
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let rx = 10f64.powf(rng.random_range(0.0..9.0));
            let ry = 10f64.powf(rng.random_range(0.0..9.0));
            let beta = rng.random_range(0.05..0.95);
            let eps = rx / ry * rng.random_range(0.5..1.5);
            let mut pool = DiamondPool::product(rx, ry, beta, 1)?;
            let curve = pool.curve();
            let start = pool.reserves();
            let profit = pool.apply_arbitrage(eps)?.arb_profit;
            let want = (1.0 - beta) * lvr(&start, eps, &curve)?;
            worst = worst.max(rel_diff(profit, want));
        }
        Ok((
            worst <= 1e-9,
            format!("{cases} cases, worst relative error {worst:.2e} (tol 1e-9)"),
        ))
    });
    with_budget(r, Duration::from_secs(5))
}

/// Fair conversions have zero expected value change; haircuts lose and
/// premiums gain.
pub fn conversion_expectancy() -> CriterionReport {
    let r = timed(2, "fair conversion has zero expectancy", || {
        let params = PathParams {
            daily_move: 0.05,
            blocks_per_day: 10,
            days: 365,
            eps0: 1310.0,
            calibration: Calibration::PerBlock,
        };
        let paths = 30;
        // converting vs keeping the vault, marked one block later
        let pca = |auction: AuctionModel<f64>| -> Result<Vec<f64>> {
            let process = ConversionProcess::Pca { auction };
            let mut out = Vec::new();
            for id in 0..paths {
                let path = gen_path(&params, VERIFY_SEED, id)?;
                let mut pool = DiamondPool::product(1e8, 76336.0, 0.95, 10)?;
                for t in 1..path.eps.len() - 1 {
                    let block = pool.end_of_block(path.eps[t], &process, &mut ExactPrice)?;
                    if let Some(q) = block.conversion.auction {
                        let next = path.eps[t + 1];
                        out.push(match q.token {
                            Token::Y => q.clearing_bid - q.quantity * next,
                            Token::X => q.clearing_bid * next - q.quantity,
                        });
                    }
                }
            }
            Ok(out)
        };
        let cvf = || -> Result<Vec<f64>> {
            let process = ConversionProcess::Cvf {
                settlement: SettlementMode::BatchOracle,
            };
            let mut out = Vec::new();
            for id in 0..paths {
                let path = gen_path(&params, VERIFY_SEED, id)?;
                let mut pool = DiamondPool::product(1e8, 76336.0, 0.95, 10)?;
                let mut oracle =
                    NoisyOracle::new(0.01, crate::market_model::path_rng(VERIFY_SEED + 1, id))?;
                for &eps in &path.eps[1..] {
                    let block = pool.end_of_block(eps, &process, &mut oracle)?;
                    if block.conversion.settled > 0 {
                        out.push(block.conversion.transfer);
                    }
                }
            }
            Ok(out)
        };

        let fair = pca(AuctionModel::fair())?;
        let (m_fair, se_fair) = mean_se(&fair);
        let (m_cut, se_cut) = mean_se(&pca(AuctionModel::haircut(0.01)?)?);
        let (m_over, se_over) = mean_se(&pca(AuctionModel::premium(0.01)?)?);
        let pbc = cvf()?;
        let (m_pbc, se_pbc) = mean_se(&pbc);
        let ok = fair.len() >= 10_000
            && pbc.len() >= 10_000
            && m_fair.abs() <= 3.0 * se_fair
            && m_pbc.abs() <= 3.0 * se_pbc
            && m_cut < 0.0
            && m_over > 0.0;
        Ok((
            ok,
            format!(
                "auction n={} mean {m_fair:.4} (3SE {:.4}); oracle n={} mean {m_pbc:.4} (3SE {:.4}); \
                 haircut mean {m_cut:.4} (SE {se_cut:.4}); premium mean {m_over:.4} (SE {se_over:.4})",
                fair.len(),
                3.0 * se_fair,
                pbc.len(),
                3.0 * se_pbc,
            ),
        ))
    });
    with_budget(r, Duration::from_secs(30))
}

/// Every path of the base scenario ends above the CFMM, in both modes.
pub fn dominance() -> CriterionReport {
    let r = timed(3, "Diamond beats the CFMM on every path", || {
        let mut parts = Vec::new();
        let mut ok = true;
        for mode in [ConversionMode::Pca, ConversionMode::Cvf] {
            let cfg = ScenarioConfig {
                conversion_mode: mode,
                ..ScenarioConfig::default()
            };
            let out = run_scenario(&cfg)?;
            let wins = out
                .results
                .iter()
                .filter(|r| r.ratio_diamond_cfmm > 1.0)
                .count();
            let min = out
                .results
                .iter()
                .map(|r| r.ratio_diamond_cfmm)
                .fold(f64::INFINITY, f64::min);
            ok &= wins == out.results.len() && !out.results.is_empty();
            parts.push(format!(
                "{mode:?} {wins}/{} above 1 (min {min:.6}, {} liquidated)",
                out.results.len(),
                out.liquidated.len()
            ));
        }
        Ok((ok, parts.join("; ")))
    });
    with_budget(r, Duration::from_secs(120))
}

/// Daily-conversion mean lies in the band; weekly conversion is noisier.
pub fn conversion_frequency_stats() -> CriterionReport {
    timed(4, "conversion frequency statistics", || {
        let daily = run_scenario(&ScenarioConfig::default())?.summary;
        let weekly = run_scenario(&ScenarioConfig {
            tau_blocks: 70,
            ..ScenarioConfig::default()
        })?
        .summary;
        let ok =
            (1.005..=1.02).contains(&daily.mean_ratio) && weekly.std_ratio >= 2.0 * daily.std_ratio;
        Ok((
            ok,
            format!(
                "daily mean {:.6} std {:.6}; weekly mean {:.6} std {:.6} (ratio {:.2}, need >= 2)",
                daily.mean_ratio,
                daily.std_ratio,
                weekly.mean_ratio,
                weekly.std_ratio,
                weekly.std_ratio / daily.std_ratio
            ),
        ))
    })
}

/// Least-squares slope of `ys` on `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Cumulative CFMM LVR grows with the square of the daily move.
pub fn quadratic_lvr() -> CriterionReport {
    timed(5, "LVR is quadratic in volatility", || {
        let moves = [0.01, 0.02, 0.04, 0.08];
        let base = ScenarioConfig {
            n_paths: 200,
            ..ScenarioConfig::default()
        };
        let rows = run_sweep(
            &SweepSpec::new(SweepVariable::DailyMove, moves.to_vec())?,
            &base,
        )?;
        let xs: Vec<f64> = moves.iter().map(|m| m.ln()).collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|r| r.outcome.summary.mean_cfmm_lvr.ln())
            .collect();
        let s = slope(&xs, &ys);
        Ok((
            (1.8..=2.2).contains(&s),
            format!("log-log slope {s:.4} (band [1.8, 2.2])"),
        ))
    })
}

fn increasing(variable: SweepVariable, values: &[f64]) -> Result<(bool, String)> {
    let base = ScenarioConfig {
        n_paths: 200,
        ..ScenarioConfig::default()
    };
    let rows = run_sweep(&SweepSpec::new(variable, values.to_vec())?, &base)?;
    let means: Vec<f64> = rows.iter().map(|r| r.outcome.summary.mean_ratio).collect();
    let ok = means.windows(2).all(|w| w[1] > w[0]);
    let shown: Vec<String> = values
        .iter()
        .zip(&means)
        .map(|(v, m)| format!("{v}:{m:.7}"))
        .collect();
    Ok((ok, format!("{} {}", variable.name(), shown.join(" "))))
}

/// Mean ratio rises with beta, fee and horizon.
pub fn monotone_sweeps() -> CriterionReport {
    timed(6, "mean ratio increases in beta, fee and days", || {
        let mut ok = true;
        let mut parts = Vec::new();
        for (variable, values) in [
            (SweepVariable::Beta, &[0.25, 0.5, 0.75, 0.95][..]),
            (SweepVariable::Fee, &[0.0, 0.0005, 0.003, 0.01][..]),
            (SweepVariable::Days, &[90.0, 180.0, 365.0][..]),
        ] {
            let (pass, text) = increasing(variable, values)?;
            ok &= pass;
            parts.push(format!(
                "{}{}",
                if pass { "" } else { "NOT increasing: " },
                text
            ));
        }
        Ok((ok, parts.join("; ")))
    })
}

fn engine(beta: f64, fee: f64) -> Result<BlockEngine<f64>> {
    let pool = DiamondPool::product(100.0, 100.0, beta, 1)?;
    BlockEngine::new(pool, ConversionProcess::default())?.with_fee(fee)
}

fn random_orders(rng: &mut ChaCha8Rng) -> Result<Vec<Order<f64>>> {
    let n = rng.random_range(0..8);
    (0..n)
        .map(|_| {
            let side = if rng.random_bool(0.5) {
                Token::X
            } else {
                Token::Y
            };
            Order::user(side, rng.random_range(0.01..40.0))
        })
        .collect()
}

fn arb_to(e: &mut BlockEngine<f64>, eps: f64) -> Result<()> {
    let s = *e.session().ok_or(Error::NoOpenSession)?;
    if let Some((side, amount)) = input_to_reach(&s.curve, &s.current_reserves, eps)? {
        e.execute_order(&Order::arbitrageur(side, amount)?)?;
    }
    Ok(())
}

/// Path independence, escrow safety and exact CFMM pricing of user orders.
pub fn block_engine_properties() -> CriterionReport {
    timed(7, "block engine properties", || {
        let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED + 7);
        let trials = 2_000;
        let mut worst: f64 = 0.0;
        let mut short = 0;
        let mut mispriced = 0;
        for _ in 0..trials {
            let beta = rng.random_range(0.05..0.95);
            let eps = rng.random_range(0.6..1.6);

            let mut single = engine(beta, 0.0)?;
            single.unlock((1e9, 1e9))?;
            arb_to(&mut single, eps)?;
            let a = single.close_block(eps, &mut ExactPrice)?;
            let mut many = engine(beta, 0.0)?;
            many.unlock((1e9, 1e9))?;
            for o in random_orders(&mut rng)? {
                many.execute_order(&o)?;
            }
            arb_to(&mut many, eps)?;
            let b = many.close_block(eps, &mut ExactPrice)?;
            let (pa, pb) = (single.pool(), many.pool());
            for (x, y) in [
                (pa.reserves().rx, pb.reserves().rx),
                (pa.reserves().ry, pb.reserves().ry),
                (pa.vault().vx, pb.vault().vx),
                (pa.vault().vy, pb.vault().vy),
                (a.escrow.debit, b.escrow.debit),
                (a.escrow.skim, b.escrow.skim),
                (a.escrow.refund.0, b.escrow.refund.0),
                (a.escrow.refund.1, b.escrow.refund.1),
            ] {
                worst = worst.max(rel_diff(x, y));
            }

            let cx = rng.random_range(0.0..5.0);
            let cy = rng.random_range(0.0..5.0);
            let mut safe = engine(beta, 0.003)?;
            safe.unlock((cx, cy))?;
            for o in random_orders(&mut rng)? {
                let s = *safe.session().ok_or(Error::NoOpenSession)?;
                let want =
                    swap_exact_in(&s.curve, &s.current_reserves, o.amount_in, o.side, 0.003)?;
                if let ExecutionReport::Executed {
                    amount_out,
                    reserves,
                } = safe.execute_order(&o)?
                {
                    if amount_out.to_bits() != want.amount_out.to_bits()
                        || reserves != want.reserves
                    {
                        mispriced += 1;
                    }
                }
            }
            let s = *safe.session().ok_or(Error::NoOpenSession)?;
            let close_at = s.curve.price(&s.current_reserves)?;
            match safe.close_block(close_at, &mut ExactPrice) {
                Ok(c) => {
                    let posted = match c.escrow.owed_token {
                        Some(Token::X) => cx,
                        Some(Token::Y) => cy,
                        None => f64::INFINITY,
                    };
                    if c.escrow.debit > posted {
                        short += 1;
                    }
                }
                Err(Error::EscrowShortfall { .. }) => short += 1,
                Err(e) => return Err(e),
            }
        }
        let ok = worst <= 1e-9 && short == 0 && mispriced == 0;
        Ok((
            ok,
            format!(
                "{trials} trials: worst path difference {worst:.2e} (tol 1e-9), {short} short escrows, \
                 {mispriced} mispriced orders"
            ),
        ))
    })
}

/// Per-block structural invariants, generator properties and exact
/// settlement identities.
pub fn structural_invariants() -> CriterionReport {
    timed(8, "structural invariants", || {
        let mut failures = Vec::new();
        let params = PathParams {
            daily_move: 0.05,
            blocks_per_day: 10,
            days: 60,
            eps0: 1310.0,
            calibration: Calibration::PerBlock,
        };
        let mut worst_price: f64 = 0.0;
        let mut blocks = 0;
        for process in [
            ConversionProcess::default(),
            ConversionProcess::Cvf {
                settlement: SettlementMode::FuturesAuction,
            },
        ] {
            for id in 0..20 {
                let path = gen_path(&params, VERIFY_SEED, id)?;
                let mut pool = DiamondPool::product(1e8, 76336.0, 0.95, 10)?;
                for &eps in &path.eps[1..] {
                    let arb = pool.apply_arbitrage(eps)?;
                    worst_price = worst_price.max(rel_diff(pool.price()?, eps));
                    if !on_curve(&pool.curve(), &pool.reserves()) {
                        failures.push(format!("off curve on path {id}"));
                    }
                    pool.finish_block(arb, eps, &process, &mut ExactPrice)?;
                    if pool.vault().single().is_err() {
                        failures.push(format!("two-token vault on path {id}"));
                    }
                    if !on_curve(&pool.curve(), &pool.reserves()) {
                        failures.push(format!("off curve on path {id}"));
                    }
                    blocks += 1;
                }
            }
        }
        if worst_price > 1e-12 {
            failures.push(format!("price gap {worst_price:.2e}"));
        }

        let one_step = PathParams {
            daily_move: 0.05,
            blocks_per_day: 1,
            days: 1,
            eps0: 1.0,
            calibration: Calibration::FoldedNormal,
        };
        let draws: Vec<f64> = (0..100_000)
            .map(|i| gen_path(&one_step, VERIFY_SEED, i).map(|p| p.eps[1]))
            .collect::<Result<_>>()?;
        let (m, se) = mean_se(&draws);
        if (m - 1.0).abs() > 3.0 * se {
            failures.push(format!("martingale mean {m} (3SE {})", 3.0 * se));
        }
        if gen_path(&params, 5, 3)? != gen_path(&params, 5, 3)? {
            failures.push("path generator not deterministic".into());
        }
        let cfg = ScenarioConfig {
            days: 30,
            n_paths: 16,
            ..ScenarioConfig::default()
        };
        let one = with_workers(Some(1), || run_scenario(&cfg))??;
        let four = with_workers(Some(4), || run_scenario(&cfg))??;
        if one != four {
            failures.push("scenario output depends on worker count".into());
        }

        let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED + 8);
        let tol = 4.0 * f64::EPSILON;
        let mut worst_id: f64 = 0.0;
        for _ in 0..10_000 {
            let token = if rng.random_bool(0.5) {
                Token::X
            } else {
                Token::Y
            };
            let side = if rng.random_bool(0.5) {
                Side::Long
            } else {
                Side::Short
            };
            let strike = rng.random_range(0.1..10.0);
            let pos = FuturesPosition::new(rng.random_range(0.1..100.0), token, strike, side, 0)?;
            let p_t = strike * rng.random_range(0.5..1.5);
            let s = settle_futures(&pos, p_t)?;
            let pnl = pos.pnl(p_t);
            worst_id = worst_id
                .max(rel_diff(s.s_x, s.s_y * p_t))
                .max(rel_diff(s.s_x + s.s_y * p_t, pnl));
        }
        if worst_id > tol {
            failures.push(format!("settlement identity error {worst_id:.2e}"));
        }

        failures.dedup();
        let ok = failures.is_empty();
        let detail = if ok {
            format!(
                "{blocks} blocks checked, price gap {worst_price:.2e}, martingale mean {m:.5} (3SE {:.5}), \
                 settlement identity error {worst_id:.1e}",
                3.0 * se
            )
        } else {
            failures.join("; ")
        };
        Ok((ok, detail))
    })
}

fn on_curve(curve: &PoolCurve<f64>, r: &Reserves<f64>) -> bool {
    PoolCurve::through(curve.kind, r).is_ok_and(|c| rel_diff(c.k, curve.k) <= 1e-12)
        && curve.contains(r)
}

pub type Check = fn() -> CriterionReport;

pub const ALL: [Check; 8] = [
    rebate_share,
    conversion_expectancy,
    dominance,
    conversion_frequency_stats,
    quadratic_lvr,
    monotone_sweeps,
    block_engine_properties,
    structural_invariants,
];

pub fn run_all() -> Vec<CriterionReport> {
    ALL.iter().map(|check| check()).collect()
}
