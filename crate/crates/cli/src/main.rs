use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diamond_amm::conversion::SettlementMode;
use diamond_amm::error::Result;
use diamond_amm::harness::{
    emit_csv, emit_sweep_csv, run_scenario, run_sweep, with_workers, ConversionMode,
    ScenarioConfig, ScenarioOutcome, SweepSpec, SweepVariable,
};
use diamond_amm::verify;

#[derive(Parser)]
#[command(
    name = "diamond-sim",
    version,
    about = "Monte Carlo simulator for Diamond pools versus a plain CFMM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and optionally write per-path results.
    Run(RunArgs),
    /// Run one scenario per value of a swept parameter.
    Sweep(SweepArgs),
    /// Run the acceptance checks.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Pca,
    Cvf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Settlement {
    Auction,
    Oracle,
}

#[derive(Args)]
struct ScenarioArgs {
    /// TOML scenario file; missing keys take the base defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    settlement: Option<Settlement>,
}

impl ScenarioArgs {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(mode) = self.mode {
            cfg.conversion_mode = match mode {
                Mode::Pca => ConversionMode::Pca,
                Mode::Cvf => ConversionMode::Cvf,
            };
        }
        if let Some(s) = self.settlement {
            cfg.settlement_mode = match s {
                Settlement::Auction => SettlementMode::FuturesAuction,
                Settlement::Oracle => SettlementMode::BatchOracle,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// beta, daily_move, tau, fee or days.
    #[arg(long)]
    variable: SweepVariable,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run only these criteria (1-8); repeatable.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    criterion: Vec<u8>,
    #[arg(long)]
    workers: Option<usize>,
}

fn print_outcome(label: &str, out: &ScenarioOutcome) {
    let s = &out.summary;
    println!(
        "{label}paths {} mean_ratio {:.8} std_ratio {:.8} mean_hodl_ratio {:.8} mean_cfmm_lvr {:.6} liquidations {}",
        s.n,
        s.mean_ratio,
        s.std_ratio,
        s.mean_hodl_ratio,
        s.mean_cfmm_lvr,
        out.liquidated.len()
    );
    if out.retail_capped > 0 {
        eprintln!("warning: {} retail legs were capped", out.retail_capped);
    }
}

fn run(args: RunArgs) -> Result<bool> {
    let cfg = args.scenario.config()?;
    let out = with_workers(args.scenario.workers, || run_scenario(&cfg))??;
    print_outcome("", &out);
    if let Some(path) = &args.scenario.out {
        emit_csv(&out.results, path)?;
    }
    Ok(out.liquidated.is_empty())
}

fn sweep(args: SweepArgs) -> Result<bool> {
    let base = args.scenario.config()?;
    let spec = SweepSpec::new(args.variable, args.values)?;
    let rows = with_workers(args.scenario.workers, || run_sweep(&spec, &base))??;
    for row in &rows {
        print_outcome(
            &format!("{}={} ", spec.variable.name(), row.value),
            &row.outcome,
        );
    }
    if let Some(path) = &args.scenario.out {
        emit_sweep_csv(spec.variable, &rows, path)?;
    }
    Ok(rows.iter().all(|r| r.outcome.liquidated.is_empty()))
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let selected: Vec<verify::Check> = if args.criterion.is_empty() {
        verify::ALL.to_vec()
    } else {
        args.criterion
            .iter()
            .map(|&id| verify::ALL[usize::from(id) - 1])
            .collect()
    };
    with_workers(args.workers, || {
        let mut ok = true;
        for check in selected {
            let report = check();
            println!("{report}");
            ok &= report.passed;
        }
        ok
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
