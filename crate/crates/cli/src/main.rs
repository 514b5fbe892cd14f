//! `swapcal` command-line runner.
//!
//! Exit codes: 0 on success, 2 when an audit or runtime invariant fails,
//! 1 on usage, configuration, and I/O errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swapcal::harness::{self, audit::audit_run, run::rescore, ExperimentConfig};
use swapcal::Error;

#[derive(Debug, Parser)]
#[command(
    name = "swapcal",
    version,
    about = "Run, sweep, score, and audit swap-multicalibrated forecasters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its transcript, laws, gains, and metrics.
    Run(RunArgs),
    /// Run a grid of horizons and seeds and fit the growth rate of SMCal.
    Sweep(SweepArgs),
    /// Check the per-round hedging bound and replay the logged gains.
    Audit(DirArgs),
    /// Recompute metrics of a finished run at other exponents.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `out`, then `./run`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated horizons, at least three distinct.
    #[arg(long = "T", value_delimiter = ',', required = true)]
    horizons: Vec<u64>,
    /// Number of seeds, counted up from the config seed.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Exponents to score; defaults to the config's `r`.
    #[arg(long, value_delimiter = ',')]
    r: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DirArgs {
    #[arg(long)]
    run: PathBuf,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    r: Vec<f64>,
    /// Also write the per-bin table to bins.csv.
    #[arg(long)]
    per_bin: bool,
}

enum Failure {
    Usage(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::Argument(_) | Error::State(_) => {
                Failure::Invariant(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig, fallback: &str) -> PathBuf {
    flag.or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(fallback))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let dir = out_dir(args.out, &cfg, "run");
    let (result, metrics) = harness::run(&cfg, &dir)?;
    for m in &metrics {
        println!(
            "T={} N={} r={} cal={} mcal={} smcal={}",
            m.horizon, m.bins, m.r, m.cal, m.mcal, m.smcal
        );
    }
    println!(
        "{} rounds in {:.3}s ({:.0} rounds/s); wrote {}",
        result.transcript.len(),
        result.elapsed.as_secs_f64(),
        result.rounds_per_second(),
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(&args.config)?;
    if args.seeds == 0 {
        return Err(Failure::Usage("--seeds must be positive".into()));
    }
    let seeds: Vec<u64> = (0..args.seeds).map(|k| cfg.seed.wrapping_add(k)).collect();
    let rs = if args.r.is_empty() {
        vec![cfg.r]
    } else {
        args.r
    };
    let dir = out_dir(args.out, &cfg, "sweep");
    let report = harness::sweep(&cfg, &args.horizons, &seeds, &rs, Some(&dir))?;
    for swapcal::harness::ExponentFit { r, means, fit } in &report.fits {
        for (t, m) in means {
            println!("r={r} T={t} mean_smcal={m}");
        }
        println!(
            "r={r} slope={:.4} se={:.4} residual={:.3e}",
            fit.slope, fit.std_error, fit.residual
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_audit(args: DirArgs) -> Result<(), Failure> {
    let report = audit_run(&args.run)?;
    println!(
        "hedging: max h_t = {:.3e} at t={} vs bound {:.3e} (rho = {}) -> {}",
        report.max_value,
        report.max_round,
        report.bound,
        report.rho,
        if report.hedging_passed() {
            "pass"
        } else {
            "FAIL"
        }
    );
    if let Some(g) = &report.gains {
        println!(
            "gain replay: {} entries, max error {:.3e} -> {}",
            g.checked,
            g.max_error,
            if g.passed() { "pass" } else { "FAIL" }
        );
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Invariant("audit failed".into()))
    }
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), Failure> {
    for m in rescore(Path::new(&args.run), &args.r, args.per_bin)? {
        let note = if m.mcal_exact {
            ""
        } else {
            " (mcal lower bound)"
        };
        println!(
            "r={} cal={} mcal={} smcal={}{note}",
            m.r, m.cal, m.mcal, m.smcal
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Metrics(a) => cmd_metrics(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
