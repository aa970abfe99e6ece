use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pbco_core::harness::{last_half_slope, parse_seeds, write_csv};
use pbco_core::{emit_csv, run_experiment, ExperimentConfig, PbcoError};

#[derive(Parser)]
#[command(name = "pbco", version, about = "Bandit convex optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its averaged regret trace as CSV.
    Run(RunArgs),
    /// Run the verification checks.
    Verify,
    /// Run one experiment per dimension, one CSV each.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Key-value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// optpbco, kexp, ogd or flaxman.
    #[arg(long)]
    algo: Option<String>,
    /// squared, absolute, lower_bound or zero.
    #[arg(long)]
    env: Option<String>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    /// A count (`10` = seeds 0..10), a list `1,2,3` or a range `2..6`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    net_step: Option<f64>,
    /// Output CSV; for `sweep`, `_d<d>` is inserted before the extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', required = true)]
    d: Vec<usize>,
}

fn build_config(common: &CommonArgs) -> Result<ExperimentConfig, PbcoError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| PbcoError::Io { path: path.clone(), source })?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(a) = &common.algo {
        cfg.algorithm = a.parse()?;
    }
    if let Some(e) = &common.env {
        cfg.env = e.parse()?;
    }
    if let Some(t) = common.horizon {
        cfg.horizon = t;
    }
    if let Some(s) = &common.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if common.net_step.is_some() {
        cfg.net_step = common.net_step;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    Ok(cfg)
}

fn suffixed(path: &Path, d: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_d{d}.{}", ext.to_string_lossy()),
        None => format!("{stem}_d{d}"),
    };
    path.with_file_name(name)
}

fn run_one(cfg: &ExperimentConfig) -> Result<(), PbcoError> {
    let res = run_experiment(cfg)?;
    for note in &res.notes {
        eprintln!("note: {note}");
    }
    if let Some(choice) = &res.regime {
        if let Some(w) = &choice.warning {
            eprintln!("warning: {w}");
        }
        eprintln!("regime: {:?} (threshold {:.4})", choice.regime, choice.threshold);
    }
    let trace = &res.mean;
    if let Some(last) = trace.cumulative.last() {
        let t = trace.len();
        let slope = |s: &[f64]| last_half_slope(s).map_or("n/a".to_string(), |v| format!("{v:.4}"));
        eprintln!(
            "{} on {} d={} T={} seeds={}: R_T={:.6} R_T/T^0.75={:.6} R_T/T^0.5={:.6} slope34={} slope12={}",
            cfg.algorithm,
            cfg.env,
            cfg.dim,
            t,
            cfg.seeds.len(),
            last,
            trace.scaled_34[t - 1],
            trace.scaled_12[t - 1],
            slope(&trace.scaled_34),
            slope(&trace.scaled_12),
        );
    }
    match &cfg.out {
        Some(path) => emit_csv(trace, path),
        None => {
            let stdout = io::stdout();
            write_csv(trace, stdout.lock()).map_err(|source| PbcoError::Io { path: PathBuf::from("<stdout>"), source })
        }
    }
}

fn verify() -> Result<bool, PbcoError> {
    let reports = pbco_core::verification::preflight()?;
    let mut out = io::stdout().lock();
    let mut all = true;
    for r in &reports {
        let _ = writeln!(out, "# {}: {}", r.name, r.detail);
        let _ = writeln!(out, "{r}");
        all &= r.passed;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => build_config(&args.common).and_then(|mut cfg| {
            if let Some(d) = args.d {
                cfg.dim = d;
            }
            run_one(&cfg)
        }),
        Command::Verify => match verify() {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::FAILURE,
            Err(e) => Err(e),
        },
        Command::Sweep(args) => build_config(&args.common).and_then(|cfg| {
            let base = cfg
                .out
                .clone()
                .ok_or_else(|| PbcoError::InvalidConfig("sweep needs --out (or `out` in the config)".into()))?;
            for d in &args.d {
                let one = ExperimentConfig { dim: *d, out: Some(suffixed(&base, *d)), ..cfg.clone() };
                run_one(&one)?;
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
