//! Experiment runner: seeds in, averaged regret traces and CSV out.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::dispatcher::{run_algorithm, Algorithm, RegimeChoice, RunOptions};
use crate::environments::{lower_bound_env, synthetic_env, zero_env, Environment, SyntheticLoss};
use crate::error::{PbcoError, Result};

/// Cumulative regret per round and its two scaled views.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegretTrace {
    pub cumulative: Vec<f64>,
    pub scaled_34: Vec<f64>,
    pub scaled_12: Vec<f64>,
}

impl RegretTrace {
    pub fn from_cumulative(cumulative: Vec<f64>) -> Self {
        let scaled_34 = cumulative.iter().enumerate().map(|(i, r)| r / ((i + 1) as f64).powf(0.75)).collect();
        let scaled_12 = cumulative.iter().enumerate().map(|(i, r)| r / ((i + 1) as f64).sqrt()).collect();
        Self { cumulative, scaled_34, scaled_12 }
    }

    /// Trace from per-round regrets `f_t(w_t) - f_t(w*)`.
    pub fn from_regrets(regrets: &[f64]) -> Self {
        let mut acc = 0.0;
        Self::from_cumulative(
            regrets
                .iter()
                .map(|r| {
                    acc += r;
                    acc
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Pointwise mean of equally long traces, summed in the given order.
    pub fn mean(traces: &[RegretTrace]) -> Result<Self> {
        let first = traces.first().ok_or_else(|| PbcoError::InvalidConfig("no traces to average".into()))?;
        let n = first.len();
        if let Some(t) = traces.iter().find(|t| t.len() != n) {
            return Err(PbcoError::DimensionMismatch { expected: n, got: t.len() });
        }
        let k = traces.len() as f64;
        let cumulative = (0..n).map(|i| traces.iter().map(|t| t.cumulative[i]).sum::<f64>() / k).collect();
        Ok(Self::from_cumulative(cumulative))
    }
}

/// Least-squares slope of `ln series[t]` against `ln t` over rounds
/// `t in [from, len]` (1-based). `None` if a value there is not positive.
pub fn loglog_slope(series: &[f64], from: usize) -> Option<f64> {
    let from = from.max(1);
    if from >= series.len() {
        return None;
    }
    let pts: Vec<(f64, f64)> = (from..=series.len())
        .map(|t| ((t as f64).ln(), series[t - 1]))
        .collect();
    if pts.iter().any(|(_, v)| !(*v > 0.0)) {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Slope over the second half of the horizon.
pub fn last_half_slope(series: &[f64]) -> Option<f64> {
    loglog_slope(series, series.len() / 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Squared,
    Absolute,
    LowerBound,
    Zero,
}

impl EnvKind {
    pub fn build(self, dim: usize, horizon: usize, seed: u64) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvKind::Squared => Box::new(synthetic_env(SyntheticLoss::Squared, dim, horizon, seed)?),
            EnvKind::Absolute => Box::new(synthetic_env(SyntheticLoss::Absolute, dim, horizon, seed)?),
            EnvKind::LowerBound => Box::new(lower_bound_env(dim, horizon, seed)?),
            EnvKind::Zero => Box::new(zero_env(dim, horizon, seed)?),
        })
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::Squared => "squared",
            EnvKind::Absolute => "absolute",
            EnvKind::LowerBound => "lower_bound",
            EnvKind::Zero => "zero",
        })
    }
}

impl FromStr for EnvKind {
    type Err = PbcoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "squared" => Ok(EnvKind::Squared),
            "absolute" => Ok(EnvKind::Absolute),
            "lower_bound" | "lowerbound" => Ok(EnvKind::LowerBound),
            "zero" => Ok(EnvKind::Zero),
            other => Err(PbcoError::InvalidConfig(format!("unknown environment '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub env: EnvKind,
    pub dim: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub net_step: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::OptPbco,
            env: EnvKind::Squared,
            dim: 2,
            horizon: 1000,
            seeds: vec![0],
            net_step: None,
            out: None,
        }
    }
}

/// `"10"` means seeds `0..10`; `"3,5,8"` lists them; `"2..6"` is a range.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    let bad = || PbcoError::InvalidConfig(format!("bad seed list '{s}'"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        (a..b).collect()
    } else if s.contains(',') {
        s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    } else {
        let n: u64 = s.parse().map_err(|_| bad())?;
        (0..n).collect()
    };
    if seeds.is_empty() {
        return Err(PbcoError::InvalidConfig("at least one seed is required".into()));
    }
    Ok(seeds)
}

impl ExperimentConfig {
    /// Sets one field from its textual key and value.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<usize> {
            v.trim().parse().map_err(|_| PbcoError::InvalidConfig(format!("{key}: expected an integer, got '{v}'")))
        };
        match key.trim() {
            "algo" | "algorithm" => self.algorithm = value.parse()?,
            "env" | "environment" => self.env = value.parse()?,
            "d" | "dim" => self.dim = num(value)?,
            "T" | "horizon" => self.horizon = num(value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "net_step" | "net-step" => {
                let v: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| PbcoError::InvalidConfig(format!("net_step: expected a number, got '{value}'")))?;
                self.net_step = Some(v);
            }
            "out" => self.out = Some(PathBuf::from(value.trim())),
            other => return Err(PbcoError::InvalidConfig(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_text(text)?;
        Ok(cfg)
    }

    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| PbcoError::Parse {
                line: i + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            self.apply(k, v).map_err(|e| PbcoError::Parse { line: i + 1, message: e.to_string() })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(PbcoError::InvalidConfig("at least one seed is required".into()));
        }
        if self.horizon == 0 || self.dim == 0 {
            return Err(PbcoError::InvalidConfig("d and T must be at least 1".into()));
        }
        if let Some(s) = self.net_step {
            if !(s.is_finite() && s > 0.0) {
                return Err(PbcoError::InvalidConfig(format!("net_step must be > 0, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub mean: RegretTrace,
    pub per_seed: Vec<RegretTrace>,
    pub regime: Option<RegimeChoice>,
    pub notes: Vec<String>,
}

/// Runs every seed (in parallel) and averages in seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let options = RunOptions { net_step: cfg.net_step, ..Default::default() };
    let outcomes: Vec<_> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<_> {
                let env = cfg.env.build(cfg.dim, cfg.horizon, seed)?;
                let problem = env.problem();
                let out = run_algorithm(cfg.algorithm, &problem, env.as_ref(), seed, options)?;
                Ok((out, env.notes().to_vec()))
            };
            run().map_err(|e| PbcoError::Seed { seed, source: Box::new(e) })
        })
        .collect();
    let mut per_seed = Vec::with_capacity(outcomes.len());
    let mut regime = None;
    let mut notes = Vec::new();
    for o in outcomes {
        let (out, n) = o?;
        if regime.is_none() {
            regime = out.regime.clone();
        }
        for note in n {
            if !notes.contains(&note) {
                notes.push(note);
            }
        }
        per_seed.push(out.trace);
    }
    Ok(ExperimentResult { mean: RegretTrace::mean(&per_seed)?, per_seed, regime, notes })
}

/// Fixed-point decimal with at least 9 decimals and 9 significant digits.
pub fn format_value(v: f64) -> String {
    let decimals = if v == 0.0 || !v.is_finite() {
        9
    } else {
        (8 - v.abs().log10().floor() as i64).clamp(9, 40) as usize
    };
    format!("{v:.decimals$}")
}

pub fn write_csv<W: Write>(trace: &RegretTrace, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,cum_regret,scaled_t34,scaled_t12")?;
    for i in 0..trace.len() {
        writeln!(
            out,
            "{},{},{},{}",
            i + 1,
            format_value(trace.cumulative[i]),
            format_value(trace.scaled_34[i]),
            format_value(trace.scaled_12[i])
        )?;
    }
    out.flush()
}

pub fn emit_csv(trace: &RegretTrace, path: &Path) -> Result<()> {
    let io = |source| PbcoError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io)?;
    write_csv(trace, BufWriter::new(file)).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_example() {
        let trace = RegretTrace::from_cumulative(vec![1.0, 3.0]);
        let mut buf = Vec::new();
        write_csv(&trace, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,cum_regret,scaled_t34,scaled_t12\n\
             1,1.000000000,1.000000000,1.000000000\n\
             2,3.000000000,1.783810673,2.121320344\n"
        );
        let mut empty = Vec::new();
        write_csv(&RegretTrace::default(), &mut empty).unwrap();
        assert_eq!(empty, b"t,cum_regret,scaled_t34,scaled_t12\n");
    }

    #[test]
    fn csv_file_roundtrip_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let trace = RegretTrace::from_regrets(&[0.5, -0.25, 1e-4]);
        emit_csv(&trace, &path).unwrap();
        let a = std::fs::read(&path).unwrap();
        emit_csv(&trace, &path).unwrap();
        assert_eq!(a, std::fs::read(&path).unwrap());
        assert!(emit_csv(&trace, &dir.path().join("missing/t.csv")).is_err());
    }

    #[test]
    fn small_values_keep_significant_digits() {
        assert_eq!(format_value(0.00123456789), "0.00123456789");
        assert_eq!(format_value(-2.5), "-2.500000000");
        assert_eq!(format_value(0.0), "0.000000000");
    }

    #[test]
    fn mean_examples() {
        let a = RegretTrace::from_cumulative(vec![1.0, 2.0]);
        let b = RegretTrace::from_cumulative(vec![3.0, 6.0]);
        assert_eq!(RegretTrace::mean(&[a.clone()]).unwrap(), a);
        assert_eq!(RegretTrace::mean(&[a, b]).unwrap().cumulative, vec![2.0, 4.0]);
        assert!(RegretTrace::mean(&[]).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let s: Vec<f64> = (1..=1000).map(|t| (t as f64).powf(0.3)).collect();
        assert!((last_half_slope(&s).unwrap() - 0.3).abs() < 1e-12);
        assert!(last_half_slope(&[1.0, -1.0, 2.0]).is_none());
    }

    #[test]
    fn config_parsing() {
        let text = "# comment\nalgo = ogd\nenv = squared  # trailing\nd = 20\nT = 20000\nseeds = 10\n\nout = o.csv\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Ogd);
        assert_eq!(cfg.env, EnvKind::Squared);
        assert_eq!((cfg.dim, cfg.horizon), (20, 20000));
        assert_eq!(cfg.seeds, (0..10).collect::<Vec<_>>());
        assert_eq!(cfg.out, Some(PathBuf::from("o.csv")));

        assert!(matches!(ExperimentConfig::parse("d 20"), Err(PbcoError::Parse { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("\ncolor = red"), Err(PbcoError::Parse { line: 2, .. })));
        assert_eq!(parse_seeds("3,5").unwrap(), vec![3, 5]);
        assert_eq!(parse_seeds("2..4").unwrap(), vec![2, 3]);
        assert!(parse_seeds("0").is_err());
    }

    #[test]
    fn zero_env_experiment() {
        for algo in [Algorithm::Kexp, Algorithm::Ogd, Algorithm::Flaxman] {
            let cfg = ExperimentConfig {
                algorithm: algo,
                env: EnvKind::Zero,
                dim: 2,
                horizon: 50,
                seeds: vec![1, 2, 3],
                net_step: Some(0.5),
                out: None,
            };
            let res = run_experiment(&cfg).unwrap();
            assert!(res.mean.cumulative.iter().all(|v| *v == 0.0));
            assert_eq!(res.per_seed.len(), 3);
        }
    }

    #[test]
    fn experiment_mean_matches_seeds() {
        let cfg = ExperimentConfig {
            algorithm: Algorithm::Ogd,
            env: EnvKind::Squared,
            dim: 3,
            horizon: 100,
            seeds: vec![4, 9],
            net_step: None,
            out: None,
        };
        let res = run_experiment(&cfg).unwrap();
        for i in 0..100 {
            let m = 0.5 * (res.per_seed[0].cumulative[i] + res.per_seed[1].cumulative[i]);
            assert!((res.mean.cumulative[i] - m).abs() < 1e-12);
        }
        let single = run_experiment(&ExperimentConfig { seeds: vec![4], ..cfg }).unwrap();
        assert_eq!(single.mean, single.per_seed[0]);
        assert_eq!(single.per_seed[0], res.per_seed[0]);
    }

    #[test]
    fn seed_errors_name_the_seed() {
        let cfg = ExperimentConfig {
            algorithm: Algorithm::Ogd,
            env: EnvKind::LowerBound,
            dim: 5,
            horizon: 3,
            seeds: vec![7],
            net_step: None,
            out: None,
        };
        assert!(matches!(run_experiment(&cfg), Err(PbcoError::Seed { seed: 7, .. })));
    }
}
