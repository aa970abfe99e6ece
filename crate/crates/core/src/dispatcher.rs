//! Regime switch between exponential weights and gradient descent, and the
//! round loop shared by every learner.

use std::fmt;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::environments::{mix_seed, Environment, RoundOracle};
use crate::error::{PbcoError, Result};
use crate::geometry::{build_net_capped, ProblemConfig, DEFAULT_MAX_NET_POINTS};
use crate::harness::RegretTrace;
use crate::kexp::{kexp_defaults, KexpLearner};
use crate::ogd::{ogd_defaults, FlaxmanLearner, OgdLearner};

const LEARNER_STREAM: u64 = 0x1EA2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Kexp,
    Ogd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeChoice {
    pub regime: Regime,
    pub threshold: f64,
    pub warning: Option<String>,
}

/// Exponential weights iff `d <= W L D sqrt(T) / (C ln(L' T))`.
pub fn choose_regime(config: &ProblemConfig) -> RegimeChoice {
    let t = config.horizon as f64;
    let lt = config.scaled_lipschitz() * t;
    if lt <= 1.0 {
        return RegimeChoice {
            regime: Regime::Ogd,
            threshold: f64::NAN,
            warning: Some(format!("L'T = {lt} <= 1, the threshold is undefined; using gradient descent")),
        };
    }
    let threshold = config.radius * config.lipschitz * config.grad_bound * t.sqrt() / (config.loss_bound * lt.ln());
    let regime = if config.dim as f64 <= threshold { Regime::Kexp } else { Regime::Ogd };
    RegimeChoice { regime, threshold, warning: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    OptPbco,
    Kexp,
    Ogd,
    Flaxman,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::OptPbco => "optpbco",
            Algorithm::Kexp => "kexp",
            Algorithm::Ogd => "ogd",
            Algorithm::Flaxman => "flaxman",
        })
    }
}

impl FromStr for Algorithm {
    type Err = PbcoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "optpbco" => Ok(Algorithm::OptPbco),
            "kexp" => Ok(Algorithm::Kexp),
            "ogd" => Ok(Algorithm::Ogd),
            "flaxman" => Ok(Algorithm::Flaxman),
            other => Err(PbcoError::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Grid step of the net; [`default_net_step`] when unset.
    pub net_step: Option<f64>,
    pub max_net_points: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { net_step: None, max_net_points: DEFAULT_MAX_NET_POINTS }
    }
}

/// Net budget used when no step is given.
pub const DEFAULT_NET_BUDGET: usize = 10_000;

/// Approximately the finest step whose net has at most [`DEFAULT_NET_BUDGET`]
/// points (bisection on the step).
pub fn default_net_step(config: &ProblemConfig) -> f64 {
    let fits = |step: f64| build_net_capped(config, step, DEFAULT_NET_BUDGET).is_ok();
    let (mut fine, mut coarse) = (config.radius * 1e-3, config.radius);
    if fits(fine) {
        return fine;
    }
    for _ in 0..40 {
        let mid = 0.5 * (fine + coarse);
        if fits(mid) {
            coarse = mid;
        } else {
            fine = mid;
        }
    }
    coarse
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: RegretTrace,
    pub regime: Option<RegimeChoice>,
    pub oracle_calls: usize,
    pub net_points: Option<usize>,
}

/// Runs the regime-selected learner for the horizon of `config`.
pub fn run<E: Environment + ?Sized>(config: &ProblemConfig, env: &E, seed: u64) -> Result<RegretTrace> {
    run_algorithm(Algorithm::OptPbco, config, env, seed, RunOptions::default()).map(|o| o.trace)
}

pub fn run_algorithm<E: Environment + ?Sized>(
    algorithm: Algorithm,
    config: &ProblemConfig,
    env: &E,
    seed: u64,
    options: RunOptions,
) -> Result<RunOutcome> {
    config.validate()?;
    if env.horizon() < config.horizon {
        return Err(PbcoError::InvalidConfig(format!(
            "environment horizon {} is shorter than T = {}",
            env.horizon(),
            config.horizon
        )));
    }
    if env.dim() != config.dim {
        return Err(PbcoError::DimensionMismatch { expected: config.dim, got: env.dim() });
    }
    let (resolved, regime) = match algorithm {
        Algorithm::OptPbco => {
            let choice = choose_regime(config);
            let a = match choice.regime {
                Regime::Kexp => Algorithm::Kexp,
                Regime::Ogd => Algorithm::Ogd,
            };
            (a, Some(choice))
        }
        a => (a, None),
    };

    let mut rng = StdRng::seed_from_u64(mix_seed(seed, LEARNER_STREAM));
    let bounds = env.loss_bounds();
    let horizon = config.horizon;
    let mut regrets = Vec::with_capacity(horizon);
    let mut calls = 0usize;
    let mut net_points = None;

    macro_rules! rounds {
        (|$t:ident, $oracle:ident| $body:expr) => {
            for $t in 1..=horizon {
                let mut $oracle = RoundOracle::new(env, $t)?;
                let incurred: f64 = $body;
                if $oracle.calls() != 1 {
                    return Err(PbcoError::OracleReused { round: $t });
                }
                calls += $oracle.calls();
                regrets.push(incurred - env.comparator_loss_at($t));
            }
        };
    }

    match resolved {
        Algorithm::Kexp => {
            let step = options.net_step.unwrap_or_else(|| default_net_step(config));
            let net = build_net_capped(config, step, options.max_net_points)?;
            net_points = Some(net.len());
            let mut learner = KexpLearner::new(net, kexp_defaults(config), bounds)?;
            rounds!(|t, oracle| learner.step(env.context_at(t), &mut oracle, &mut rng)?.incurred_loss);
        }
        Algorithm::Ogd => {
            let mut learner = OgdLearner::new(*config, ogd_defaults(config), bounds)?;
            rounds!(|t, oracle| learner.step(env.context_at(t), &mut oracle, &mut rng)?.incurred_loss);
        }
        Algorithm::Flaxman => {
            let mut learner = FlaxmanLearner::new(*config, ogd_defaults(config), bounds)?;
            rounds!(|t, oracle| learner.step(&mut oracle, &mut rng)?.incurred_loss);
        }
        Algorithm::OptPbco => unreachable!("resolved above"),
    }

    Ok(RunOutcome { trace: RegretTrace::from_regrets(&regrets), regime, oracle_calls: calls, net_points })
}
