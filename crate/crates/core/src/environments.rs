//! Loss and context generators with a single-evaluation (bandit) oracle.
//!
//! Rounds are numbered `1..=horizon`. Every environment uses the linear link
//! `g_t(w) = <w, x_t>` and exposes both the scalar loss `loss_at(t, y)` and
//! the parameter-space loss `full_loss_at(t, w)`; the two agree exactly at
//! `y = <w, x_t>`. Noise, when present, is drawn from a per-round seed so both
//! paths and the comparator see the same realization.

use std::fmt;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PbcoError, Result};
use crate::geometry::{dot, ProblemConfig};

/// SplitMix64 finalizer; derives independent stream seeds from `(seed, index)`.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Closed interval the environment promises its observed losses lie in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBounds {
    pub lo: f64,
    pub hi: f64,
}

impl LossBounds {
    pub const UNBOUNDED: LossBounds = LossBounds { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    /// `[0, C + 1e-9]`.
    pub fn up_to(loss_bound: f64) -> Self {
        Self { lo: 0.0, hi: loss_bound + 1e-9 }
    }

    pub fn check(&self, loss: f64) -> Result<f64> {
        if loss.is_finite() && loss >= self.lo && loss <= self.hi {
            Ok(loss)
        } else {
            Err(PbcoError::LossOutOfRange { loss, lo: self.lo, hi: self.hi })
        }
    }
}

/// Scalar-prediction loss oracle for one round.
pub trait LossOracle {
    fn query(&mut self, prediction: f64) -> Result<f64>;
}

/// Parameter-space loss oracle for one round.
pub trait PointLossOracle {
    fn query_point(&mut self, w: &[f64]) -> Result<f64>;
}

impl<F: FnMut(f64) -> f64> LossOracle for F {
    fn query(&mut self, prediction: f64) -> Result<f64> {
        Ok(self(prediction))
    }
}

impl<F: FnMut(&[f64]) -> f64> PointLossOracle for F {
    fn query_point(&mut self, w: &[f64]) -> Result<f64> {
        Ok(self(w))
    }
}

/// An online environment with a fixed comparator.
pub trait Environment: Send + Sync {
    fn dim(&self) -> usize;

    fn horizon(&self) -> usize;

    /// Context `x_t`. Panics if `t` is outside `1..=horizon`.
    fn context_at(&self, t: usize) -> &[f64];

    /// Observed loss of the scalar prediction `y` at round `t`.
    fn loss_at(&self, t: usize, prediction: f64) -> f64;

    /// Loss with any observation noise removed.
    fn expected_loss_at(&self, t: usize, prediction: f64) -> f64 {
        self.loss_at(t, prediction)
    }

    fn full_loss_at(&self, t: usize, w: &[f64]) -> f64 {
        self.loss_at(t, dot(w, self.context_at(t)))
    }

    /// The fixed comparator `w*`.
    fn comparator(&self) -> &[f64];

    fn comparator_loss_at(&self, t: usize) -> f64 {
        self.full_loss_at(t, self.comparator())
    }

    /// Declared problem constants for this environment.
    fn problem(&self) -> ProblemConfig;

    fn loss_bounds(&self) -> LossBounds;

    /// Adjustments made at construction (e.g. a truncated horizon).
    fn notes(&self) -> &[String] {
        &[]
    }
}

/// Bandit oracle for round `t`: answers exactly one query.
pub struct RoundOracle<'a, E: Environment + ?Sized> {
    env: &'a E,
    round: usize,
    calls: usize,
}

impl<'a, E: Environment + ?Sized> RoundOracle<'a, E> {
    pub fn new(env: &'a E, round: usize) -> Result<Self> {
        if round == 0 || round > env.horizon() {
            return Err(PbcoError::RoundOutOfRange { round, horizon: env.horizon() });
        }
        Ok(Self { env, round, calls: 0 })
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    fn claim(&mut self) -> Result<()> {
        self.calls += 1;
        if self.calls > 1 {
            Err(PbcoError::OracleReused { round: self.round })
        } else {
            Ok(())
        }
    }
}

impl<E: Environment + ?Sized> LossOracle for RoundOracle<'_, E> {
    fn query(&mut self, prediction: f64) -> Result<f64> {
        self.claim()?;
        Ok(self.env.loss_at(self.round, prediction))
    }
}

impl<E: Environment + ?Sized> PointLossOracle for RoundOracle<'_, E> {
    fn query_point(&mut self, w: &[f64]) -> Result<f64> {
        self.claim()?;
        Ok(self.env.full_loss_at(self.round, w))
    }
}

fn uniform_in_ball<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = dot(&v, &v).sqrt();
        if n == 0.0 {
            continue;
        }
        let r = rng.random::<f64>().powf(1.0 / dim as f64);
        v.iter_mut().for_each(|x| *x *= r / n);
        return v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticLoss {
    Squared,
    Absolute,
}

impl fmt::Display for SyntheticLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticLoss::Squared => "squared",
            SyntheticLoss::Absolute => "absolute",
        })
    }
}

/// Realizable regression stream: fixed `w*` and contexts drawn uniformly from
/// the unit ball; the loss compares the prediction with `<w*, x_t>`.
#[derive(Debug, Clone)]
pub struct SyntheticEnv {
    kind: SyntheticLoss,
    dim: usize,
    horizon: usize,
    w_star: Vec<f64>,
    contexts: Vec<f64>,
    targets: Vec<f64>,
}

pub fn synthetic_env(kind: SyntheticLoss, dim: usize, horizon: usize, seed: u64) -> Result<SyntheticEnv> {
    if dim == 0 || horizon == 0 {
        return Err(PbcoError::InvalidConfig("synthetic environment needs d >= 1 and T >= 1".into()));
    }
    let mut rng = StdRng::seed_from_u64(mix_seed(seed, 0x5EED));
    let w_star = uniform_in_ball(dim, &mut rng);
    let mut contexts = Vec::with_capacity(dim * horizon);
    let mut targets = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let x = uniform_in_ball(dim, &mut rng);
        targets.push(dot(&w_star, &x));
        contexts.extend_from_slice(&x);
    }
    Ok(SyntheticEnv { kind, dim, horizon, w_star, contexts, targets })
}

impl SyntheticEnv {
    pub fn kind(&self) -> SyntheticLoss {
        self.kind
    }

    pub fn target_at(&self, t: usize) -> f64 {
        self.targets[t - 1]
    }
}

impl Environment for SyntheticEnv {
    fn dim(&self) -> usize {
        self.dim
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn context_at(&self, t: usize) -> &[f64] {
        &self.contexts[(t - 1) * self.dim..t * self.dim]
    }

    fn loss_at(&self, t: usize, prediction: f64) -> f64 {
        let r = prediction - self.targets[t - 1];
        match self.kind {
            SyntheticLoss::Squared => r * r,
            SyntheticLoss::Absolute => r.abs(),
        }
    }

    fn comparator(&self) -> &[f64] {
        &self.w_star
    }

    fn comparator_loss_at(&self, _t: usize) -> f64 {
        0.0
    }

    fn problem(&self) -> ProblemConfig {
        // Residuals lie in [-2, 2] on the reachable range.
        let (c, l) = match self.kind {
            SyntheticLoss::Squared => (4.0, 4.0),
            SyntheticLoss::Absolute => (2.0, 1.0),
        };
        ProblemConfig::linear_ball(self.dim, self.horizon, 1.0, 1.0, c, l).expect("valid constants")
    }

    fn loss_bounds(&self) -> LossBounds {
        LossBounds::up_to(self.problem().loss_bound)
    }
}

/// Environment whose loss is identically zero; contexts as in [`SyntheticEnv`].
#[derive(Debug, Clone)]
pub struct ZeroEnv {
    inner: SyntheticEnv,
    origin: Vec<f64>,
}

pub fn zero_env(dim: usize, horizon: usize, seed: u64) -> Result<ZeroEnv> {
    Ok(ZeroEnv { inner: synthetic_env(SyntheticLoss::Absolute, dim, horizon, seed)?, origin: vec![0.0; dim] })
}

impl Environment for ZeroEnv {
    fn dim(&self) -> usize {
        self.inner.dim
    }

    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    fn context_at(&self, t: usize) -> &[f64] {
        self.inner.context_at(t)
    }

    fn loss_at(&self, _t: usize, _prediction: f64) -> f64 {
        0.0
    }

    fn comparator(&self) -> &[f64] {
        &self.origin
    }

    fn problem(&self) -> ProblemConfig {
        ProblemConfig::linear_ball(self.inner.dim, self.inner.horizon, 1.0, 1.0, 1.0, 1.0).expect("valid constants")
    }

    fn loss_bounds(&self) -> LossBounds {
        LossBounds::up_to(1.0)
    }
}

/// Hard instance: the horizon is split into equal intervals, interval `i`
/// shows context `e_i` and the loss `mu sigma_i y + noise + shift`.
#[derive(Debug, Clone)]
pub struct LowerBoundEnv {
    dim: usize,
    active_dim: usize,
    horizon: usize,
    interval_len: usize,
    sigma: Vec<f64>,
    mu: f64,
    shift: f64,
    noise_sd: f64,
    seed: u64,
    basis: Vec<f64>,
    w_star: Vec<f64>,
    notes: Vec<String>,
}

pub const LOWER_BOUND_NOISE_SD: f64 = 0.25;

/// Builds the lower-bound instance with the default nonnegativity shift.
pub fn lower_bound_env(dim: usize, horizon: usize, seed: u64) -> Result<LowerBoundEnv> {
    lower_bound_env_with_shift(dim, horizon, seed, true)
}

pub fn lower_bound_env_with_shift(dim: usize, horizon: usize, seed: u64, shifted: bool) -> Result<LowerBoundEnv> {
    if dim == 0 {
        return Err(PbcoError::InvalidConfig("lower-bound instance needs d >= 1".into()));
    }
    if dim > horizon {
        return Err(PbcoError::InvalidConfig(format!(
            "lower-bound instance needs d <= T, got d = {dim}, T = {horizon}"
        )));
    }
    let mut notes = Vec::new();
    let cap = (16.0 * (horizon as f64).sqrt()).floor() as usize;
    let active_dim = if dim > cap {
        notes.push(format!("d = {dim} exceeds 16 sqrt(T); using the first {cap} coordinates"));
        cap
    } else {
        dim
    };
    let interval_len = horizon / active_dim;
    let used = interval_len * active_dim;
    if used != horizon {
        notes.push(format!("horizon truncated from {horizon} to {used} so that intervals are equal"));
    }
    let mu = (active_dim as f64 / (16.0 * (used as f64).sqrt())).min(1.0);

    let mut rng = StdRng::seed_from_u64(mix_seed(seed, 0x516A));
    let sigma: Vec<f64> = (0..active_dim).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let scale = 1.0 / (active_dim as f64).sqrt();
    let mut w_star = vec![0.0; dim];
    for (w, s) in w_star.iter_mut().zip(&sigma) {
        *w = -s * scale;
    }
    let mut basis = vec![0.0; dim * active_dim];
    for i in 0..active_dim {
        basis[i * dim + i] = 1.0;
    }
    let shift = if shifted { mu / (active_dim as f64).sqrt() + 0.5 } else { 0.0 };
    Ok(LowerBoundEnv {
        dim,
        active_dim,
        horizon: used,
        interval_len,
        sigma,
        mu,
        shift,
        noise_sd: LOWER_BOUND_NOISE_SD,
        seed,
        basis,
        w_star,
        notes,
    })
}

impl LowerBoundEnv {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn active_dim(&self) -> usize {
        self.active_dim
    }

    pub fn interval_len(&self) -> usize {
        self.interval_len
    }

    /// Zero-based interval (and active coordinate) of round `t`.
    pub fn interval_of(&self, t: usize) -> usize {
        (t - 1) / self.interval_len
    }

    /// Observation noise of round `t`, drawn from a per-round seed.
    pub fn noise_at(&self, t: usize) -> f64 {
        let mut rng = StdRng::seed_from_u64(mix_seed(self.seed, t as u64));
        let z: f64 = StandardNormal.sample(&mut rng);
        self.noise_sd * z
    }
}

impl Environment for LowerBoundEnv {
    fn dim(&self) -> usize {
        self.dim
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn context_at(&self, t: usize) -> &[f64] {
        assert!(t >= 1 && t <= self.horizon, "round {t} outside 1..={}", self.horizon);
        let i = self.interval_of(t);
        &self.basis[i * self.dim..(i + 1) * self.dim]
    }

    fn loss_at(&self, t: usize, prediction: f64) -> f64 {
        self.expected_loss_at(t, prediction) + self.noise_at(t)
    }

    fn expected_loss_at(&self, t: usize, prediction: f64) -> f64 {
        self.mu * self.sigma[self.interval_of(t)] * prediction + self.shift
    }

    fn comparator(&self) -> &[f64] {
        &self.w_star
    }

    fn problem(&self) -> ProblemConfig {
        ProblemConfig::linear_ball(self.dim, self.horizon, 1.0, 1.0, 1.0, 1.0).expect("valid constants")
    }

    fn loss_bounds(&self) -> LossBounds {
        LossBounds::UNBOUNDED
    }

    fn notes(&self) -> &[String] {
        &self.notes
    }
}

/// Candidate with the smallest noise-free cumulative loss over the horizon.
pub fn comparator_check<E: Environment + ?Sized>(env: &E, candidates: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut best: Option<(f64, &Vec<f64>)> = None;
    for w in candidates {
        if w.len() != env.dim() {
            return Err(PbcoError::DimensionMismatch { expected: env.dim(), got: w.len() });
        }
        let total: f64 = (1..=env.horizon())
            .map(|t| env.expected_loss_at(t, dot(w, env.context_at(t))))
            .sum();
        if best.is_none_or(|(b, _)| total < b) {
            best = Some((total, w));
        }
    }
    best.map(|(_, w)| w.clone()).ok_or(PbcoError::EmptyCandidates)
}

/// All `2^d` points `{+-1/sqrt(d)}^d`.
pub fn hypercube_corners(dim: usize) -> Vec<Vec<f64>> {
    let s = 1.0 / (dim as f64).sqrt();
    (0..1usize << dim)
        .map(|mask| (0..dim).map(|i| if mask >> i & 1 == 1 { s } else { -s }).collect())
        .collect()
}
