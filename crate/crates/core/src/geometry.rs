//! Parameter-space primitives: the radius-`W` ball, its grid discretization,
//! projections, and the scalar prediction range with its binning.
//!
//! Balls are parameterized by radius throughout. For the linear link
//! `g(w; x) = <w, x>` on a ball of radius `W` with `||x|| <= D`, predictions
//! lie in `[-D W, D W]`.

use crate::error::{PbcoError, Result};

/// Default cap on the number of grid points in a [`ParameterNet`].
pub const DEFAULT_MAX_NET_POINTS: usize = 1 << 20;

const PROJECTION_TOL: f64 = 1e-9;
const PROJECTION_MAX_ITERS: usize = 100;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(PbcoError::NonFinite(what))
    }
}

/// Problem constants shared by every parameter formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConfig {
    /// Parameter dimension `d`.
    pub dim: usize,
    /// Number of rounds `T`.
    pub horizon: usize,
    /// Radius `W` of the parameter ball.
    pub radius: f64,
    /// Bound `D` on the gradient norm of the link in `w`.
    pub grad_bound: f64,
    /// Losses take values in `[0, C]`.
    pub loss_bound: f64,
    /// Lipschitz constant `L` of the scalar loss.
    pub lipschitz: f64,
    /// Lower endpoint of the global prediction interval.
    pub pred_lo: f64,
    /// Upper endpoint of the global prediction interval.
    pub pred_hi: f64,
}

impl ProblemConfig {
    pub fn new(
        dim: usize,
        horizon: usize,
        radius: f64,
        grad_bound: f64,
        loss_bound: f64,
        lipschitz: f64,
        pred_lo: f64,
        pred_hi: f64,
    ) -> Result<Self> {
        let cfg = Self {
            dim,
            horizon,
            radius,
            grad_bound,
            loss_bound,
            lipschitz,
            pred_lo,
            pred_hi,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Linear link on the ball: the prediction interval is `[-D W, D W]`.
    pub fn linear_ball(
        dim: usize,
        horizon: usize,
        radius: f64,
        grad_bound: f64,
        loss_bound: f64,
        lipschitz: f64,
    ) -> Result<Self> {
        let half = grad_bound * radius;
        Self::new(
            dim, horizon, radius, grad_bound, loss_bound, lipschitz, -half, half,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(PbcoError::InvalidConfig(msg.to_string()));
        if self.dim == 0 {
            return bad("dimension must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        let positive = [
            (self.radius, "radius W"),
            (self.grad_bound, "gradient bound D"),
            (self.loss_bound, "loss bound C"),
            (self.lipschitz, "Lipschitz constant L"),
        ];
        for (v, name) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PbcoError::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.pred_lo.is_finite() && self.pred_hi.is_finite() && self.pred_lo < self.pred_hi) {
            return Err(PbcoError::InvalidConfig(format!(
                "prediction interval [{}, {}] is empty",
                self.pred_lo, self.pred_hi
            )));
        }
        Ok(())
    }

    /// `L' = L D W`.
    pub fn scaled_lipschitz(&self) -> f64 {
        self.lipschitz * self.grad_bound * self.radius
    }

    pub fn pred_width(&self) -> f64 {
        self.pred_hi - self.pred_lo
    }
}

/// Finite grid discretization of the parameter ball, in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterNet {
    dim: usize,
    step: f64,
    coords: Vec<f64>,
}

impl ParameterNet {
    /// Builds a net from explicit points. Used by tests and small fixtures.
    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(PbcoError::DimensionMismatch { expected: dim, got: p.len() });
            }
            check_finite(p, "net point")?;
            coords.extend_from_slice(p);
        }
        Ok(Self { dim, step: f64::NAN, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// `<w, x>` for every net point, in net order.
    pub fn predictions(&self, x: &[f64]) -> Vec<f64> {
        self.points().map(|w| dot(w, x)).collect()
    }
}

/// Scalar prediction interval split into `bins` equal-width bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRange {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl PredictionRange {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(PbcoError::NonFinite("prediction range"));
        }
        if lo > hi {
            return Err(PbcoError::InvalidConfig(format!("range [{lo}, {hi}] is reversed")));
        }
        if bins == 0 {
            return Err(PbcoError::InvalidConfig("range needs at least one bin".into()));
        }
        Ok(Self { lo, hi, bins })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn bin_width(&self) -> f64 {
        self.width() / self.bins as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.bin_width()
    }

    pub fn bin_lo(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.bin_width()
    }

    pub fn bin_hi(&self, k: usize) -> f64 {
        if k + 1 == self.bins {
            self.hi
        } else {
            self.lo + (k + 1) as f64 * self.bin_width()
        }
    }

    /// Bin containing `y`. Values on an interior edge go to the lower bin;
    /// `lo` goes to bin 0 and anything outside the range is clamped.
    pub fn bin_of(&self, y: f64) -> usize {
        let h = self.bin_width();
        if h <= 0.0 {
            return 0;
        }
        let pos = ((y - self.lo) / h).ceil();
        if pos <= 1.0 {
            0
        } else if pos >= self.bins as f64 {
            self.bins - 1
        } else {
            pos as usize - 1
        }
    }

    /// Same range with a different bin count.
    pub fn with_bins(&self, bins: usize) -> Result<Self> {
        Self::new(self.lo, self.hi, bins)
    }
}

/// Radial projection onto the ball of radius `radius`.
pub fn project_ball(w: &[f64], radius: f64) -> Result<Vec<f64>> {
    check_finite(w, "point to project")?;
    if !(radius > 0.0) {
        return Err(PbcoError::InvalidConfig(format!("ball radius must be > 0, got {radius}")));
    }
    let n = norm(w);
    if n <= radius {
        Ok(w.to_vec())
    } else {
        let s = radius / n;
        Ok(w.iter().map(|v| v * s).collect())
    }
}

fn project_ball_in_place(w: &mut [f64], radius: f64) {
    let n = norm(w);
    if n > radius {
        let s = radius / n;
        w.iter_mut().for_each(|v| *v *= s);
    }
}

fn project_slab_in_place(w: &mut [f64], x: &[f64], x_sq: f64, lo: f64, hi: f64) {
    let s = dot(w, x);
    let target = s.clamp(lo, hi);
    if target != s && x_sq > 0.0 {
        let shift = (target - s) / x_sq;
        w.iter_mut().zip(x).for_each(|(wi, xi)| *wi += shift * xi);
    }
}

/// Enumerates the axis-aligned grid `{-W, -W + step, ...}^d` restricted to the
/// ball of radius `W`, capped at [`DEFAULT_MAX_NET_POINTS`].
pub fn build_net(config: &ProblemConfig, step: f64) -> Result<ParameterNet> {
    build_net_capped(config, step, DEFAULT_MAX_NET_POINTS)
}

pub fn build_net_capped(config: &ProblemConfig, step: f64, max_points: usize) -> Result<ParameterNet> {
    let radius = config.radius;
    if !(step > 0.0 && step <= 2.0 * radius) {
        return Err(PbcoError::InvalidConfig(format!(
            "net step must lie in (0, 2W] = (0, {}], got {step}",
            2.0 * radius
        )));
    }
    let per_axis = (2.0 * radius / step + 1e-9).floor() as usize + 1;
    let axis: Vec<f64> = (0..per_axis).map(|k| -radius + k as f64 * step).collect();
    let r2 = radius * radius * (1.0 + 1e-12);
    let dim = config.dim;

    let mut coords = Vec::new();
    let mut current = vec![0.0; dim];
    let mut count = 0usize;
    enumerate(&axis, 0, 0.0, r2, &mut current, &mut coords, &mut count, max_points)?;
    if count == 0 {
        return Err(PbcoError::EmptyNet);
    }
    Ok(ParameterNet { dim, step, coords })
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    axis: &[f64],
    depth: usize,
    partial: f64,
    r2: f64,
    current: &mut Vec<f64>,
    out: &mut Vec<f64>,
    count: &mut usize,
    max_points: usize,
) -> Result<()> {
    if depth == current.len() {
        if *count >= max_points {
            return Err(PbcoError::NetTooLarge { max: max_points });
        }
        *count += 1;
        out.extend_from_slice(current);
        return Ok(());
    }
    for &v in axis {
        let s = partial + v * v;
        if s > r2 {
            continue;
        }
        current[depth] = v;
        enumerate(axis, depth + 1, s, r2, current, out, count, max_points)?;
    }
    Ok(())
}

/// Extremes of `<w, x>` over the net, split into `bins` bins. A collapsed
/// range is widened by `1e-9` so bins keep a positive width.
pub fn prediction_range(net: &ParameterNet, x: &[f64], bins: usize) -> Result<PredictionRange> {
    if net.is_empty() {
        return Err(PbcoError::EmptyNet);
    }
    if x.len() != net.dim() {
        return Err(PbcoError::DimensionMismatch { expected: net.dim(), got: x.len() });
    }
    check_finite(x, "context")?;
    let (lo, hi) = net
        .points()
        .map(|w| dot(w, x))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    let hi = if hi <= lo { lo + 1e-9 } else { hi };
    PredictionRange::new(lo, hi, bins)
}

/// Projects onto `{w : ||w|| <= W, <w, x> in [pred_lo + alpha, pred_hi - alpha]}`
/// by alternating between the slab and the ball.
pub fn project_w_alpha(w: &[f64], x: &[f64], config: &ProblemConfig, alpha: f64) -> Result<Vec<f64>> {
    if w.len() != x.len() {
        return Err(PbcoError::DimensionMismatch { expected: w.len(), got: x.len() });
    }
    check_finite(w, "point to project")?;
    check_finite(x, "context")?;
    let half_width = 0.5 * config.pred_width();
    if !(alpha >= 0.0 && alpha < half_width) {
        return Err(PbcoError::InvalidConfig(format!(
            "margin alpha must lie in [0, {half_width}), got {alpha}"
        )));
    }
    let lo = config.pred_lo + alpha;
    let hi = config.pred_hi - alpha;
    let radius = config.radius;
    let x_sq = dot(x, x);
    let reach = radius * x_sq.sqrt();
    // <w, x> ranges over [-W ||x||, W ||x||] on the ball.
    if lo > reach + PROJECTION_TOL || hi < -reach - PROJECTION_TOL {
        return Err(PbcoError::EmptyIntersection { radius, lo, hi });
    }

    let mut cur = w.to_vec();
    let mut prev = vec![0.0; w.len()];
    for _ in 0..PROJECTION_MAX_ITERS {
        prev.copy_from_slice(&cur);
        project_slab_in_place(&mut cur, x, x_sq, lo, hi);
        project_ball_in_place(&mut cur, radius);
        let moved = prev.iter().zip(&cur).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if moved < PROJECTION_TOL {
            break;
        }
    }
    Ok(cur)
}
