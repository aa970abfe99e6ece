//! Brute-force oracles for the identities the learners rely on.
//!
//! Every check is deterministic given its inputs and returns a
//! [`CheckReport`] whose `Display` form is the machine-readable line
//! `CHECK <name> PASS|FAIL max_dev=<value>`.

use std::fmt;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::Result;
use crate::geometry::{dot, ParameterNet, PredictionRange};
use crate::kernel1d::{loss_estimate, BinnedDensity, SmoothedLaw};
use crate::kexp::{marginalize, WeightVector};
use crate::ogd::{one_point_gradient, sphere_direction, sphere_gradient, Sign};

const FALLBACK_NODES: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub max_dev: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: impl Into<String>, max_dev: f64, tolerance: f64, detail: String) -> Self {
        Self { name: name.into(), max_dev, tolerance, passed: max_dev <= tolerance, detail }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CHECK {} {} max_dev={:e}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.max_dev
        )
    }
}

/// A scalar loss with a segment average.
pub trait ScalarLoss {
    fn value(&self, y: f64) -> f64;

    /// Mean of the loss over `[lo, hi]`; midpoint rule unless overridden.
    fn average(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return self.value(lo);
        }
        let h = (hi - lo) / FALLBACK_NODES as f64;
        (0..FALLBACK_NODES).map(|i| self.value(lo + (i as f64 + 0.5) * h)).sum::<f64>() / FALLBACK_NODES as f64
    }
}

/// Wraps a closure as a [`ScalarLoss`] with the default average.
pub struct FnLoss<F>(pub F);

impl<F: Fn(f64) -> f64> ScalarLoss for FnLoss<F> {
    fn value(&self, y: f64) -> f64 {
        (self.0)(y)
    }
}

/// Convex piecewise-linear loss `max_i (slope_i y + intercept_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    pub pieces: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(pieces: Vec<(f64, f64)>) -> Self {
        assert!(!pieces.is_empty(), "piecewise-linear loss needs at least one piece");
        Self { pieces }
    }

    /// `|y - center|` scaled by `slope`.
    pub fn abs(center: f64, slope: f64) -> Self {
        Self::new(vec![(slope, -slope * center), (-slope, slope * center)])
    }

    pub fn lipschitz(&self) -> f64 {
        self.pieces.iter().map(|p| p.0.abs()).fold(0.0, f64::max)
    }
}

impl ScalarLoss for PiecewiseLinear {
    fn value(&self, y: f64) -> f64 {
        self.pieces.iter().map(|(a, b)| a * y + b).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Exact: trapezoids between every pairwise crossing inside the interval.
    fn average(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return self.value(lo);
        }
        let mut knots = vec![lo, hi];
        for (i, (a1, b1)) in self.pieces.iter().enumerate() {
            for (a2, b2) in &self.pieces[i + 1..] {
                if a1 != a2 {
                    let y = (b2 - b1) / (a1 - a2);
                    if y > lo && y < hi {
                        knots.push(y);
                    }
                }
            }
        }
        knots.sort_by(f64::total_cmp);
        let area: f64 = knots
            .windows(2)
            .map(|w| 0.5 * (self.value(w[0]) + self.value(w[1])) * (w[1] - w[0]))
            .sum();
        area / (hi - lo)
    }
}

/// `K* loss (y)` with the loss's own segment average.
pub fn adjoint_of(loss: &dyn ScalarLoss, y: f64, law: &SmoothedLaw) -> f64 {
    let seg = law.kernel().segment(y);
    loss.average(seg.lo, seg.hi)
}

/// Expected estimate at each bin center of `q` carrying mass, with `y_t`
/// drawn from the exact law `K q`, against the adjoint at the same point.
///
/// The law of `y_t` is enumerated bin by bin and, within a bin, over the
/// constant pieces of `K q`. Bins without mass are skipped: there `K q` may
/// vanish on part of the kernel segment and the identity does not apply.
pub fn check_estimator_unbiased(q: &BinnedDensity, loss: &dyn ScalarLoss, eps: f64, tolerance: f64) -> Result<CheckReport> {
    let law = SmoothedLaw::from_density(q, eps)?;
    let kp = *law.kernel();
    let range = q.range();
    let pieces = law.pieces();
    let mut max_dev = 0.0f64;
    let mut worst = f64::NAN;
    for (k, m) in q.mass().iter().enumerate() {
        if *m <= 0.0 {
            continue;
        }
        let y = range.center(k);
        let mut mean = 0.0;
        for j in 0..range.bins {
            let (blo, bhi) = (range.bin_lo(j), range.bin_hi(j));
            for p in &pieces {
                let lo = p.lo.max(blo);
                let hi = p.hi.min(bhi);
                if hi <= lo {
                    continue;
                }
                let prob = p.density * (hi - lo);
                // The estimate is linear in the observed loss, so its mean
                // over the sub-interval uses the mean loss there.
                let mid = 0.5 * (lo + hi);
                mean += prob * loss_estimate(loss.average(lo, hi), mid, p.density, y, &kp)?;
            }
        }
        let dev = (mean - adjoint_of(loss, y, &law)).abs();
        if dev > max_dev || max_dev.is_nan() {
            max_dev = dev;
            worst = y;
        }
    }
    Ok(CheckReport::new("estimator_unbiased", max_dev, tolerance, format!("worst at y = {worst}")))
}

/// Losses whose smoothed derivative `d/dy E_u[l(y + delta u)]` is known in
/// closed form, `u` uniform on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestLoss {
    /// Coefficients in increasing degree.
    Polynomial(Vec<f64>),
    Exp,
    Abs,
}

impl TestLoss {
    pub fn value(&self, y: f64) -> f64 {
        match self {
            TestLoss::Polynomial(c) => c.iter().rev().fold(0.0, |acc, a| acc * y + a),
            TestLoss::Exp => y.exp(),
            TestLoss::Abs => y.abs(),
        }
    }

    pub fn smoothed_derivative(&self, y: f64, delta: f64) -> f64 {
        match self {
            TestLoss::Polynomial(c) => {
                // sum over even j of l^(j+1)(y) delta^j / (j+1)!
                let mut deriv = derivative(c);
                let mut total = 0.0;
                let mut j = 0usize;
                let mut fact = 1.0;
                while !deriv.is_empty() {
                    if j % 2 == 0 {
                        total += eval_poly(&deriv, y) * delta.powi(j as i32) / fact;
                    }
                    j += 1;
                    fact *= (j + 1) as f64;
                    deriv = derivative(&deriv);
                }
                total
            }
            TestLoss::Exp => y.exp() * delta.sinh() / delta,
            TestLoss::Abs => {
                if y.abs() >= delta {
                    y.signum()
                } else {
                    y / delta
                }
            }
        }
    }
}

fn eval_poly(c: &[f64], y: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * y + a)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, a)| i as f64 * a).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    /// Exact `u`-average of the one-point estimator against the closed form.
    pub exact: CheckReport,
    pub two_point: f64,
    pub smoothed_derivative: f64,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    /// Monte-Carlo mean within three standard errors of the closed form.
    pub monte_carlo: CheckReport,
}

/// One-point estimator identity in one dimension.
pub fn check_gradient_identity(loss: &TestLoss, y: f64, delta: f64, samples: usize, seed: u64, tolerance: f64) -> GradientReport {
    let plus = one_point_gradient(loss.value(y + delta), Sign::Plus, delta, &[1.0])[0];
    let minus = one_point_gradient(loss.value(y - delta), Sign::Minus, delta, &[1.0])[0];
    let two_point = 0.5 * (plus + minus);
    let target = loss.smoothed_derivative(y, delta);
    let exact = CheckReport::new(
        "gradient_identity",
        (two_point - target).abs(),
        tolerance,
        format!("y = {y}, delta = {delta}"),
    );

    let mut rng = StdRng::seed_from_u64(seed);
    let n = samples.max(2);
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            let u = Sign::random(&mut rng);
            one_point_gradient(loss.value(y + delta * u.value()), u, delta, &[1.0])[0]
        })
        .collect();
    let (mean, se) = mean_and_se(&draws);
    let z = standardized(mean - target, se);
    GradientReport {
        exact,
        two_point,
        smoothed_derivative: target,
        mc_mean: mean,
        mc_std_error: se,
        monte_carlo: CheckReport::new("gradient_monte_carlo", z, 3.0, format!("{n} samples")),
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn standardized(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff.abs() / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Sphere estimator `(d/delta) ||w + delta u||^2 u` against the smoothed
/// gradient `2w`; `max_dev` is the largest per-coordinate z-score.
pub fn check_sphere_gradient(w: &[f64], delta: f64, samples: usize, seed: u64) -> CheckReport {
    let d = w.len();
    let mut rng = StdRng::seed_from_u64(seed);
    let n = samples.max(2);
    let mut cols = vec![Vec::with_capacity(n); d];
    for _ in 0..n {
        let u = sphere_direction(d, &mut rng);
        let played: Vec<f64> = w.iter().zip(&u).map(|(a, b)| a + delta * b).collect();
        let g = sphere_gradient(dot(&played, &played), &u, delta);
        for (c, gi) in cols.iter_mut().zip(g) {
            c.push(gi);
        }
    }
    let z = cols
        .iter()
        .zip(w)
        .map(|(c, wi)| {
            let (m, se) = mean_and_se(c);
            standardized(m - 2.0 * wi, se)
        })
        .fold(0.0, f64::max);
    CheckReport::new("sphere_gradient", z, 3.0, format!("d = {d}, {n} samples"))
}

/// Adjoint Lipschitz ratio, domination with weight one half, and the
/// variance integral bound, at the bin centers of `q`. `max_dev` is the
/// largest violation (negative when every property holds with slack).
pub fn check_kernel_properties(q: &BinnedDensity, eps: f64, loss: &dyn ScalarLoss, lipschitz: f64, tolerance: f64) -> Result<CheckReport> {
    let law = SmoothedLaw::from_density(q, eps)?;
    let range = q.range();
    let centers: Vec<f64> = (0..range.bins).map(|k| range.center(k)).collect();
    let adj: Vec<f64> = centers.iter().map(|y| adjoint_of(loss, *y, &law)).collect();

    let mut ratio = 0.0f64;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            ratio = ratio.max((adj[i] - adj[j]).abs() / (centers[j] - centers[i]));
        }
    }

    let smoothed_mean: f64 = law.pieces().iter().map(|p| p.density * (p.hi - p.lo) * loss.average(p.lo, p.hi)).sum();
    let mut domination = f64::NEG_INFINITY;
    for (y, a) in centers.iter().zip(&adj) {
        let bound = 0.5 * smoothed_mean + 0.5 * loss.value(*y) + 3.0 * eps * lipschitz;
        domination = domination.max(a - bound);
    }

    let b = 2.0 * (1.0 + (1.0 / eps).ln() + range.width().ln());
    let variance = crate::kernel1d::variance_ratio_integral(q, eps)?;

    let violations = [ratio - lipschitz, domination, variance - b];
    let max_dev = violations.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(CheckReport::new(
        "kernel_properties",
        max_dev,
        tolerance,
        format!("lipschitz ratio {ratio:.6} (L = {lipschitz}), domination slack {:.3e}, variance {variance:.4} (B = {b:.4})", -domination),
    ))
}

/// `<p, f~>` over the net against `<q, l~>` over bins, with `f~` the per-bin
/// values lifted to net points.
pub fn check_pq_duality(
    p: &WeightVector,
    net: &ParameterNet,
    x: &[f64],
    range: &PredictionRange,
    bin_values: &[f64],
    tolerance: f64,
) -> Result<CheckReport> {
    let q = marginalize(p, net, x, range)?;
    let net_side: f64 = net
        .points()
        .zip(p.as_slice())
        .map(|(w, pi)| pi * bin_values[range.bin_of(dot(w, x))])
        .sum();
    let bin_side: f64 = q.mass().iter().zip(bin_values).map(|(m, v)| m * v).sum();
    Ok(CheckReport::new(
        "pq_duality",
        (net_side - bin_side).abs(),
        tolerance,
        format!("net {net_side}, bins {bin_side}"),
    ))
}

/// Fixed-seed suite run by the command line before experiments.
pub fn preflight() -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let r = PredictionRange::new(-1.0, 1.0, 64)?;

    let uniform = BinnedDensity::uniform(r);
    let linear = FnLoss(|y: f64| 0.5 + 0.3 * y);
    out.push(check_estimator_unbiased(&uniform, &linear, 0.01, 1e-6)?);

    let mut rng = StdRng::seed_from_u64(2024);
    let raw: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    let random_q = BinnedDensity::new(r, raw.iter().map(|v| v / s).collect())?;
    let kink = PiecewiseLinear::abs(0.3, 1.0);
    let mut rep = check_estimator_unbiased(&random_q, &kink, 0.01, 1e-6)?;
    rep.name = "estimator_unbiased_random".into();
    out.push(rep);

    let quad = check_gradient_identity(&TestLoss::Polynomial(vec![0.0, 0.0, 1.0]), 1.0, 0.5, 100_000, 1, 1e-12);
    out.push(quad.exact);
    out.push(CheckReport { name: "gradient_monte_carlo".into(), ..quad.monte_carlo });
    let exp = check_gradient_identity(&TestLoss::Exp, 0.3, 0.2, 10_000, 2, 1e-12);
    out.push(CheckReport { name: "gradient_identity_exp".into(), ..exp.exact });
    out.push(check_sphere_gradient(&[0.3, -0.2, 0.5], 0.25, 100_000, 3));

    out.push(check_kernel_properties(&uniform, 0.01, &kink, 1.0, 1e-6)?);
    let mut delta = check_kernel_properties(&BinnedDensity::point_mass(r, 40)?, 0.01, &kink, 1.0, 1e-6)?;
    delta.name = "kernel_properties_point_mass".into();
    out.push(delta);

    let net = crate::geometry::build_net(&crate::geometry::ProblemConfig::linear_ball(2, 100, 1.0, 1.0, 1.0, 1.0)?, 0.25)?;
    let x = [0.6, -0.7];
    let range = crate::geometry::prediction_range(&net, &x, 64)?;
    let raw: Vec<f64> = (0..net.len()).map(|_| rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    let p = WeightVector::new(raw.iter().map(|v| v / s).collect())?;
    let values: Vec<f64> = (0..range.bins).map(|_| rng.random::<f64>() * 10.0).collect();
    out.push(check_pq_duality(&p, &net, &x, &range, &values, 1e-12)?);
    Ok(out)
}
