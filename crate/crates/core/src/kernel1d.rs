//! One-dimensional smoothing kernel over the prediction axis.
//!
//! Given a distribution `q` over predictions with mean `y_bar` and a width
//! `eps > 0`, the kernel `K(y, y')` spreads the mass sitting at `y'` uniformly
//! over the segment between `y'` and `y_bar` when `|y' - y_bar| >= eps`, and
//! uniformly over a window of width `eps` ending at `y_bar` otherwise. Every
//! source point therefore maps to a segment with constant height, and every
//! operator here reduces to sums over such segments:
//!
//! * [`smooth`] pushes a [`BinnedDensity`] through the kernel,
//! * [`adjoint`] averages a loss over the segment of one point,
//! * [`loss_estimate`] is the importance-weighted single-evaluation estimator,
//! * [`variance_ratio_integral`] integrates `K2 q / K q`.
//!
//! The mass of a binned density is treated as sitting at bin centers.

use rand::Rng;

use crate::error::{PbcoError, Result};
use crate::geometry::PredictionRange;

/// Midpoint nodes used by [`adjoint`].
pub const ADJOINT_NODES: usize = 64;

const MASS_TOL: f64 = 1e-9;

/// Default bin count for a range: enough bins that a width-`eps` window spans
/// at least one of them, and never fewer than 64.
pub fn default_bins(range_width: f64, eps: f64) -> usize {
    let needed = (range_width / eps).ceil();
    if needed.is_finite() && needed > 64.0 {
        needed as usize
    } else {
        64
    }
}

/// A probability mass located at a single prediction value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub at: f64,
    pub mass: f64,
}

/// Piecewise-constant probability density over a [`PredictionRange`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDensity {
    range: PredictionRange,
    mass: Vec<f64>,
}

impl BinnedDensity {
    pub fn new(range: PredictionRange, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != range.bins {
            return Err(PbcoError::InvalidDensity(format!(
                "{} masses for {} bins",
                mass.len(),
                range.bins
            )));
        }
        if let Some(m) = mass.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(PbcoError::InvalidDensity(format!("bin mass {m} is not a probability")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(PbcoError::InvalidDensity(format!("masses sum to {total}")));
        }
        Ok(Self { range, mass })
    }

    pub fn point_mass(range: PredictionRange, bin: usize) -> Result<Self> {
        let mut mass = vec![0.0; range.bins];
        *mass
            .get_mut(bin)
            .ok_or_else(|| PbcoError::InvalidDensity(format!("bin {bin} out of range")))? = 1.0;
        Self::new(range, mass)
    }

    pub fn uniform(range: PredictionRange) -> Self {
        let m = 1.0 / range.bins as f64;
        Self { range, mass: vec![m; range.bins] }
    }

    pub fn range(&self) -> &PredictionRange {
        &self.range
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Density of the piecewise-constant representation at `y`; zero outside the range.
    pub fn density_at(&self, y: f64) -> f64 {
        if y < self.range.lo || y > self.range.hi {
            return 0.0;
        }
        self.mass[self.range.bin_of(y)] / self.range.bin_width()
    }

    /// Nonzero bins as atoms at their centers.
    pub fn atoms(&self) -> Vec<Atom> {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(k, m)| Atom { at: self.range.center(k), mass: *m })
            .collect()
    }
}

pub fn mean_of(q: &BinnedDensity) -> f64 {
    q.mass.iter().enumerate().map(|(k, m)| m * q.range.center(k)).sum()
}

/// Closed interval carrying the uniform kernel mass of one source point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn height(&self) -> f64 {
        1.0 / self.len()
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lo && y <= self.hi
    }

    fn overlap(&self, lo: f64, hi: f64) -> f64 {
        (self.hi.min(hi) - self.lo.max(lo)).max(0.0)
    }
}

/// Mean `y_bar`, width `eps`, and the width-`eps` window used for sources
/// closer than `eps` to the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub y_bar: f64,
    pub eps: f64,
    window: Segment,
}

impl KernelParams {
    /// Kernel with the window `[y_bar - eps, y_bar]`.
    pub fn new(y_bar: f64, eps: f64) -> Result<Self> {
        Self::validate(y_bar, eps)?;
        Ok(Self { y_bar, eps, window: Segment { lo: y_bar - eps, hi: y_bar } })
    }

    /// Kernel whose window is shifted, if needed, to stay inside `[lo, hi]`.
    /// The window is `[y_bar - eps, y_bar]` whenever that already fits; when
    /// the range is narrower than `eps` the window is the whole range.
    pub fn within(y_bar: f64, eps: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::validate(y_bar, eps)?;
        if !(lo <= y_bar && y_bar <= hi) {
            return Err(PbcoError::InvalidConfig(format!(
                "kernel mean {y_bar} outside range [{lo}, {hi}]"
            )));
        }
        let len = eps.min(hi - lo);
        let start = (y_bar - len).max(lo).min(hi - len);
        Ok(Self { y_bar, eps, window: Segment { lo: start, hi: start + len } })
    }

    /// Kernel for a binned density: mean of `q`, window kept inside its range.
    pub fn for_density(q: &BinnedDensity, eps: f64) -> Result<Self> {
        let r = q.range();
        let y_bar = mean_of(q).clamp(r.lo, r.hi);
        Self::within(y_bar, eps, r.lo, r.hi)
    }

    fn validate(y_bar: f64, eps: f64) -> Result<()> {
        if !y_bar.is_finite() {
            return Err(PbcoError::NonFinite("kernel mean"));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(PbcoError::InvalidConfig(format!("kernel width must be > 0, got {eps}")));
        }
        Ok(())
    }

    pub fn window(&self) -> Segment {
        self.window
    }

    /// Support of `K(., source)`. At `|source - y_bar| == eps` the segment
    /// branch applies.
    pub fn segment(&self, source: f64) -> Segment {
        if (source - self.y_bar).abs() >= self.eps {
            Segment { lo: source.min(self.y_bar), hi: source.max(self.y_bar) }
        } else {
            self.window
        }
    }
}

/// `K(y, y_prime)`.
pub fn kernel_eval(y: f64, y_prime: f64, kp: &KernelParams) -> f64 {
    let seg = kp.segment(y_prime);
    if seg.contains(y) {
        seg.height()
    } else {
        0.0
    }
}

/// One constant piece of a smoothed density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    /// Value of `K q` on the piece.
    pub density: f64,
    /// Value of `K2 q = sum_j m_j K(y, y_j)^2` on the piece.
    pub second: f64,
}

/// The smoothed law `K q` of a set of atoms: exact density, pieces, sampler.
#[derive(Debug, Clone)]
pub struct SmoothedLaw {
    kp: KernelParams,
    atoms: Vec<Atom>,
    cumulative: Vec<f64>,
}

impl SmoothedLaw {
    pub fn new(atoms: Vec<Atom>, kp: KernelParams) -> Self {
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.mass;
                acc
            })
            .collect();
        Self { kp, atoms, cumulative }
    }

    pub fn from_density(q: &BinnedDensity, eps: f64) -> Result<Self> {
        let kp = KernelParams::for_density(q, eps)?;
        Ok(Self::new(q.atoms(), kp))
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kp
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Exact density of `K q` at `y`, counting segments as closed intervals.
    pub fn density_at(&self, y: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| {
                let seg = self.kp.segment(a.at);
                if seg.contains(y) {
                    a.mass * seg.height()
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Draws a source atom from `q`, then a point uniformly on its segment.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cumulative.last().expect("smoothed law has no atoms");
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|c| *c <= u).min(self.atoms.len() - 1);
        let seg = self.kp.segment(self.atoms[idx].at);
        seg.lo + rng.random::<f64>() * seg.len()
    }

    /// Exact piecewise-constant form of `K q` (and `K2 q`), sorted by position,
    /// covering only where the density is positive.
    pub fn pieces(&self) -> Vec<Piece> {
        // (position, delta density, delta second moment, delta active count)
        let mut events: Vec<(f64, f64, f64, i64)> = Vec::with_capacity(2 * self.atoms.len());
        for a in &self.atoms {
            let seg = self.kp.segment(a.at);
            if seg.is_empty() || a.mass <= 0.0 {
                continue;
            }
            let h = seg.height();
            events.push((seg.lo, a.mass * h, a.mass * h * h, 1));
            events.push((seg.hi, -a.mass * h, -a.mass * h * h, -1));
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut pieces = Vec::new();
        let (mut dens, mut second, mut active) = (0.0f64, 0.0f64, 0i64);
        let mut i = 0;
        while i < events.len() {
            let x = events[i].0;
            while i < events.len() && events[i].0 == x {
                dens += events[i].1;
                second += events[i].2;
                active += events[i].3;
                i += 1;
            }
            if active == 0 {
                dens = 0.0;
                second = 0.0;
            }
            if i < events.len() && active > 0 {
                let next = events[i].0;
                if next > x {
                    pieces.push(Piece { lo: x, hi: next, density: dens.max(0.0), second: second.max(0.0) });
                }
            }
        }
        pieces
    }

    /// Bin masses of `K q` over `range`, integrated exactly.
    pub fn binned(&self, range: &PredictionRange) -> Result<BinnedDensity> {
        let mut mass = vec![0.0; range.bins];
        for p in self.pieces() {
            let first = range.bin_of(p.lo);
            let last = range.bin_of(p.hi);
            let seg = Segment { lo: p.lo, hi: p.hi };
            for (k, m) in mass.iter_mut().enumerate().take(last + 1).skip(first) {
                *m += p.density * seg.overlap(range.bin_lo(k), range.bin_hi(k));
            }
        }
        BinnedDensity::new(*range, mass)
    }

    /// `<K q, f>` integrated piece by piece with `nodes` midpoint nodes each.
    pub fn expectation(&self, f: impl Fn(f64) -> f64, nodes: usize) -> f64 {
        self.pieces()
            .iter()
            .map(|p| p.density * (p.hi - p.lo) * midpoint_mean(&f, p.lo, p.hi, nodes))
            .sum()
    }
}

fn midpoint_mean(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, nodes: usize) -> f64 {
    let n = nodes.max(1);
    let h = (hi - lo) / n as f64;
    if h == 0.0 {
        return f(lo);
    }
    (0..n).map(|i| f(lo + (i as f64 + 0.5) * h)).sum::<f64>() / n as f64
}

/// Binned representation of `K q`.
pub fn smooth(q: &BinnedDensity, eps: f64) -> Result<BinnedDensity> {
    SmoothedLaw::from_density(q, eps)?.binned(q.range())
}

/// Draws `y ~ K q` by the two-stage sampler.
pub fn sample_smoothed<R: Rng + ?Sized>(q: &BinnedDensity, eps: f64, rng: &mut R) -> Result<f64> {
    Ok(SmoothedLaw::from_density(q, eps)?.sample(rng))
}

/// `K* loss (y)`: the average of `loss` over the kernel segment of `y`.
pub fn adjoint(loss: impl Fn(f64) -> f64, y: f64, kp: &KernelParams) -> f64 {
    adjoint_with(loss, y, kp, ADJOINT_NODES)
}

pub fn adjoint_with(loss: impl Fn(f64) -> f64, y: f64, kp: &KernelParams, nodes: usize) -> f64 {
    let seg = kp.segment(y);
    midpoint_mean(&loss, seg.lo, seg.hi, nodes)
}

/// Importance-weighted estimate of the loss at prediction `y` from a single
/// observation at `y_t`.
pub fn loss_estimate(
    observed_loss: f64,
    y_t: f64,
    density_at_y_t: f64,
    y: f64,
    kp: &KernelParams,
) -> Result<f64> {
    if !(density_at_y_t > 0.0) {
        return Err(PbcoError::NonPositiveDensity(density_at_y_t));
    }
    Ok(observed_loss / density_at_y_t * kernel_eval(y_t, y, kp))
}

/// `integral of K2 q / K q` over the support of `K q`.
pub fn variance_ratio_integral(q: &BinnedDensity, eps: f64) -> Result<f64> {
    let law = SmoothedLaw::from_density(q, eps)?;
    Ok(law
        .pieces()
        .iter()
        .filter(|p| p.density > 0.0)
        .map(|p| (p.hi - p.lo) * p.second / p.density)
        .sum())
}
