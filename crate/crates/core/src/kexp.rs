//! Kernelized exponential weights over a finite parameter net.
//!
//! Each round the weights `p` are pushed through the link to a binned law `q`
//! over predictions, a prediction is drawn from the smoothed law `K q`, a net
//! point in that bin is played, and the single observed loss is turned into a
//! per-bin estimate that is lifted back to every net point.

use rand::Rng;

use crate::environments::{LossBounds, LossOracle};
use crate::error::{PbcoError, Result};
use crate::geometry::{ParameterNet, PredictionRange, ProblemConfig};
use crate::kernel1d::{default_bins, loss_estimate, Atom, BinnedDensity, KernelParams, SmoothedLaw};

const WEIGHT_TOL: f64 = 1e-9;

/// Probability vector over the points of a net.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(PbcoError::EmptyNet);
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(PbcoError::InvalidDensity("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(PbcoError::InvalidDensity(format!("weights sum to {total}")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(PbcoError::EmptyNet);
        }
        Ok(Self { weights: vec![1.0 / n as f64; n] })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KexpParams {
    pub eta: f64,
    pub eps: f64,
}

impl KexpParams {
    pub fn new(eta: f64, eps: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0 && eps.is_finite() && eps > 0.0) {
            return Err(PbcoError::InvalidConfig(format!("need eta > 0 and eps > 0, got {eta}, {eps}")));
        }
        Ok(Self { eta, eps })
    }
}

/// `B = 2(1 + ln(3LT) + ln(width))`, floored at 2.
pub fn variance_constant(config: &ProblemConfig) -> f64 {
    let t = config.horizon as f64;
    let b = 2.0 * (1.0 + (3.0 * config.lipschitz * t).ln() + config.pred_width().ln());
    b.max(2.0)
}

/// `eps = 1/(3LT)`, `eta = sqrt(2 d ln(L'T) / (B C^2 T))`.
pub fn kexp_defaults(config: &ProblemConfig) -> KexpParams {
    let t = config.horizon as f64;
    let eps = 1.0 / (3.0 * config.lipschitz * t);
    let log_term = (config.scaled_lipschitz() * t).max(2.0).ln();
    let b = variance_constant(config);
    let eta = (2.0 * config.dim as f64 * log_term / (b * config.loss_bound.powi(2) * t)).sqrt();
    KexpParams { eta, eps }
}

/// Bin masses of the pushforward of `p` through `w -> <w, x>`.
pub fn marginalize(p: &WeightVector, net: &ParameterNet, x: &[f64], range: &PredictionRange) -> Result<BinnedDensity> {
    check_sizes(p, net, x)?;
    let mut mass = vec![0.0; range.bins];
    for (w, pi) in net.points().zip(p.as_slice()) {
        mass[range.bin_of(crate::geometry::dot(w, x))] += pi;
    }
    BinnedDensity::new(*range, mass)
}

fn check_sizes(p: &WeightVector, net: &ParameterNet, x: &[f64]) -> Result<()> {
    if p.len() != net.len() {
        return Err(PbcoError::DimensionMismatch { expected: net.len(), got: p.len() });
    }
    if x.len() != net.dim() {
        return Err(PbcoError::DimensionMismatch { expected: net.dim(), got: x.len() });
    }
    Ok(())
}

/// Occupied bin nearest to `bin`; ties go to the lower index.
fn nearest_occupied(counts: &[usize], bin: usize) -> Option<usize> {
    if counts[bin] > 0 {
        return Some(bin);
    }
    for dist in 1..counts.len() {
        if dist <= bin && counts[bin - dist] > 0 {
            return Some(bin - dist);
        }
        if bin + dist < counts.len() && counts[bin + dist] > 0 {
            return Some(bin + dist);
        }
    }
    None
}

/// Index of a uniformly random net point whose prediction lies in the bin of
/// `y_t`, falling back to the nearest occupied bin.
pub fn select_parameter<R: Rng + ?Sized>(
    net: &ParameterNet,
    x: &[f64],
    y_t: f64,
    range: &PredictionRange,
    rng: &mut R,
) -> Result<usize> {
    if net.is_empty() {
        return Err(PbcoError::EmptyNet);
    }
    let bins: Vec<usize> = net.predictions(x).iter().map(|y| range.bin_of(*y)).collect();
    let mut counts = vec![0usize; range.bins];
    for b in &bins {
        counts[*b] += 1;
    }
    let target = nearest_occupied(&counts, range.bin_of(y_t)).ok_or(PbcoError::EmptyNet)?;
    let pick = rng.random_range(0..counts[target]);
    Ok(bins.iter().enumerate().filter(|(_, b)| **b == target).nth(pick).map(|(i, _)| i).expect("count matches"))
}

/// `p(w) exp(-eta f(w))`, renormalized with a max shift.
pub fn exp_weights_update(p: &WeightVector, estimates: &[f64], eta: f64) -> Result<WeightVector> {
    if estimates.len() != p.len() {
        return Err(PbcoError::DimensionMismatch { expected: p.len(), got: estimates.len() });
    }
    let logs: Vec<f64> = p
        .as_slice()
        .iter()
        .zip(estimates)
        .map(|(pi, f)| if *pi > 0.0 { pi.ln() - eta * f } else { f64::NEG_INFINITY })
        .collect();
    let mut logs = logs;
    let mut weights = vec![0.0; logs.len()];
    normalize_logs(&mut logs, &mut weights);
    Ok(WeightVector { weights })
}

/// Shifts log-weights so their maximum is zero and writes the normalized
/// probabilities.
fn normalize_logs(logs: &mut [f64], weights: &mut [f64]) {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (l, w) in logs.iter_mut().zip(weights.iter_mut()) {
        *l -= max;
        *w = l.exp();
        total += *w;
    }
    weights.iter_mut().for_each(|w| *w /= total);
}

/// Outcome of one learner round.
#[derive(Debug, Clone, PartialEq)]
pub struct KexpStep {
    pub index: usize,
    pub w: Vec<f64>,
    pub y_t: f64,
    /// Prediction of the played net point (where the loss was queried).
    pub prediction: f64,
    pub incurred_loss: f64,
}

/// Intermediate quantities of a round, for auditing.
#[derive(Debug, Clone)]
pub struct KexpRound {
    pub range: PredictionRange,
    pub q: BinnedDensity,
    pub kernel: KernelParams,
    pub density_at_y_t: f64,
    /// `l~` at every bin center.
    pub bin_estimates: Vec<f64>,
    /// `f~` at every net point.
    pub point_estimates: Vec<f64>,
    /// Weights before the update.
    pub p: WeightVector,
}

#[derive(Debug, Clone)]
pub struct KexpLearner {
    net: ParameterNet,
    params: KexpParams,
    bounds: LossBounds,
    log_w: Vec<f64>,
    p: Vec<f64>,
    preds: Vec<f64>,
    point_bin: Vec<usize>,
    bin_mass: Vec<f64>,
    bin_count: Vec<usize>,
    bin_est: Vec<f64>,
    touched: Vec<usize>,
}

impl KexpLearner {
    pub fn new(net: ParameterNet, params: KexpParams, bounds: LossBounds) -> Result<Self> {
        let p = WeightVector::uniform(net.len())?;
        Self::with_weights(net, params, bounds, p)
    }

    pub fn with_weights(net: ParameterNet, params: KexpParams, bounds: LossBounds, p: WeightVector) -> Result<Self> {
        KexpParams::new(params.eta, params.eps)?;
        if p.len() != net.len() {
            return Err(PbcoError::DimensionMismatch { expected: net.len(), got: p.len() });
        }
        let n = net.len();
        let log_w = p.as_slice().iter().map(|v| v.ln()).collect();
        Ok(Self {
            net,
            params,
            bounds,
            log_w,
            p: p.weights,
            preds: vec![0.0; n],
            point_bin: vec![0; n],
            bin_mass: Vec::new(),
            bin_count: Vec::new(),
            bin_est: Vec::new(),
            touched: Vec::new(),
        })
    }

    pub fn net(&self) -> &ParameterNet {
        &self.net
    }

    pub fn params(&self) -> KexpParams {
        self.params
    }

    pub fn weights(&self) -> WeightVector {
        WeightVector { weights: self.p.clone() }
    }

    pub fn step<O, R>(&mut self, x: &[f64], oracle: &mut O, rng: &mut R) -> Result<KexpStep>
    where
        O: LossOracle + ?Sized,
        R: Rng + ?Sized,
    {
        self.run_round(x, oracle, rng, false).map(|(s, _)| s)
    }

    /// Like [`step`](Self::step), also returning the round's intermediate quantities.
    pub fn step_audited<O, R>(&mut self, x: &[f64], oracle: &mut O, rng: &mut R) -> Result<(KexpStep, KexpRound)>
    where
        O: LossOracle + ?Sized,
        R: Rng + ?Sized,
    {
        self.run_round(x, oracle, rng, true).map(|(s, r)| (s, r.expect("audit requested")))
    }

    fn run_round<O, R>(&mut self, x: &[f64], oracle: &mut O, rng: &mut R, audit: bool) -> Result<(KexpStep, Option<KexpRound>)>
    where
        O: LossOracle + ?Sized,
        R: Rng + ?Sized,
    {
        if x.len() != self.net.dim() {
            return Err(PbcoError::DimensionMismatch { expected: self.net.dim(), got: x.len() });
        }
        let eps = self.params.eps;
        for (y, w) in self.preds.iter_mut().zip(self.net.points()) {
            *y = crate::geometry::dot(w, x);
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in &self.preds {
            lo = lo.min(*y);
            hi = hi.max(*y);
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(PbcoError::NonFinite("net predictions"));
        }
        if hi - lo < 1e-9 {
            lo -= 1e-9;
            hi += 1e-9;
        }
        let range = PredictionRange::new(lo, hi, default_bins(hi - lo, eps))?;

        // Sparse marginal over the touched bins.
        self.bin_mass.clear();
        self.bin_mass.resize(range.bins, 0.0);
        self.bin_count.clear();
        self.bin_count.resize(range.bins, 0);
        self.bin_est.clear();
        self.bin_est.resize(range.bins, 0.0);
        self.touched.clear();
        for (i, y) in self.preds.iter().enumerate() {
            let b = range.bin_of(*y);
            self.point_bin[i] = b;
            if self.bin_count[b] == 0 {
                self.touched.push(b);
            }
            self.bin_count[b] += 1;
            self.bin_mass[b] += self.p[i];
        }
        let atoms: Vec<Atom> = self
            .touched
            .iter()
            .map(|b| Atom { at: range.center(*b), mass: self.bin_mass[*b] })
            .collect();
        let y_bar: f64 = atoms.iter().map(|a| a.at * a.mass).sum::<f64>() / atoms.iter().map(|a| a.mass).sum::<f64>();
        let kp = KernelParams::within(y_bar.clamp(range.lo, range.hi), eps, range.lo, range.hi)?;
        let law = SmoothedLaw::new(atoms, kp);

        let y_t = law.sample(rng);
        let dens = law.density_at(y_t);
        let target = nearest_occupied(&self.bin_count, range.bin_of(y_t)).ok_or(PbcoError::EmptyNet)?;
        let pick = rng.random_range(0..self.bin_count[target]);
        let index = self
            .point_bin
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == target)
            .nth(pick)
            .map(|(i, _)| i)
            .expect("count matches");
        let prediction = self.preds[index];
        let loss = self.bounds.check(oracle.query(prediction)?)?;

        for b in &self.touched {
            self.bin_est[*b] = loss_estimate(loss, y_t, dens, range.center(*b), &kp)?;
        }

        let round = if audit {
            let mut mass = vec![0.0; range.bins];
            for b in &self.touched {
                mass[*b] = self.bin_mass[*b];
            }
            let q = BinnedDensity::new(range, mass)?;
            let bin_estimates = (0..range.bins)
                .map(|k| loss_estimate(loss, y_t, dens, range.center(k), &kp))
                .collect::<Result<Vec<_>>>()?;
            Some(KexpRound {
                range,
                q,
                kernel: kp,
                density_at_y_t: dens,
                bin_estimates,
                point_estimates: self.point_bin.iter().map(|b| self.bin_est[*b]).collect(),
                p: WeightVector { weights: self.p.clone() },
            })
        } else {
            None
        };

        let eta = self.params.eta;
        for (lw, b) in self.log_w.iter_mut().zip(&self.point_bin) {
            *lw -= eta * self.bin_est[*b];
        }
        normalize_logs(&mut self.log_w, &mut self.p);

        let step = KexpStep {
            index,
            w: self.net.point(index).to_vec(),
            y_t,
            prediction,
            incurred_loss: loss,
        };
        Ok((step, round))
    }
}
