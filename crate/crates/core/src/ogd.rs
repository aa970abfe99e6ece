//! Online gradient descent with one-point gradient estimates.
//!
//! [`OgdLearner`] perturbs the scalar prediction by `+-delta`, so its estimate
//! lives along the context direction only. [`FlaxmanLearner`] is the
//! structure-agnostic baseline that perturbs the parameter itself along a
//! uniform direction on the sphere.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::environments::{LossBounds, LossOracle, PointLossOracle};
use crate::error::{PbcoError, Result};
use crate::geometry::{dot, norm, project_ball, project_w_alpha, ProblemConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OgdParams {
    pub eta: f64,
    pub delta: f64,
    pub alpha: f64,
}

impl OgdParams {
    pub fn new(eta: f64, delta: f64, alpha: f64) -> Result<Self> {
        for (v, name) in [(eta, "eta"), (delta, "delta"), (alpha, "alpha")] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PbcoError::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(Self { eta, delta, alpha })
    }
}

/// `delta = sqrt(W D C / (3 L sqrt T))`, `eta = W delta / (D C sqrt T)`, `alpha = delta`.
pub fn ogd_defaults(config: &ProblemConfig) -> OgdParams {
    let sqrt_t = (config.horizon as f64).sqrt();
    let (w, d, c, l) = (config.radius, config.grad_bound, config.loss_bound, config.lipschitz);
    let delta = (w * d * c / (3.0 * l * sqrt_t)).sqrt();
    OgdParams { eta: w * delta / (d * c * sqrt_t), delta, alpha: delta }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// `(1/delta) loss u grad_g`.
pub fn one_point_gradient(observed_loss: f64, u: Sign, delta: f64, grad_g: &[f64]) -> Vec<f64> {
    let s = observed_loss * u.value() / delta;
    grad_g.iter().map(|g| s * g).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OgdStep {
    /// Iterate after the in-round projection.
    pub w: Vec<f64>,
    pub u: Sign,
    pub a_t: f64,
    pub incurred_loss: f64,
}

#[derive(Debug, Clone)]
pub struct OgdLearner {
    w: Vec<f64>,
    params: OgdParams,
    config: ProblemConfig,
    bounds: LossBounds,
}

impl OgdLearner {
    pub fn new(config: ProblemConfig, params: OgdParams, bounds: LossBounds) -> Result<Self> {
        config.validate()?;
        OgdParams::new(params.eta, params.delta, params.alpha)?;
        Ok(Self { w: vec![0.0; config.dim], params, config, bounds })
    }

    /// Current (unprojected) iterate.
    pub fn iterate(&self) -> &[f64] {
        &self.w
    }

    pub fn params(&self) -> OgdParams {
        self.params
    }

    pub fn set_iterate(&mut self, w: Vec<f64>) -> Result<()> {
        if w.len() != self.config.dim {
            return Err(PbcoError::DimensionMismatch { expected: self.config.dim, got: w.len() });
        }
        self.w = w;
        Ok(())
    }

    pub fn step<O, R>(&mut self, x: &[f64], oracle: &mut O, rng: &mut R) -> Result<OgdStep>
    where
        O: LossOracle + ?Sized,
        R: Rng + ?Sized,
    {
        let u = Sign::random(rng);
        self.step_with_sign(x, oracle, u)
    }

    pub fn step_with_sign<O>(&mut self, x: &[f64], oracle: &mut O, u: Sign) -> Result<OgdStep>
    where
        O: LossOracle + ?Sized,
    {
        if x.len() != self.config.dim {
            return Err(PbcoError::DimensionMismatch { expected: self.config.dim, got: x.len() });
        }
        let w = project_w_alpha(&self.w, x, &self.config, self.params.alpha)?;
        let a_t = dot(&w, x) + self.params.delta * u.value();
        let loss = self.bounds.check(oracle.query(a_t)?)?;
        let g = one_point_gradient(loss, u, self.params.delta, x);
        self.w = w.iter().zip(&g).map(|(wi, gi)| wi - self.params.eta * gi).collect();
        Ok(OgdStep { w, u, a_t, incurred_loss: loss })
    }
}

/// Uniform direction on the unit sphere in `dim` dimensions.
pub fn sphere_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// `(d/delta) loss u`.
pub fn sphere_gradient(observed_loss: f64, u: &[f64], delta: f64) -> Vec<f64> {
    let s = u.len() as f64 * observed_loss / delta;
    u.iter().map(|c| s * c).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlaxmanStep {
    pub w_played: Vec<f64>,
    pub incurred_loss: f64,
}

#[derive(Debug, Clone)]
pub struct FlaxmanLearner {
    w: Vec<f64>,
    params: OgdParams,
    config: ProblemConfig,
    bounds: LossBounds,
}

impl FlaxmanLearner {
    pub fn new(config: ProblemConfig, params: OgdParams, bounds: LossBounds) -> Result<Self> {
        config.validate()?;
        OgdParams::new(params.eta, params.delta, params.alpha)?;
        if params.delta >= config.radius {
            return Err(PbcoError::InvalidConfig(format!(
                "perturbation {} must be smaller than the radius {}",
                params.delta, config.radius
            )));
        }
        Ok(Self { w: vec![0.0; config.dim], params, config, bounds })
    }

    pub fn iterate(&self) -> &[f64] {
        &self.w
    }

    /// Radius `(1 - delta/W) W` of the shrunk ball.
    pub fn shrunk_radius(&self) -> f64 {
        self.config.radius - self.params.delta
    }

    pub fn step<O, R>(&mut self, oracle: &mut O, rng: &mut R) -> Result<FlaxmanStep>
    where
        O: PointLossOracle + ?Sized,
        R: Rng + ?Sized,
    {
        let r = self.shrunk_radius();
        let w = project_ball(&self.w, r)?;
        let u = sphere_direction(self.config.dim, rng);
        let played: Vec<f64> = w.iter().zip(&u).map(|(a, b)| a + self.params.delta * b).collect();
        let loss = self.bounds.check(oracle.query_point(&played)?)?;
        let g = sphere_gradient(loss, &u, self.params.delta);
        let next: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - self.params.eta * b).collect();
        self.w = project_ball(&next, r)?;
        Ok(FlaxmanStep { w_played: played, incurred_loss: loss })
    }
}
