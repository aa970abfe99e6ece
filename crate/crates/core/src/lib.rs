//! Bandit convex optimization for losses of the form `l_t(<w, x_t>)`.
//!
//! Two learners cover the two regimes: kernelized exponential weights over a
//! parameter net ([`kexp`]) and one-point gradient descent ([`ogd`]).
//! [`dispatcher`] picks between them from the problem constants, and
//! [`harness`] runs seeded experiments against [`environments`].

pub mod dispatcher;
pub mod environments;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kernel1d;
pub mod kexp;
pub mod ogd;
pub mod verification;

pub use dispatcher::{choose_regime, run, run_algorithm, Algorithm, Regime, RegimeChoice, RunOptions, RunOutcome};
pub use environments::{Environment, LossBounds, LossOracle, PointLossOracle};
pub use error::{PbcoError, Result};
pub use geometry::{ParameterNet, PredictionRange, ProblemConfig};
pub use harness::{emit_csv, run_experiment, EnvKind, ExperimentConfig, ExperimentResult, RegretTrace};
pub use kernel1d::{BinnedDensity, KernelParams};
pub use kexp::{KexpLearner, KexpParams, WeightVector};
pub use ogd::{FlaxmanLearner, OgdLearner, OgdParams};
pub use verification::CheckReport;
