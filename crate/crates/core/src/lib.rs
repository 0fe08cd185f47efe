//! Linearly implicit Runge–Kutta schemes that conserve a quadratic invariant
//! `V(y) = ½⟨y, Qy⟩` of `ẏ = S(y)∇V(y)` for every step size, with the
//! supporting tableaux, order-condition checker, predictors, test problems
//! and experiment drivers.

pub mod error;
pub mod harness;
pub mod integrator;
pub mod linalg;
pub mod ordercond;
pub mod predictor;
pub mod problems;
pub mod special;
pub mod tableau;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
pub use integrator::{
    base_rk_reference, conservative_step, explicit_iterate, integrate, prk_step, semi_implicit_iterate,
    IterationConfig, IterationMode, Scheme, StepRecord, StoppingRule, Trajectory,
};
pub use predictor::{Predictor, PredictorKind, PredictorState};
pub use problems::{KdVSpectralProblem, KeplerProblem, ProblemId, QuadraticOde, RigidBodyProblem};
pub use tableau::{ButcherTableau, PartitionedTableau, TableauId};
