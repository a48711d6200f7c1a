//! Fixed-budget pure-exploration sampling for Gaussian arms.
//!
//! The improved knowledge gradient (iKG) and its epsilon-good and feasibility
//! variants, the KG / EI / TTEI / equal-allocation baselines, large-deviations
//! rate computations, and a macro-replication experiment harness.

pub mod normal;
pub mod model;
pub mod policy;
pub mod variants;
pub mod par;
pub mod rates;
pub mod presets;
pub mod harness;
pub mod cli;

pub use model::{ArmSpec, ConstraintSense, Goal, ModelError, PosteriorState, ProblemInstance, TargetEstimate};
pub use policy::{select_arm, Policy, PolicyError};
pub use harness::{run_experiment, ExperimentConfig, ExperimentResult};
pub use presets::{preset, GoalKind};
pub use rates::{AllocationVector, RateError, RateKind};
