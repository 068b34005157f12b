//! Nuisance models: propensity scores and base decision-function learners.
//!
//! Every scorer is a kernel expansion over standardized covariates with the
//! group appended as one-hot features. Linear-kernel fits are stored in
//! collapsed form: one support point per coordinate basis vector.

mod model;
mod owl;
mod propensity;
mod ridge;

pub use model::{median_heuristic_bandwidth, DecisionModel, FeatureScaler, KernelSpec};
pub use owl::{fit_owl, fit_owl_cv, OwlObjective, DEFAULT_RIDGE_GRID};
pub use propensity::{fit_propensity, PropensityModel};
pub use ridge::{fit_kernel_ridge, fit_outcome_model, fit_qlearning, OutcomeModel};

pub(crate) use model::Basis;
pub(crate) use propensity::{sigmoid, softplus};
