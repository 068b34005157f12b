//! Surrogate losses, the ISRES evolution strategy, and the constrained choice
//! of the trade-off level α.

mod isres;
mod select;
mod surrogate;

pub use isres::{isres_minimize, isres_minimize_problem, ConstrainedProblem, IsresConfig, IsresResult};
pub use select::{select_alpha, select_alpha_with, AlphaSelection, GridRecord, PairSlack, SurrogateGrid};
pub use surrogate::{surrogate_H, surrogate_h, surrogate_h_derivative, SurrogateParams};
