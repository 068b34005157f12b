//! Fair individualized treatment rules.
//!
//! Takes any scored treatment rule `f(x, s)` and transports its group-wise
//! score distributions onto their one-dimensional Wasserstein barycenter,
//! which yields a decision function whose distribution does not depend on the
//! sensitive attribute. An α-indexed blend between the original and the
//! transported score, weighted by the estimated treatment effect, trades
//! policy value against disparate impact; [`solver::select_alpha`] picks α
//! under a disparate-impact floor.
//!
//! The crate is `no_std` and only needs `alloc`. IO, file formats and the
//! command line live in the companion `fairitr` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cate;
pub mod data;
mod error;
pub mod linalg;
pub mod metrics;
pub mod nuisance;
pub mod rng;
pub mod solver;
pub mod transport;

pub use error::{Error, Result};
