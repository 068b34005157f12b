//! File formats, the simulation harness and the command-line front end for
//! `fairitr-core`.

pub mod audit;
pub mod cli;
pub mod error;
pub mod harness;
pub mod pipeline;
pub mod plot;
pub mod schema;

pub use error::{Error, Result};
