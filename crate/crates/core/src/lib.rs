//! Quantitative normal approximation for weighted sums of Bernoulli random
//! fields: dependence measures, moment and Berry-Esseen bounds, kernel
//! regression, and Monte Carlo checks.

pub mod bounds;
pub mod cli;
pub mod dependence;
pub mod error;
pub mod fields;
pub mod lattice;
pub mod montecarlo;
pub mod numeric;
pub mod regress;

pub use error::{Error, Result};
