pub mod counterfactual;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod lifetables;
pub mod market;
pub mod preferences;
pub mod quadrature;
pub mod rng;
mod serde_nan;
pub mod valuation;

pub use error::{Error, Result};
