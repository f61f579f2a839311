//! Multi-group fairness auditing and construction over explicit finite
//! populations, and its correspondence with graph regularity.

pub mod audits;
pub mod construct;
pub mod dist;
pub mod error;
pub mod graph;
pub mod noregret;
pub mod oi;
pub mod omni;
pub mod population;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Eps, Rational, Scalar};
