//! Simulation, distance certificates and Stein-equation solutions for
//! generalized Dickman distributions.

pub mod claims;
pub mod dickman;
pub mod error;
pub mod metrics;
pub mod numeric;
pub mod prime_sums;
pub mod primes;
pub mod report;
pub mod rng;
pub mod stats;
pub mod stein;
pub mod testfn;
pub mod utility;
pub mod weighted;

pub use dickman::{DickmanSpec, RhoBound, SampleBatch};
pub use error::{Error, Result};
pub use utility::Utility;
