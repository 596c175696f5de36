//! Reproducible stochastic-bandit policies and the paired-execution
//! harness that certifies them.

pub mod environments;
pub mod error;
pub mod harness;
pub mod mab_policies;
pub mod linear_policies;
pub mod optimal_design;
pub mod repro_sq;
pub mod shared_randomness;

pub use error::{BanditError, Result};
