//! Recovery of base distributions from mutually contaminated observations.
//!
//! Each observed source is a mixture `P̃_i = Σ_j Π_ij P_j` of unknown base
//! distributions. The exact engine works on probability vectors (mixture
//! proportions or discrete distributions); the finite-sample engine works on
//! point samples through penalized set-ratio estimates.

pub mod demix;
pub mod error;
pub mod finite;
pub mod harness;
pub mod kappa;
pub mod lp;
pub mod measure;
pub mod partial;
pub mod rng;

pub use error::{Error, Result};
