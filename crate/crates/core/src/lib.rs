//! Robust adaptive control for two-player linear-quadratic differential games.
//!
//! The controlled player learns the set of adversary feedback policies that
//! are consistent with sampled data under a bounded disturbance, and
//! re-designs a gain that quadratically stabilizes every policy in that set.

pub mod config;
pub mod epsilon_cert;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod polytope;
pub mod riccati;
pub mod robust_design;
pub mod sdp;
pub mod sim;

pub use error::{Error, Result};
