//! Riemannian stochastic hybrid gradient methods for finite-sum problems.
//!
//! The hybrid direction mixes three stochastic estimators of the Riemannian
//! gradient: a plain mini-batch gradient, a snapshot-corrected (SVRG-style)
//! term and a recursive (SARAH-style) term. Besides the optimizers the crate
//! ships the numerical diagnostics used to check the underlying identities
//! and bounds on concrete problems.

pub mod diagnostics;
pub mod directions;
pub mod error;
pub mod linalg;
pub mod manifold;
pub mod optimizer;
pub mod problems;
pub mod schedules;

pub use error::{Error, Result};
