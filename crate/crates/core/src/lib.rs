//! Simulation and verification laboratory for discrete-time growing random
//! surfaces driven by a local rule `f(t+1, x) = phi((f(t, x+a))_{a in A}, z_{t+1, x})`.
//!
//! The crate is split along the pipeline:
//!
//! - [`lattice`]: neighborhoods and the counter-based Gaussian noise field.
//! - [`driving`]: the driving-function contract, the built-in models and
//!   randomized axiom certifiers.
//! - [`engine`]: cone-exact window evolution, the alternating-parity RSOS
//!   rule and seeded parallel ensembles.
//! - [`walk`]: the backward random walk and exact noise derivatives.
//! - [`estimators`]: mergeable moments and the normalized fluctuation
//!   quantities with standard errors.
//! - [`oracles`]: brute-force path sums and scalar inequality checks.
//! - [`cli`]: config parsing, command dispatch and result persistence.

pub mod cli;
pub mod driving;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod lattice;
pub mod oracles;
pub mod special;
pub mod walk;

pub use error::{Error, Result};
