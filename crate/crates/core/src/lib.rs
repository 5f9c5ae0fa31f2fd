//! Identification of local model state space networks (LMSSN) grown by
//! axis-orthogonal tree partitioning, trained on the simulation error with a
//! BFGS optimizer, and optionally regularized towards a space-filling state
//! trajectory.

pub mod datasets;
pub mod error;
pub mod experiment;
pub mod linear;
pub mod lolimot;
pub mod metrics;
pub mod model;
pub mod optimize;
pub mod regularization;

pub use error::{Error, Result};
