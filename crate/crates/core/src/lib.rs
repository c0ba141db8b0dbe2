//! Rao-Blackwellized particle smoothing for conditionally linear Gaussian
//! state-space models.
//!
//! The forward pass is a marginalized particle filter ([`mpf`]); the
//! backward passes are the serial smoother ([`rbss`]) and its backward
//! simulation variant ([`erbss`]). Both are built from closed-form Gaussian
//! message rules in [`gaussian`]. [`oracles`] holds independent reference
//! implementations and [`experiment`] the Monte Carlo harness.

pub mod erbss;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod format;
pub mod gaussian;
pub mod linalg;
pub mod model;
pub mod mpf;
pub mod oracles;
pub mod rbss;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use exec::Threading;
pub use model::{benchmark_model, linear_benchmark, ClgModel, ModelParams};
pub use rbss::{BackwardOptions, WeightMode};
