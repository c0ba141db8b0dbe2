//! Independent reference implementations for tests: Kalman filter and RTS
//! smoother, a dense batch posterior for time-varying linear models, a
//! grid-based forward-backward smoother for scalar nonlinear models, and
//! trapezoid quadrature.
//!
//! Nothing here uses the message-passing code in [`crate::gaussian`].

pub mod grid;
pub mod kalman;
pub mod quadrature;

pub use grid::{grid_smoother, GridPosterior, GridSpec, ScalarModel};
pub use kalman::{
    batch_smoother, kalman_filter, rts_smoother, KalmanOutput, LinearGaussianModel, LinearStep, Moments,
};
