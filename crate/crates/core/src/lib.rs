//! Robust Gaussian filtering.
//!
//! Any Gaussian filter (Kalman, unscented, Monte Carlo moment matching) can be
//! made robust to fat-tailed sensor models by filtering with a pseudo
//! measurement: the physical measurement passed through a time-varying
//! feature function built from the body/tail responsibilities. This crate
//! contains
//!
//! - [`distributions`]: Gaussian, Cauchy and mixture densities with samplers,
//! - [`models`]: transition and tailed sensor models, the reentry radar
//!   problem and ground-truth simulation,
//! - [`gf`]: the moment-matching Gaussian filter with pluggable integration
//!   backends,
//! - [`robust`]: the optimal feature, the approximate posterior mean and the
//!   robust filter loop,
//! - [`benchmarks`]: the linear, sweep and radar experiments with metrics and
//!   CSV/JSON export,
//! - [`selftest`]: embedded invariant checks used by the CLI.

pub mod benchmarks;
pub mod distributions;
mod error;
pub mod gf;
pub mod linalg;
pub mod models;
pub mod robust;
pub mod selftest;

pub use error::{Error, Result};

pub use distributions::{CauchyDensity, Density, GaussianDensity, MixtureNoise};
pub use gf::{Backend, GaussianBelief, Method, MomentTriple, NoiseBranch, UnscentedParams};
pub use linalg::JitterPolicy;
pub use models::{TailedSensorModel, TrajectoryLog, TransitionModel};
pub use robust::{FeatureContext, FeatureVector};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
