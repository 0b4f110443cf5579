//! Dynamic-accuracy derivative-free trust-region optimization for bilevel
//! hyperparameter learning.
//!
//! The upper level is a nonlinear least-squares problem over hyperparameters
//! of a variational reconstruction model; the lower level is a family of
//! smoothed, strongly convex objectives solved inexactly by gradient descent
//! or FISTA with a certified a-posteriori error bound. The trust-region
//! driver requests lower-level accuracy dynamically from the current model
//! state, so early upper-level iterations are cheap and accuracy tightens as
//! the run converges.
//!
//! Core math is generic over the scalar type (`f32`/`f64`) via [`Scalar`];
//! the `f64` aliases below cover the common case.

pub mod bilevel;
pub mod datagen;
pub mod driver;
pub mod error;
pub mod experiments;
pub mod fourier;
pub mod linalg;
pub mod model;
pub mod problems;
pub mod report;
pub mod scalar;
pub mod solvers;
pub mod trs;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` aliases for the main public types.
pub type ProblemInstance64 = problems::ProblemInstance<f64>;
pub type ParamMap64 = problems::ParamMap<f64>;
pub type SolveResult64 = solvers::SolveResult<f64>;
pub type TrainingSet64 = bilevel::TrainingSet<f64>;
pub type TrustRegionConfig64 = driver::TrustRegionConfig<f64>;
