//! Ensemble-based implicit sampling (IES-IS) for Bayesian inverse problems.
//!
//! An iterative ensemble smoother supplies an approximate MAP point and
//! inverse Hessian; a linear implicit map turns standard-normal draws into
//! weighted importance samples around that point. Non-Gaussian priors are
//! handled either through a truncated DCT parameterization of a spatial
//! field or through a Gaussian mixture fitted with smoothed EM.
//!
//! Module map:
//!
//! * [`forward`]: uniform-grid flow and fractional-diffusion solvers and
//!   the observation operator.
//! * [`dct`]: orthonormal 2D cosine basis with truncation bookkeeping.
//! * [`gmm`]: Gaussian mixtures and the SmEM fit with harmony screening.
//! * [`ensemble`]: ensemble container, Monte Carlo covariances, weights,
//!   systematic resampling.
//! * [`ies`]: the smoother update, the implicit map and the three drivers.
//! * [`postprocess`]: blockwise regularized projection of fields.
//! * [`oracle`]: closed-form linear/Gaussian-mixture posterior.
//! * [`diagnostics`]: error metrics and interval summaries.

// `!(x > 0.0)` style guards are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dct;
pub mod diagnostics;
pub mod ensemble;
mod error;
pub mod forward;
pub mod gmm;
pub mod ies;
pub mod linalg;
pub mod oracle;
pub mod postprocess;
pub mod rng;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
