//! Distributed signal-covariance optimization on the Gaussian vector
//! multiple-access channel.
//!
//! The crate provides:
//!
//! - matrix exponential learning (MXL) with noisy gradient feedback, plus its
//!   asynchronous (delayed, partial-update) and eigen-coordinate variants;
//! - iterative and simultaneous water-filling baselines;
//! - the receiver/transmitter estimation pipeline (sample covariance,
//!   bias-adjusted precision, pairwise-product gradient estimates);
//! - static and Jakes-fading channel models;
//! - a certified capacity oracle (Frank–Wolfe gap) and an ergodic-capacity
//!   solver by sample averaging;
//! - a deterministic, seeded scenario harness with CSV/JSON/SVG export.
//!
//! All numeric kernels are generic over the real scalar via [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the default `f64` instantiation.

pub mod cmatrix;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod hermitian;
pub mod learners;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod waterfilling;

pub use cmatrix::CMatrix;
pub use error::{Error, Result};
pub use hermitian::{
    entropy_conjugate, exp_map, fenchel_coupling, herm_eig, hermitize, orthonormalize,
    EigenDecomposition, HermitianMatrix,
};
pub use scalar::Scalar;

/// Default-precision aliases.
pub type Herm = HermitianMatrix<f64>;
pub type Eigen = EigenDecomposition<f64>;
pub type Mat = CMatrix<f64>;
pub type Model = model::NetworkModel<f64>;
pub type Profile = model::CovarianceProfile<f64>;
