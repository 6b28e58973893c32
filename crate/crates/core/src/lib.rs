//! Pseudo-marginal MCMC for Gaussian process classifiers.
//!
//! The covariance hyperparameters of a probit GP classifier are sampled with
//! Metropolis–Hastings, plugging in an unbiased estimate of the marginal
//! likelihood `p(y|θ)`. Estimates come from importance sampling with the
//! Laplace approximation as proposal, or from annealed importance sampling
//! started either at the GP prior or at the Laplace approximation, with
//! elliptical slice sampling as the transition at every temperature.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and the parallel drivers live in the companion `pmgp` crate.
//!
//! ```
//! use pmgp_core::{estimators, kernel, laplace, linalg::Matrix, rng};
//!
//! let x = Matrix::from_rows(&[&[-1.0, -1.0], &[1.0, 1.0]]).unwrap();
//! let y = [1.0, 1.0];
//! let theta = kernel::Hyperparams::isotropic(15.0, (-1.0f64).exp()).unwrap();
//! let g = kernel::gram(&x, &theta).unwrap();
//! let la = laplace::laplace_approx(&y, &g).unwrap();
//! let est = estimators::is_estimate(&y, &g, &la, 8, &mut rng::seeded(1)).unwrap();
//! assert!(est.log_value.is_finite());
//! ```

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// reference values keep every digit of their source
#![cfg_attr(test, allow(clippy::excessive_precision))]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod estimators;
pub mod kernel;
pub mod laplace;
pub mod linalg;
pub mod math;
pub mod model;
pub mod pm_mcmc;
pub mod predict;
pub mod quadrature;
pub mod rng;
pub mod slice;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use estimators::{EstimatorConfig, EstimatorMethod, LogMarginalEstimate, TemperatureSchedule};
pub use kernel::{GramMatrix, Hyperparams};
pub use laplace::{GaussianRef, LaplaceResult};
pub use model::{Dataset, PriorSpec};
pub use pm_mcmc::{ChainConfig, ChainRecord, ChainState, ProposalSpec};
