//! RBF covariance, Gram matrices and their jittered Cholesky factors.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::laplace::GaussianRef;
use crate::linalg::{cholesky_with_jitter, Matrix};
use crate::math;

/// Covariance parameters on the log scale.
///
/// One length-scale means an isotropic kernel; `d` length-scales give the
/// ARD kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    log_sigma: f64,
    log_lengthscales: Vec<f64>,
}

impl Hyperparams {
    pub fn new(log_sigma: f64, log_lengthscales: Vec<f64>) -> Result<Self> {
        if log_lengthscales.is_empty() {
            return Err(Error::argument("at least one length-scale is required"));
        }
        if !log_sigma.is_finite() || log_lengthscales.iter().any(|t| !t.is_finite()) {
            return Err(Error::argument("hyperparameters must be finite"));
        }
        Ok(Self { log_sigma, log_lengthscales })
    }

    /// Natural-scale constructor, `sigma` and every `tau` strictly positive.
    pub fn from_natural(sigma: f64, taus: &[f64]) -> Result<Self> {
        if !(sigma > 0.0) || taus.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::argument("sigma and length-scales must be positive"));
        }
        Self::new(math::ln(sigma), taus.iter().map(|t| math::ln(*t)).collect())
    }

    pub fn isotropic(sigma: f64, tau: f64) -> Result<Self> {
        Self::from_natural(sigma, &[tau])
    }

    /// Inverse of [`Hyperparams::to_log_vec`].
    pub fn from_log_vec(v: &[f64]) -> Result<Self> {
        match v.split_first() {
            Some((s, taus)) => Self::new(*s, taus.to_vec()),
            None => Err(Error::argument("empty hyperparameter vector")),
        }
    }

    /// `[log σ, log τ₁, …]`
    pub fn to_log_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.log_lengthscales.len());
        v.push(self.log_sigma);
        v.extend_from_slice(&self.log_lengthscales);
        v
    }

    #[inline]
    pub fn log_sigma(&self) -> f64 {
        self.log_sigma
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        math::exp(self.log_sigma)
    }

    pub fn log_lengthscales(&self) -> &[f64] {
        &self.log_lengthscales
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|t| math::exp(*t)).collect()
    }

    pub fn is_isotropic(&self) -> bool {
        self.log_lengthscales.len() == 1
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        1 + self.log_lengthscales.len()
    }

    /// Checks the length-scale count against the input dimension.
    pub fn check_input_dim(&self, d: usize) -> Result<()> {
        let m = self.log_lengthscales.len();
        if m == 1 || m == d {
            Ok(())
        } else {
            Err(Error::argument(format!("{m} length-scales for {d}-dimensional inputs")))
        }
    }

    /// `1/τ_r²` for every input coordinate.
    fn inverse_squared_lengthscales(&self, d: usize) -> Vec<f64> {
        (0..d)
            .map(|r| {
                let lt = if self.is_isotropic() { self.log_lengthscales[0] } else { self.log_lengthscales[r] };
                math::exp(-2.0 * lt)
            })
            .collect()
    }
}

#[inline]
fn rbf(xi: &[f64], xj: &[f64], inv_sq: &[f64], sigma: f64) -> f64 {
    let mut s = 0.0;
    for r in 0..xi.len() {
        let diff = xi[r] - xj[r];
        s += diff * diff * inv_sq[r];
    }
    sigma * math::exp(-0.5 * s)
}

/// `σ exp(-½ Σ_r (x_ir − x_jr)²/τ_r²)`
pub fn kernel_eval(xi: &[f64], xj: &[f64], theta: &Hyperparams) -> Result<f64> {
    if xi.len() != xj.len() {
        return Err(Error::Dimension { expected: xi.len(), got: xj.len() });
    }
    theta.check_input_dim(xi.len())?;
    Ok(rbf(xi, xj, &theta.inverse_squared_lengthscales(xi.len()), theta.sigma()))
}

/// Cross-covariances between one point and every row of `x`.
pub fn cross_covariance(x_star: &[f64], x: &Matrix, theta: &Hyperparams) -> Result<Vec<f64>> {
    if x_star.len() != x.cols() {
        return Err(Error::Dimension { expected: x.cols(), got: x_star.len() });
    }
    theta.check_input_dim(x.cols())?;
    let inv_sq = theta.inverse_squared_lengthscales(x.cols());
    let sigma = theta.sigma();
    Ok((0..x.rows()).map(|i| rbf(x_star, x.row(i), &inv_sq, sigma)).collect())
}

/// A Gram matrix together with the factor of its jittered version.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    k: Matrix,
    prior: GaussianRef,
    jitter: f64,
    sigma: f64,
}

impl GramMatrix {
    /// Unjittered covariance matrix.
    pub fn k(&self) -> &Matrix {
        &self.k
    }

    /// `K + jitter·I`
    pub fn k_jittered(&self) -> Matrix {
        self.k.add_diagonal(self.jitter)
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.k.rows()
    }

    pub fn log_det(&self) -> f64 {
        self.prior.log_det()
    }

    pub fn chol(&self) -> &crate::linalg::Cholesky {
        self.prior.chol()
    }

    /// The GP prior `N(0, K + jitter·I)`.
    pub fn prior(&self) -> &GaussianRef {
        &self.prior
    }
}

/// Builds `K` for the rows of `x` and factorizes it with jitter escalation.
pub fn gram(x: &Matrix, theta: &Hyperparams) -> Result<GramMatrix> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::argument("Gram matrix needs at least one input"));
    }
    theta.check_input_dim(x.cols())?;
    let inv_sq = theta.inverse_squared_lengthscales(x.cols());
    let sigma = theta.sigma();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = sigma;
        for j in 0..i {
            let v = rbf(x.row(i), x.row(j), &inv_sq, sigma);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let fac =
        cholesky_with_jitter(&k, sigma).ok_or_else(|| Error::NotPositiveDefinite { log_theta: theta.to_log_vec() })?;
    Ok(GramMatrix { k, prior: GaussianRef::zero_mean(fac.chol), jitter: fac.jitter, sigma })
}
