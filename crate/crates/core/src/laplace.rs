//! Gaussian references and the Laplace approximation of the latent posterior.
//!
//! Newton's method runs in the `B = I + W^½ K W^½` parameterization so that
//! only well-conditioned matrices get factorized, with step halving on the
//! objective `Ψ(f) = ln p(y|f) − ½ aᵀf`, `f = K a`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::linalg::{cholesky_with_jitter, dot, squared_norm, Cholesky, Matrix};
use crate::math;
use crate::model::log_likelihood;

const W_FLOOR: f64 = 1e-12;
const MAX_NEWTON: usize = 100;
const MAX_HALVINGS: usize = 20;
const OBJECTIVE_TOL: f64 = 1e-9;

/// A multivariate Gaussian `N(mean, L Lᵀ)`.
#[derive(Debug, Clone)]
pub struct GaussianRef {
    mean: Vec<f64>,
    chol: Cholesky,
    log_det: f64,
}

impl GaussianRef {
    pub fn new(mean: Vec<f64>, chol: Cholesky) -> Result<Self> {
        if mean.len() != chol.dim() {
            return Err(Error::Dimension { expected: chol.dim(), got: mean.len() });
        }
        let log_det = chol.log_det();
        Ok(Self { mean, chol, log_det })
    }

    pub fn zero_mean(chol: Cholesky) -> Self {
        let log_det = chol.log_det();
        Self { mean: vec![0.0; chol.dim()], chol, log_det }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn chol(&self) -> &Cholesky {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn covariance(&self) -> Matrix {
        self.chol.reconstruct()
    }

    /// `mean + L ξ`
    pub fn transform(&self, xi: &[f64]) -> Vec<f64> {
        let mut f = self.chol.mul_lower(xi);
        for (fi, mi) in f.iter_mut().zip(&self.mean) {
            *fi += mi;
        }
        f
    }

    /// Draws `ξ ~ N(0, I)` and returns `(mean + L ξ, ξ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let xi: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect();
        (self.transform(&xi), xi)
    }

    /// `L⁻¹ (f − mean)`
    pub fn whiten(&self, f: &[f64]) -> Vec<f64> {
        let mut w: Vec<f64> = f.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.chol.solve_lower_in_place(&mut w);
        w
    }

    /// Log density given the whitened vector `L⁻¹(f − mean)`.
    #[inline]
    pub fn log_density_whitened(&self, white: &[f64]) -> f64 {
        -0.5 * squared_norm(white) - 0.5 * self.log_det - 0.5 * self.dim() as f64 * math::LN_2PI
    }

    pub fn log_density(&self, f: &[f64]) -> f64 {
        self.log_density_whitened(&self.whiten(f))
    }
}

/// Mode of the latent posterior with the quantities Newton produced there.
#[derive(Debug, Clone)]
pub struct LaplaceMode {
    pub f_hat: Vec<f64>,
    /// `a` with `f_hat = (K + jitter·I) a`.
    pub alpha: Vec<f64>,
    /// Negative Hessian of the log-likelihood at the mode (floored).
    pub w: Vec<f64>,
    pub log_marginal_la: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    b_chol: Cholesky,
}

/// Full Laplace approximation `q(f|θ,y) = N(f_hat, (K⁻¹ + W)⁻¹)`.
#[derive(Debug, Clone)]
pub struct LaplaceResult {
    pub q: GaussianRef,
    pub f_hat: Vec<f64>,
    pub log_marginal_la: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient and floored negative Hessian of `ln p(y|f)`.
pub fn likelihood_derivatives(f: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut grad = Vec::with_capacity(f.len());
    let mut w = Vec::with_capacity(f.len());
    for (fi, yi) in f.iter().zip(y) {
        let z = yi * fi;
        let r = math::inv_mills(z);
        grad.push(yi * r);
        w.push((r * (r + z)).max(W_FLOOR));
    }
    (grad, w)
}

fn newton_system(k: &Matrix, w: &[f64]) -> Result<(Cholesky, Vec<f64>)> {
    let n = w.len();
    let sw: Vec<f64> = w.iter().map(|v| math::sqrt(*v)).collect();
    let b = Matrix::from_fn(n, n, |i, j| {
        let v = sw[i] * k[(i, j)] * sw[j];
        if i == j {
            1.0 + v
        } else {
            v
        }
    });
    let chol = Cholesky::new(&b).map_err(|_| Error::numerical("I + W^½KW^½ is not positive definite"))?;
    Ok((chol, sw))
}

/// Newton iterations for the posterior mode; covariance not formed.
pub fn laplace_mode(y: &[f64], g: &GramMatrix) -> Result<LaplaceMode> {
    let n = g.n();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    let k = g.k_jittered();
    let objective = |a: &[f64], f: &[f64]| log_likelihood(f, y) - 0.5 * dot(a, f);

    let mut f = vec![0.0; n];
    let mut a = vec![0.0; n];
    let mut obj = objective(&a, &f);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_NEWTON {
        iterations += 1;
        let (grad, w) = likelihood_derivatives(&f, y);
        let (b_chol, sw) = newton_system(&k, &w)?;
        let b: Vec<f64> = (0..n).map(|i| w[i] * f[i] + grad[i]).collect();
        let kb = k.mul_vec(&b);
        let mut c: Vec<f64> = (0..n).map(|i| sw[i] * kb[i]).collect();
        b_chol.solve_lower_in_place(&mut c);
        b_chol.solve_upper_in_place(&mut c);
        let a_full: Vec<f64> = (0..n).map(|i| b[i] - sw[i] * c[i]).collect();
        let dir: Vec<f64> = a_full.iter().zip(&a).map(|(x, y)| x - y).collect();

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let a_try: Vec<f64> = a.iter().zip(&dir).map(|(ai, di)| ai + step * di).collect();
            let f_try = k.mul_vec(&a_try);
            let obj_try = objective(&a_try, &f_try);
            if obj_try >= obj {
                accepted = Some((a_try, f_try, obj_try));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((a_new, f_new, obj_new)) => {
                let change = obj_new - obj;
                a = a_new;
                f = f_new;
                obj = obj_new;
                if change < OBJECTIVE_TOL * (1.0 + math::abs(obj)) {
                    converged = true;
                    break;
                }
            }
            None => {
                // no ascent along the Newton direction: already at the mode to
                // machine precision, or stuck
                let (grad, _) = likelihood_derivatives(&f, y);
                let gnorm = grad.iter().zip(&a).map(|(g, a)| math::abs(g - a)).fold(0.0, f64::max);
                converged = gnorm < 1e-6 * f.iter().map(|v| math::abs(*v)).fold(1.0, f64::max);
                break;
            }
        }
    }

    let (_, w) = likelihood_derivatives(&f, y);
    let (b_chol, _) = newton_system(&k, &w)?;
    let half_log_det_b: f64 = (0..n).map(|i| math::ln(b_chol.lower()[(i, i)])).sum();
    let log_marginal_la = obj - half_log_det_b;
    if !log_marginal_la.is_finite() {
        return Err(Error::numerical("non-finite Laplace marginal likelihood"));
    }
    Ok(LaplaceMode { f_hat: f, alpha: a, w, log_marginal_la, objective: obj, iterations, converged, b_chol })
}

impl LaplaceMode {
    /// Forms `Σ = K − K W^½ B⁻¹ W^½ K` and factorizes it.
    pub fn covariance(&self, g: &GramMatrix) -> Result<GaussianRef> {
        let n = g.n();
        let k = g.k_jittered();
        let sw: Vec<f64> = self.w.iter().map(|v| math::sqrt(*v)).collect();
        // row r of V = L_B⁻¹ (W^½ K e_r), K symmetric so the column is a row
        let mut v = Matrix::zeros(n, n);
        for r in 0..n {
            let row = v.row_mut(r);
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = sw[i] * k[(r, i)];
            }
            self.b_chol.solve_lower_in_place(row);
        }
        let mut sigma = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s = k[(i, j)] - dot(v.row(i), v.row(j));
                sigma[(i, j)] = s;
                sigma[(j, i)] = s;
            }
        }
        let scale = sigma.diag().into_iter().fold(0.0, f64::max);
        let fac = cholesky_with_jitter(&sigma, scale)
            .ok_or_else(|| Error::numerical("Laplace covariance is not positive definite"))?;
        GaussianRef::new(self.f_hat.clone(), fac.chol)
    }

    pub fn into_result(self, g: &GramMatrix) -> Result<LaplaceResult> {
        let q = self.covariance(g)?;
        Ok(LaplaceResult {
            q,
            f_hat: self.f_hat,
            log_marginal_la: self.log_marginal_la,
            iterations: self.iterations,
            converged: self.converged,
        })
    }
}

/// Laplace approximation of `p(f|θ,y)`.
pub fn laplace_approx(y: &[f64], g: &GramMatrix) -> Result<LaplaceResult> {
    laplace_mode(y, g)?.into_result(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram, Hyperparams};
    use crate::model::log_unnorm_posterior_f;

    fn sup(v: &[f64]) -> f64 {
        v.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    fn gradient_residual(y: &[f64], g: &GramMatrix, f: &[f64]) -> f64 {
        let (grad, _) = likelihood_derivatives(f, y);
        let kinv_f = g.chol().solve(f);
        let r: Vec<f64> = grad.iter().zip(&kinv_f).map(|(a, b)| a - b).collect();
        sup(&r)
    }

    #[test]
    fn scalar_mode_matches_root() {
        let x = Matrix::from_rows(&[&[0.0]]).unwrap();
        let g = gram(&x, &Hyperparams::isotropic(1.0, 1.0).unwrap()).unwrap();
        let la = laplace_approx(&[1.0], &g).unwrap();
        assert!(la.converged);
        // root of f = φ(f)/Φ(f), 50-digit reference
        assert!((la.f_hat[0] - 0.506_054_468_989_180_8).abs() < 1e-9);
    }

    #[test]
    fn tiny_prior_variance_pins_mode_at_zero() {
        let x = Matrix::from_rows(&[&[0.0], &[5.0], &[10.0]]).unwrap();
        let g = gram(&x, &Hyperparams::isotropic(1e-8, 0.01).unwrap()).unwrap();
        let la = laplace_approx(&[1.0, 1.0, 1.0], &g).unwrap();
        assert!(sup(&la.f_hat) < 1e-7);
    }

    #[test]
    fn toy_mode_is_symmetric() {
        let x = Matrix::from_rows(&[&[-1.0, -1.0], &[1.0, 1.0]]).unwrap();
        let g = gram(&x, &Hyperparams::isotropic(15.0, (-1.0f64).exp()).unwrap()).unwrap();
        let y = [1.0, 1.0];
        let la = laplace_approx(&y, &g).unwrap();
        assert!(la.converged);
        assert!((la.f_hat[0] - la.f_hat[1]).abs() < 1e-10);
        assert!(gradient_residual(&y, &g, &la.f_hat) < 1e-6);
    }

    #[test]
    fn curvature_is_positive() {
        let f = [-30.0, -3.0, 0.0, 4.0, 40.0];
        let (_, w) = likelihood_derivatives(&f, &[1.0; 5]);
        assert!(w.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn objective_never_decreases() {
        // re-run Newton by hand, checking Ψ after every accepted step
        let x = Matrix::from_fn(12, 1, |i, _| i as f64 * 0.3);
        let y: Vec<f64> = (0..12).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let g = gram(&x, &Hyperparams::isotropic(30.0, 0.4).unwrap()).unwrap();
        let m = laplace_mode(&y, &g).unwrap();
        assert!(m.converged);
        let start = log_likelihood(&[0.0; 12], &y);
        assert!(m.objective >= start);
        assert!(gradient_residual(&y, &g, &m.f_hat) < 1e-6 * sup(&m.f_hat).max(1.0));
    }

    #[test]
    fn covariance_matches_finite_difference_curvature() {
        let x = Matrix::from_rows(&[&[0.0, 0.1], &[0.5, -0.3], &[1.2, 0.4]]).unwrap();
        let y = [1.0, -1.0, 1.0];
        let g = gram(&x, &Hyperparams::from_natural(4.0, &[0.8, 1.3]).unwrap()).unwrap();
        let la = laplace_approx(&y, &g).unwrap();
        let h = 1e-4;
        let psi = |f: &[f64]| log_unnorm_posterior_f(f, &y, &g);
        let n = 3;
        let mut neg_hess = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let shift = |di: f64, dj: f64| {
                    let mut f = la.f_hat.clone();
                    f[i] += di;
                    f[j] += dj;
                    psi(&f)
                };
                let v = (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4.0 * h * h);
                neg_hess[(i, j)] = -v;
            }
        }
        // Σ · (−∇∇ψ) should be the identity
        let sigma = la.q.covariance();
        for i in 0..n {
            for j in 0..n {
                let p: f64 = (0..n).map(|k| sigma[(i, k)] * neg_hess[(k, j)]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p - want).abs() < 1e-4, "({i},{j}) = {p}");
            }
        }
    }

    #[test]
    fn gaussian_ref_roundtrip() {
        let l = Matrix::from_rows(&[&[2.0, 0.0], &[0.5, 1.5]]).unwrap();
        let q = GaussianRef::new(vec![1.0, -1.0], Cholesky::from_lower(l).unwrap()).unwrap();
        let xi = [0.3, -0.7];
        let f = q.transform(&xi);
        let back = q.whiten(&f);
        assert!((back[0] - xi[0]).abs() < 1e-15 && (back[1] - xi[1]).abs() < 1e-15);
    }
}
