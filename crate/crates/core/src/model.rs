//! Densities of the probit GP classifier and its Gamma hyperpriors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::kernel::{GramMatrix, Hyperparams};
use crate::linalg::Matrix;
use crate::math;

/// Inputs and ±1 labels, plus the normalization that was applied to the
/// inputs (identity when none was).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    feature_means: Vec<f64>,
    feature_sds: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        let d = x.cols();
        Self::with_normalization(x, y, vec![0.0; d], vec![1.0; d])
    }

    pub fn with_normalization(x: Matrix, y: Vec<f64>, feature_means: Vec<f64>, feature_sds: Vec<f64>) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::argument("dataset needs n ≥ 1 and d ≥ 1"));
        }
        if y.len() != x.rows() {
            return Err(Error::Dimension { expected: x.rows(), got: y.len() });
        }
        if let Some(bad) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
            return Err(Error::argument(format!("label {bad} is not ±1")));
        }
        if !x.is_finite() {
            return Err(Error::argument("inputs contain non-finite values"));
        }
        if feature_means.len() != x.cols() || feature_sds.len() != x.cols() {
            return Err(Error::Dimension { expected: x.cols(), got: feature_means.len().min(feature_sds.len()) });
        }
        Ok(Self { x, y, feature_means, feature_sds })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn feature_means(&self) -> &[f64] {
        &self.feature_means
    }

    pub fn feature_sds(&self) -> &[f64] {
        &self.feature_sds
    }

    /// Same inputs with every label flipped.
    pub fn flipped(&self) -> Self {
        Self { y: self.y.iter().map(|v| -v).collect(), ..self.clone() }
    }

    /// Keeps only the listed rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let d = self.d();
        let mut data = Vec::with_capacity(rows.len() * d);
        let mut y = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.n() {
                return Err(Error::argument(format!("row {r} out of range")));
            }
            data.extend_from_slice(self.x.row(r));
            y.push(self.y[r]);
        }
        let x = Matrix::from_row_major(rows.len(), d, data).expect("sized above");
        Self::with_normalization(x, y, self.feature_means.clone(), self.feature_sds.clone())
    }
}

/// Gamma(shape, rate) priors on σ and the length-scales.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub sigma_shape: f64,
    pub sigma_rate: f64,
    pub tau_shape: f64,
    pub tau_rate: f64,
    pub ard: bool,
    pub input_dim: usize,
}

impl PriorSpec {
    /// Ga(σ|1.1, 0.1); Ga(τ|1, 1/√d) for the isotropic kernel, Ga(τ_r|1, 1)
    /// for ARD.
    pub fn standard(input_dim: usize, ard: bool) -> Self {
        let tau_rate = if ard { 1.0 } else { 1.0 / math::sqrt(input_dim as f64) };
        Self { sigma_shape: 1.1, sigma_rate: 0.1, tau_shape: 1.0, tau_rate, ard, input_dim }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.sigma_shape, self.sigma_rate, self.tau_shape, self.tau_rate];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::argument("Gamma shapes and rates must be positive"));
        }
        if self.input_dim == 0 {
            return Err(Error::argument("input dimension must be positive"));
        }
        Ok(())
    }

    /// Number of length-scales implied by the ARD flag.
    pub fn n_lengthscales(&self) -> usize {
        if self.ard {
            self.input_dim
        } else {
            1
        }
    }

    fn check(&self, theta: &Hyperparams) -> Result<()> {
        let want = self.n_lengthscales();
        let got = theta.log_lengthscales().len();
        if want != got {
            return Err(Error::argument(format!(
                "prior expects {want} length-scale(s) (ard = {}), theta has {got}",
                self.ard
            )));
        }
        Ok(())
    }
}

/// `Σ_i ln Φ(y_i f_i)`
pub fn log_likelihood(f: &[f64], y: &[f64]) -> f64 {
    assert_eq!(f.len(), y.len(), "latent and label lengths differ");
    f.iter().zip(y).map(|(fi, yi)| math::log_norm_cdf(yi * fi)).sum()
}

/// `ln N(f | 0, K + jitter·I)`
pub fn log_gp_prior(f: &[f64], g: &GramMatrix) -> f64 {
    g.prior().log_density(f)
}

/// Log hyperprior density over `(log σ, log τ…)`, Jacobian included.
pub fn log_hyperprior(theta: &Hyperparams, prior: &PriorSpec) -> Result<f64> {
    prior.check(theta)?;
    let on_log_scale =
        |log_x: f64, shape: f64, rate: f64| math::gamma_log_density(math::exp(log_x), shape, rate) + log_x;
    let mut lp = on_log_scale(theta.log_sigma(), prior.sigma_shape, prior.sigma_rate);
    for &lt in theta.log_lengthscales() {
        lp += on_log_scale(lt, prior.tau_shape, prior.tau_rate);
    }
    Ok(lp)
}

/// Draws hyperparameters from the Gamma priors.
pub fn sample_hyperprior<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> Result<Hyperparams> {
    prior.validate()?;
    let sig = Gamma::new(prior.sigma_shape, 1.0 / prior.sigma_rate).map_err(|e| Error::argument(format!("{e}")))?;
    let tau = Gamma::new(prior.tau_shape, 1.0 / prior.tau_rate).map_err(|e| Error::argument(format!("{e}")))?;
    // Gamma draws can round to zero for small shapes; floor before taking logs
    let floor = |v: f64| math::ln(v.max(f64::MIN_POSITIVE));
    let log_sigma = floor(sig.sample(rng));
    let log_taus = (0..prior.n_lengthscales()).map(|_| floor(tau.sample(rng))).collect();
    Hyperparams::new(log_sigma, log_taus)
}

/// `ln p(y|f) + ln p(f|θ)`, the unnormalized log posterior over latents.
pub fn log_unnorm_posterior_f(f: &[f64], y: &[f64], g: &GramMatrix) -> f64 {
    log_likelihood(f, y) + log_gp_prior(f, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gram;
    use proptest::prelude::*;

    #[test]
    fn likelihood_at_zero() {
        let y = [1.0, -1.0, 1.0];
        assert!((log_likelihood(&[0.0; 3], &y) - 3.0 * 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn likelihood_reference_values() {
        let v = log_likelihood(&[5.0, -5.0], &[1.0, -1.0]);
        assert!((v / -5.733_032_259_275_272e-7 - 1.0).abs() < 1e-10);
        let t = log_likelihood(&[-10.0], &[1.0]);
        assert!((t + 53.231_285_150_512_47).abs() < 1e-9);
    }

    #[test]
    fn scalar_gp_prior() {
        let x = Matrix::from_rows(&[&[0.0]]).unwrap();
        let g = gram(&x, &Hyperparams::isotropic(4.0, 1.0).unwrap()).unwrap();
        assert!((log_gp_prior(&[2.0], &g) + 2.112_085_713_764_618).abs() < 1e-13);
        assert_eq!(log_gp_prior(&[2.0], &g), log_gp_prior(&[-2.0], &g));
    }

    #[test]
    fn gp_prior_at_zero() {
        let x = Matrix::from_rows(&[&[0.0], &[0.4], &[1.1]]).unwrap();
        let g = gram(&x, &Hyperparams::isotropic(2.0, 0.7).unwrap()).unwrap();
        let want = -0.5 * g.log_det() - 1.5 * math::LN_2PI;
        assert!((log_gp_prior(&[0.0; 3], &g) - want).abs() < 1e-13);
    }

    #[test]
    fn gp_prior_normalizes_in_one_dimension() {
        let x = Matrix::from_rows(&[&[0.0]]).unwrap();
        let sigma: f64 = 3.0;
        let g = gram(&x, &Hyperparams::isotropic(sigma, 1.0).unwrap()).unwrap();
        // composite Simpson over ±20 sd
        let half = 20.0 * sigma.sqrt();
        let m = 20_000;
        let h = 2.0 * half / m as f64;
        let mut s = 0.0;
        for k in 0..=m {
            let f = -half + k as f64 * h;
            let w = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * log_gp_prior(&[f], &g).exp();
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hyperprior_reference_values() {
        // Ga(τ|1,1) at τ = 1 with Jacobian ln 1 = 0, plus σ term from Ga(1.1, 0.1) at 7
        let p = PriorSpec { sigma_shape: 1.1, sigma_rate: 0.1, tau_shape: 1.0, tau_rate: 1.0, ard: true, input_dim: 1 };
        let theta = Hyperparams::from_natural(7.0, &[1.0]).unwrap();
        let got = log_hyperprior(&theta, &p).unwrap();
        assert!((got - (-1.042_469_997_072_765_9 - 1.0)).abs() < 1e-12);

        let iso = PriorSpec::standard(2, false);
        let theta = Hyperparams::from_natural(1.0, &[0.4]).unwrap();
        let got = log_hyperprior(&theta, &iso).unwrap();
        let sigma_part = -2.582_971_161_033_610_6;
        assert!((got - (sigma_part - 1.545_707_034_628_746_7)).abs() < 1e-12);
    }

    #[test]
    fn hyperprior_rejects_ard_mismatch() {
        let p = PriorSpec::standard(3, true);
        let theta = Hyperparams::isotropic(1.0, 1.0).unwrap();
        assert!(log_hyperprior(&theta, &p).is_err());
        let p = PriorSpec::standard(3, false);
        let theta = Hyperparams::from_natural(1.0, &[1.0, 1.0, 1.0]).unwrap();
        assert!(log_hyperprior(&theta, &p).is_err());
    }

    #[test]
    fn standard_priors() {
        let iso = PriorSpec::standard(4, false);
        assert_eq!(iso.tau_rate, 0.5);
        let ard = PriorSpec::standard(4, true);
        assert_eq!((ard.tau_shape, ard.tau_rate), (1.0, 1.0));
        assert_eq!(ard.n_lengthscales(), 4);
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        let x = Matrix::from_rows(&[&[0.0], &[1.0]]).unwrap();
        assert!(Dataset::new(x.clone(), vec![1.0, 0.0]).is_err());
        assert!(Dataset::new(x.clone(), vec![1.0]).is_err());
        assert!(Dataset::new(x, vec![1.0, -1.0]).is_ok());
    }

    #[test]
    fn posterior_is_sum_of_parts() {
        let x = Matrix::from_rows(&[&[-1.0, -1.0], &[1.0, 1.0]]).unwrap();
        let g = gram(&x, &Hyperparams::isotropic(15.0, (-1.0f64).exp()).unwrap()).unwrap();
        let y = [1.0, 1.0];
        let f = [0.3, -0.8];
        assert_eq!(log_unnorm_posterior_f(&f, &y, &g), log_likelihood(&f, &y) + log_gp_prior(&f, &g));
        let at_zero = log_unnorm_posterior_f(&[0.0, 0.0], &y, &g);
        assert!((at_zero - (2.0 * 0.5f64.ln() - 0.5 * g.log_det() - math::LN_2PI)).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn likelihood_bounded_and_flip_symmetric(
            f in prop::collection::vec(-30.0f64..30.0, 1..8),
            signs in prop::collection::vec(any::<bool>(), 8),
        ) {
            let y: Vec<f64> = f.iter().zip(&signs).map(|(_, s)| if *s { 1.0 } else { -1.0 }).collect();
            let ll = log_likelihood(&f, &y);
            prop_assert!(ll <= 0.0 && ll.is_finite());
            let nf: Vec<f64> = f.iter().map(|v| -v).collect();
            let ny: Vec<f64> = y.iter().map(|v| -v).collect();
            prop_assert_eq!(ll, log_likelihood(&nf, &ny));
        }

        #[test]
        fn posterior_monotone_in_margin(f0 in -5.0f64..5.0, bump in 0.01f64..3.0) {
            // prior term held fixed, so only the likelihood moves
            let lo = log_likelihood(&[f0], &[1.0]);
            let hi = log_likelihood(&[f0 + bump], &[1.0]);
            prop_assert!(hi > lo);
        }
    }
}
