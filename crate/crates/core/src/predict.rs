//! Monte Carlo predictive class probabilities from paired `(f, θ)` samples.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::Result;
use crate::kernel::{cross_covariance, gram, GramMatrix, Hyperparams};
use crate::laplace::laplace_mode;
use crate::linalg::{dot, squared_norm, Matrix};
use crate::math;
use crate::model::Dataset;
use crate::rng::{child_seeds, seeded};
use crate::slice::{ess_step, LikelihoodResidual, SlicePoint, TemperedTarget};

pub const DEFAULT_ESS_ITERS: usize = 10;

/// One latent draw for `theta`: the Laplace mode followed by `ess_iters`
/// elliptical slice steps on the exact posterior.
pub fn sample_latent(theta: &Hyperparams, data: &Dataset, ess_iters: usize, seed: u64) -> Result<Vec<f64>> {
    let g = gram(data.x(), theta)?;
    let mode = laplace_mode(data.y(), &g)?;
    if ess_iters == 0 {
        return Ok(mode.f_hat);
    }
    let residual = LikelihoodResidual::new(data.y(), g.prior())?;
    let target = TemperedTarget::new(&residual, 1.0)?;
    let mut rng = seeded(seed);
    let mut point = SlicePoint::new(mode.f_hat, &residual);
    for _ in 0..ess_iters {
        point = ess_step(&point, &target, &mut rng).point;
    }
    Ok(point.f)
}

/// One latent draw per hyperparameter sample. Each sample gets its own seed
/// drawn from `rng`, so the work can be split in any order.
pub fn sample_latents<R: Rng + ?Sized>(
    theta_samples: &[Hyperparams],
    data: &Dataset,
    ess_iters: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let seeds = child_seeds(rng, theta_samples.len());
    theta_samples.iter().zip(seeds).map(|(t, s)| sample_latent(t, data, ess_iters, s)).collect()
}

/// Predictive probability at one test input for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPrediction {
    pub prob: f64,
    pub mean: f64,
    pub variance: f64,
    /// The conditional variance came out negative and was clamped to zero.
    pub clamped: bool,
}

/// Conditional GP at one `(f, θ)` pair.
pub struct Predictor<'a> {
    x: &'a Matrix,
    theta: &'a Hyperparams,
    gram: GramMatrix,
    /// `(K + jitter·I)⁻¹ f`
    weights: Vec<f64>,
}

impl<'a> Predictor<'a> {
    pub fn new(data: &'a Dataset, f: &[f64], theta: &'a Hyperparams) -> Result<Self> {
        let gram = gram(data.x(), theta)?;
        if f.len() != gram.n() {
            return Err(crate::Error::Dimension { expected: gram.n(), got: f.len() });
        }
        let weights = gram.chol().solve(f);
        Ok(Self { x: data.x(), theta, gram, weights })
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// `Φ(m / √(1 + v))` with `m = k*ᵀK⁻¹f` and `v = σ − k*ᵀK⁻¹k*`.
    pub fn predict(&self, x_star: &[f64]) -> Result<PointPrediction> {
        let k_star = cross_covariance(x_star, self.x, self.theta)?;
        let mean = dot(&k_star, &self.weights);
        let v = self.gram.chol().solve_lower(&k_star);
        let raw = self.gram.sigma() - squared_norm(&v);
        let clamped = raw < 0.0;
        let variance = raw.max(0.0);
        let prob = math::norm_cdf(mean / math::sqrt(1.0 + variance));
        Ok(PointPrediction { prob, mean, variance, clamped })
    }
}

/// Single-sample predictive probability.
pub fn predict_prob(x_star: &[f64], f_sample: &[f64], theta_sample: &Hyperparams, data: &Dataset) -> Result<f64> {
    Ok(Predictor::new(data, f_sample, theta_sample)?.predict(x_star)?.prob)
}

/// Chain-averaged prediction at one test input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveSummary {
    pub mean_prob: f64,
    /// Standard deviation of the per-sample probabilities over `√S`.
    pub mc_std_error: f64,
    pub clamped: usize,
}

/// Averages the per-sample probabilities at every row of `x_test`.
pub fn predictive_summaries(
    x_test: &Matrix,
    samples: &[(Vec<f64>, Hyperparams)],
    data: &Dataset,
) -> Result<Vec<PredictiveSummary>> {
    let m = x_test.rows();
    let mut probs = alloc::vec![Vec::with_capacity(samples.len()); m];
    let mut clamped = alloc::vec![0usize; m];
    for (f, theta) in samples {
        let p = Predictor::new(data, f, theta)?;
        for i in 0..m {
            let out = p.predict(x_test.row(i))?;
            probs[i].push(out.prob);
            clamped[i] += out.clamped as usize;
        }
    }
    Ok(probs.iter().zip(clamped).map(|(p, c)| summarize(p, c)).collect())
}

/// Mean of per-sample probabilities with its naive standard error.
pub fn summarize(probs: &[f64], clamped: usize) -> PredictiveSummary {
    let s = probs.len();
    let mean_prob = crate::stats::mean(probs);
    let mc_std_error = if s > 1 { crate::stats::sample_sd(probs) / math::sqrt(s as f64) } else { 0.0 };
    PredictiveSummary { mean_prob, mc_std_error, clamped }
}
