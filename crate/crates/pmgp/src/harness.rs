//! Estimator-variance study on synthetic data and the acceptance-rate
//! benchmark on real data.

use log::{info, warn};
use pmgp_core::pm_mcmc::{pooled_acceptance, WarmupConfig};
use pmgp_core::rng::{derive_seed, stream};
use pmgp_core::stats::{quantile, r_statistic, sample_sd};
use pmgp_core::synthetic::{gen_synthetic, DEFAULT_SIGMA, DEFAULT_TAU};
use pmgp_core::{ChainConfig, Dataset, EstimatorConfig, EstimatorMethod, Hyperparams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::parallel;

/// Settings of the short chain that supplies posterior θ draws for the
/// variance study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrelimConfig {
    pub warmup_iter: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub n_imp: usize,
}

impl Default for PrelimConfig {
    fn default() -> Self {
        Self { warmup_iter: 500, n_iter: 600, burn_in: 100, n_imp: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RStudyConfig {
    pub n_list: Vec<usize>,
    pub methods: Vec<EstimatorMethod>,
    pub n_imp: usize,
    /// Estimator calls per θ.
    pub reps: usize,
    /// Posterior θ draws per data size.
    pub n_theta: usize,
    pub sigma: f64,
    pub tau: f64,
    pub prelim: PrelimConfig,
    pub seed: u64,
}

impl Default for RStudyConfig {
    fn default() -> Self {
        Self {
            n_list: vec![10, 50, 100, 500, 1000],
            methods: EstimatorMethod::ALL.to_vec(),
            n_imp: 4,
            reps: 50,
            n_theta: 50,
            sigma: DEFAULT_SIGMA,
            tau: DEFAULT_TAU,
            prelim: PrelimConfig::default(),
            seed: 1,
        }
    }
}

/// `r` values for one data size and one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RStudyResult {
    pub n: usize,
    pub method: EstimatorMethod,
    pub r_values: Vec<f64>,
}

impl RStudyResult {
    pub fn median(&self) -> f64 {
        quantile(&self.r_values, 0.5)
    }

    /// Minimum, lower quartile, median, upper quartile, maximum.
    pub fn five_numbers(&self) -> [f64; 5] {
        [0.0, 0.25, 0.5, 0.75, 1.0].map(|p| quantile(&self.r_values, p))
    }
}

/// Evenly thinned posterior θ draws from a short pseudo-marginal chain with
/// the AIS-from-approximation estimator.
pub fn posterior_draws(data: &Dataset, prelim: &PrelimConfig, n_draws: usize, seed: u64) -> Result<Vec<Hyperparams>> {
    let mut cfg = ChainConfig::new(EstimatorMethod::AisApprox, prelim.n_imp, false, seed);
    cfg.n_chains = 1;
    cfg.n_iter = prelim.n_iter;
    cfg.burn_in = prelim.burn_in;
    cfg.warmup = WarmupConfig { n_iter: prelim.warmup_iter, ..WarmupConfig::default() };
    let run = parallel::run_chains(data, &cfg)?;
    let thetas = &run.chains[0].thetas;
    let step = (thetas.len() / n_draws.max(1)).max(1);
    Ok(thetas.iter().step_by(step).take(n_draws).cloned().collect())
}

/// `r` for every data size, estimator and posterior draw.
pub fn r_study(config: &RStudyConfig) -> Result<Vec<RStudyResult>> {
    let mut out = Vec::new();
    for &n in &config.n_list {
        let synth = gen_synthetic(n, config.sigma, config.tau, derive_seed(config.seed, &[n as u64]))?;
        if synth.redraws > 0 {
            info!("n = {n}: {} unbalanced draws discarded", synth.redraws);
        }
        let thetas =
            posterior_draws(&synth.data, &config.prelim, config.n_theta, derive_seed(config.seed, &[n as u64, 1]))?;
        for (mi, &method) in config.methods.iter().enumerate() {
            let est = EstimatorConfig::new(method, config.n_imp);
            let r_values = thetas
                .par_iter()
                .enumerate()
                .map(|(k, theta)| {
                    let mut rng = stream(config.seed, &[n as u64, 2, mi as u64, k as u64]);
                    match r_statistic(&synth.data, theta, &est, config.reps, &mut rng) {
                        Ok(r) => Ok(r),
                        Err(e) if e.is_numerical() => {
                            warn!("n = {n}, {method}, draw {k}: {e}; r set to +inf");
                            Ok(f64::INFINITY)
                        }
                        Err(e) => Err(e),
                    }
                })
                .collect::<pmgp_core::Result<Vec<_>>>()?;
            info!("n = {n}, {method}: median r = {}", quantile(&r_values, 0.5));
            out.push(RStudyResult { n, method, r_values });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub ard: bool,
    pub method: EstimatorMethod,
    pub n_imp: usize,
    pub chains: usize,
    pub iters: usize,
    pub burn_in: usize,
    pub warmup_iter: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ard: false,
            method: EstimatorMethod::Is,
            n_imp: 1,
            chains: 5,
            iters: 2000,
            burn_in: 500,
            warmup_iter: 2000,
            seed: 1,
        }
    }
}

impl BenchConfig {
    pub fn chain_config(&self) -> ChainConfig {
        let mut c = ChainConfig::new(self.method, self.n_imp, self.ard, self.seed);
        c.n_chains = self.chains;
        c.n_iter = self.iters;
        c.burn_in = self.burn_in;
        c.warmup = WarmupConfig { n_iter: self.warmup_iter, ..WarmupConfig::default() };
        c
    }
}

/// One cell of the acceptance-rate table; rates in percent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub dataset: String,
    pub n: usize,
    pub d: usize,
    pub covariance: &'static str,
    pub method: EstimatorMethod,
    pub n_imp: usize,
    pub per_chain: Vec<f64>,
    pub acceptance_mean: f64,
    /// Across chains.
    pub acceptance_sd: f64,
    pub pooled: f64,
    pub warmup_acceptance: f64,
}

impl BenchRow {
    /// `mean (sd)` with one decimal.
    pub fn cell(&self) -> String {
        format!("{:.1} ({:.1})", self.acceptance_mean, self.acceptance_sd)
    }
}

/// Warm-up with the Laplace marginal, then independent pseudo-marginal chains.
pub fn acceptance_benchmark(name: &str, data: &Dataset, config: &BenchConfig) -> Result<BenchRow> {
    let run = parallel::run_chains(data, &config.chain_config())?;
    let per_chain: Vec<f64> = run.chains.iter().map(|c| 100.0 * c.acceptance_rate).collect();
    let acceptance_mean = per_chain.iter().sum::<f64>() / per_chain.len() as f64;
    let acceptance_sd = if per_chain.len() > 1 { sample_sd(&per_chain) } else { 0.0 };
    Ok(BenchRow {
        dataset: name.to_string(),
        n: data.n(),
        d: data.d(),
        covariance: if config.ard { "ard" } else { "iso" },
        method: config.method,
        n_imp: config.n_imp,
        per_chain,
        acceptance_mean,
        acceptance_sd,
        pooled: 100.0 * pooled_acceptance(&run.chains),
        warmup_acceptance: 100.0 * run.warmup.final_acceptance,
    })
}
