//! Thread-pool drivers. Every piece of work owns a random stream derived from
//! the root seed, so results are identical for any number of threads.

use pmgp_core::estimators::{EstimatorContext, TrajectoryRunner};
use pmgp_core::kernel::Hyperparams;
use pmgp_core::pm_mcmc::{run_chain, run_warmup, ChainRun, LogMarginal};
use pmgp_core::{ChainConfig, Dataset, EstimatorConfig, PriorSpec};
use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;

/// Pool with `threads` workers; `None` uses every available core.
pub fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t.max(1));
    }
    Ok(b.build()?)
}

/// Runs AIS or IS trajectories on the current rayon pool.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rayon;

impl TrajectoryRunner for Rayon {
    fn run(&self, seeds: &[u64], trajectory: &(dyn Fn(u64) -> (f64, usize) + Sync)) -> Vec<(f64, usize)> {
        seeds.par_iter().map(|s| trajectory(*s)).collect()
    }
}

/// Estimator whose importance samples run in parallel.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelEstimator(pub EstimatorConfig);

impl LogMarginal for ParallelEstimator {
    fn log_marginal<R: Rng + ?Sized>(
        &self,
        data: &Dataset,
        theta: &Hyperparams,
        rng: &mut R,
    ) -> pmgp_core::Result<f64> {
        let ctx = EstimatorContext::for_method(data, theta, self.0.method)?;
        Ok(ctx.estimate_with(data.y(), &self.0, rng, &Rayon)?.log_value)
    }

    fn label(&self) -> &'static str {
        self.0.method.as_str()
    }
}

/// Parallel counterpart of [`pmgp_core::pm_mcmc::run_chains`]: same warm-up,
/// chains run side by side.
pub fn run_chains(data: &Dataset, config: &ChainConfig) -> Result<ChainRun> {
    let priors = PriorSpec::standard(data.d(), config.ard);
    let warmup = run_warmup(data, config)?;
    let marginal = ParallelEstimator(config.estimator.clone());
    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(data, &priors, &warmup.proposal, &marginal, c, config.n_iter, config.burn_in, config.seed))
        .collect::<pmgp_core::Result<Vec<_>>>()?;
    Ok(ChainRun { warmup, chains })
}
