//! Pseudo-marginal Metropolis–Hastings over the covariance hyperparameters.
//!
//! The chain walks on `(log σ, log τ…)` with a symmetric Gaussian random walk.
//! A warm-up run that uses the Laplace approximate marginal tunes one global
//! step size; the proposal is then frozen and the recorded chains use an
//! unbiased estimator in the Hastings ratio. The estimate attached to the
//! current state is recycled until a proposal is accepted.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, EstimatorContext, EstimatorMethod};
use crate::kernel::{gram, Hyperparams};
use crate::laplace::laplace_mode;
use crate::math;
use crate::model::{log_hyperprior, sample_hyperprior, Dataset, PriorSpec};
use crate::rng::stream;

const MAX_INIT_DRAWS: usize = 100;
const WARMUP_STREAM: u64 = 0x5741_524d;
const INIT_STREAM: u64 = u64::MAX;

/// Something that returns `ln p̃(y|θ)`, exactly or as an unbiased estimate.
///
/// Numerical errors are treated as rejections by the chain.
pub trait LogMarginal {
    fn log_marginal<R: Rng + ?Sized>(&self, data: &Dataset, theta: &Hyperparams, rng: &mut R) -> Result<f64>;

    fn label(&self) -> &'static str {
        "custom"
    }
}

impl LogMarginal for EstimatorConfig {
    fn log_marginal<R: Rng + ?Sized>(&self, data: &Dataset, theta: &Hyperparams, rng: &mut R) -> Result<f64> {
        let ctx = EstimatorContext::for_method(data, theta, self.method)?;
        Ok(ctx.estimate(data.y(), self, rng)?.log_value)
    }

    fn label(&self) -> &'static str {
        self.method.as_str()
    }
}

/// Laplace approximation of `ln p(y|θ)`; deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct LaplaceMarginal;

impl LogMarginal for LaplaceMarginal {
    fn log_marginal<R: Rng + ?Sized>(&self, data: &Dataset, theta: &Hyperparams, _rng: &mut R) -> Result<f64> {
        let g = gram(data.x(), theta)?;
        let mode = laplace_mode(data.y(), &g)?;
        if !mode.converged {
            return Err(Error::numerical("Laplace approximation did not converge"));
        }
        Ok(mode.log_marginal_la)
    }

    fn label(&self) -> &'static str {
        "laplace"
    }
}

/// Constant likelihood; the chain then targets the hyperprior.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatMarginal;

impl LogMarginal for FlatMarginal {
    fn log_marginal<R: Rng + ?Sized>(&self, _: &Dataset, _: &Hyperparams, _: &mut R) -> Result<f64> {
        Ok(0.0)
    }

    fn label(&self) -> &'static str {
        "flat"
    }
}

/// Random-walk proposal on the log scale: `θ' = θ + global · unit ⊙ ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSpec {
    global_scale: f64,
    unit_scales: Vec<f64>,
    adapted: bool,
}

impl ProposalSpec {
    pub fn new(dim: usize, global_scale: f64) -> Result<Self> {
        Self::with_unit_scales(vec![1.0; dim], global_scale)
    }

    pub fn with_unit_scales(unit_scales: Vec<f64>, global_scale: f64) -> Result<Self> {
        if unit_scales.is_empty() || unit_scales.iter().any(|s| !(*s > 0.0)) || !(global_scale > 0.0) {
            return Err(Error::argument("proposal scales must be positive"));
        }
        Ok(Self { global_scale, unit_scales, adapted: false })
    }

    /// A proposal that is already frozen.
    pub fn frozen(dim: usize, global_scale: f64) -> Result<Self> {
        let mut p = Self::new(dim, global_scale)?;
        p.adapted = true;
        Ok(p)
    }

    pub fn global_scale(&self) -> f64 {
        self.global_scale
    }

    pub fn scales(&self) -> Vec<f64> {
        self.unit_scales.iter().map(|u| u * self.global_scale).collect()
    }

    pub fn is_adapted(&self) -> bool {
        self.adapted
    }

    /// Fails once the proposal has been frozen.
    pub fn set_global_scale(&mut self, scale: f64) -> Result<()> {
        if self.adapted {
            return Err(Error::argument("proposal is frozen after warm-up"));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::argument("proposal scale must be positive"));
        }
        self.global_scale = scale;
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.adapted = true;
    }

    pub fn propose<R: Rng + ?Sized>(&self, theta: &Hyperparams, rng: &mut R) -> Result<Hyperparams> {
        let mut v = theta.to_log_vec();
        if v.len() != self.unit_scales.len() {
            return Err(Error::Dimension { expected: self.unit_scales.len(), got: v.len() });
        }
        for (vi, u) in v.iter_mut().zip(&self.unit_scales) {
            let xi: f64 = StandardNormal.sample(rng);
            *vi += self.global_scale * u * xi;
        }
        Hyperparams::from_log_vec(&v)
    }
}

/// Current state of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Hyperparams,
    /// Retained `ln p̃(y|θ)`.
    pub log_estimate: f64,
    pub log_hyperprior: f64,
    pub estimator: &'static str,
    pub iteration: usize,
}

impl ChainState {
    /// Starts a chain at `theta`, estimating the marginal once.
    pub fn start<M: LogMarginal, R: Rng + ?Sized>(
        theta: Hyperparams,
        data: &Dataset,
        priors: &PriorSpec,
        marginal: &M,
        rng: &mut R,
    ) -> Result<Self> {
        let log_hyperprior = log_hyperprior(&theta, priors)?;
        let log_estimate = marginal.log_marginal(data, &theta, rng)?;
        if !log_estimate.is_finite() {
            return Err(Error::numerical("initial marginal estimate is not finite"));
        }
        Ok(Self { theta, log_estimate, log_hyperprior, estimator: marginal.label(), iteration: 0 })
    }

    /// Draws θ from the hyperprior until the marginal can be evaluated.
    pub fn from_prior<M: LogMarginal, R: Rng + ?Sized>(
        data: &Dataset,
        priors: &PriorSpec,
        marginal: &M,
        rng: &mut R,
    ) -> Result<Self> {
        let mut last = Error::numerical("no initial state");
        for _ in 0..MAX_INIT_DRAWS {
            let theta = sample_hyperprior(priors, rng)?;
            match Self::start(theta, data, priors, marginal, rng) {
                Ok(s) => return Ok(s),
                Err(e) if e.is_numerical() => last = e,
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }
}

/// Result of one Metropolis–Hastings transition.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: ChainState,
    pub accepted: bool,
    /// The proposal could not be evaluated and was rejected.
    pub failed: bool,
}

fn transition<M: LogMarginal, R: Rng + ?Sized>(
    state: &ChainState,
    prop: &ProposalSpec,
    marginal: &M,
    data: &Dataset,
    priors: &PriorSpec,
    rng: &mut R,
) -> Result<StepOutcome> {
    let proposed = prop.propose(&state.theta, rng)?;
    let lp = log_hyperprior(&proposed, priors)?;
    let estimate = match marginal.log_marginal(data, &proposed, rng) {
        Ok(v) if !v.is_nan() && v != f64::NEG_INFINITY => Some(v),
        Ok(_) => None,
        Err(e) if e.is_numerical() => None,
        Err(e) => return Err(e),
    };
    let u: f64 = rng.random();
    let mut next = state.clone();
    next.iteration += 1;
    let Some(est) = estimate else {
        return Ok(StepOutcome { state: next, accepted: false, failed: true });
    };
    let log_ratio = est + lp - state.log_estimate - state.log_hyperprior;
    let accepted = math::ln(u) < log_ratio;
    if accepted {
        next.theta = proposed;
        next.log_estimate = est;
        next.log_hyperprior = lp;
    }
    Ok(StepOutcome { state: next, accepted, failed: false })
}

/// One pseudo-marginal step with a frozen proposal.
pub fn pm_step<M: LogMarginal, R: Rng + ?Sized>(
    state: &ChainState,
    prop: &ProposalSpec,
    marginal: &M,
    data: &Dataset,
    priors: &PriorSpec,
    rng: &mut R,
) -> Result<StepOutcome> {
    if !prop.is_adapted() {
        return Err(Error::argument("pm_step needs a frozen (adapted) proposal"));
    }
    transition(state, prop, marginal, data, priors, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmupConfig {
    pub n_iter: usize,
    /// Iterations between scale updates.
    pub window: usize,
    pub kappa: f64,
    pub target_acceptance: f64,
    pub initial_scale: f64,
    /// Windows at the end of warm-up over which the reported acceptance is
    /// measured.
    pub report_windows: usize,
}

impl Default for WarmupConfig {
    fn default() -> Self {
        Self { n_iter: 2000, window: 100, kappa: 1.0, target_acceptance: 0.25, initial_scale: 0.5, report_windows: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct WarmupResult {
    pub proposal: ProposalSpec,
    pub final_state: ChainState,
    /// Acceptance over the last `report_windows` windows.
    pub final_acceptance: f64,
    pub window_acceptance: Vec<f64>,
    pub thetas: Vec<Hyperparams>,
    pub failures: usize,
}

/// Adaptive warm-up: every `window` iterations the global scale is multiplied
/// by `exp(κ (acc − target))`. Returns the frozen proposal.
pub fn warmup_adapt<M: LogMarginal, R: Rng + ?Sized>(
    data: &Dataset,
    priors: &PriorSpec,
    marginal: &M,
    init_theta: Option<Hyperparams>,
    config: &WarmupConfig,
    rng: &mut R,
) -> Result<WarmupResult> {
    if config.window == 0 || config.n_iter < config.window {
        return Err(Error::argument("warm-up needs at least one full window"));
    }
    let mut state = match init_theta {
        Some(t) => ChainState::start(t, data, priors, marginal, rng)?,
        None => ChainState::from_prior(data, priors, marginal, rng)?,
    };
    let mut prop = ProposalSpec::new(state.theta.dim(), config.initial_scale)?;
    let mut accepted_in_window = 0usize;
    let mut window_acceptance = Vec::with_capacity(config.n_iter / config.window);
    let mut thetas = Vec::with_capacity(config.n_iter);
    let mut failures = 0;
    for t in 1..=config.n_iter {
        let out = transition(&state, &prop, marginal, data, priors, rng)?;
        accepted_in_window += out.accepted as usize;
        failures += out.failed as usize;
        state = out.state;
        thetas.push(state.theta.clone());
        if t % config.window == 0 {
            let acc = accepted_in_window as f64 / config.window as f64;
            window_acceptance.push(acc);
            let scale = prop.global_scale() * math::exp(config.kappa * (acc - config.target_acceptance));
            prop.set_global_scale(scale)?;
            accepted_in_window = 0;
        }
    }
    prop.freeze();
    let k = config.report_windows.clamp(1, window_acceptance.len());
    let tail = &window_acceptance[window_acceptance.len() - k..];
    let final_acceptance = tail.iter().sum::<f64>() / k as f64;
    Ok(WarmupResult { proposal: prop, final_state: state, final_acceptance, window_acceptance, thetas, failures })
}

/// Post-burn-in record of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub chain_id: usize,
    pub iterations: Vec<usize>,
    pub thetas: Vec<Hyperparams>,
    pub log_estimates: Vec<f64>,
    pub accept_flags: Vec<bool>,
    pub acceptance_rate: f64,
    pub failures: usize,
}

/// Runs one chain with its own random streams.
///
/// Iteration `t` of chain `c` draws from the stream `(seed, c, t)`; the
/// initial state comes from `(seed, c, u64::MAX)`.
#[allow(clippy::too_many_arguments)]
pub fn run_chain<M: LogMarginal>(
    data: &Dataset,
    priors: &PriorSpec,
    proposal: &ProposalSpec,
    marginal: &M,
    chain_id: usize,
    n_iter: usize,
    burn_in: usize,
    seed: u64,
) -> Result<ChainRecord> {
    if burn_in >= n_iter {
        return Err(Error::argument(format!("burn-in {burn_in} leaves nothing of {n_iter} iterations")));
    }
    let mut init_rng = stream(seed, &[chain_id as u64, INIT_STREAM]);
    let mut state = ChainState::from_prior(data, priors, marginal, &mut init_rng)?;
    let keep = n_iter - burn_in;
    let mut rec = ChainRecord {
        chain_id,
        iterations: Vec::with_capacity(keep),
        thetas: Vec::with_capacity(keep),
        log_estimates: Vec::with_capacity(keep),
        accept_flags: Vec::with_capacity(keep),
        acceptance_rate: 0.0,
        failures: 0,
    };
    for t in 1..=n_iter {
        let mut rng = stream(seed, &[chain_id as u64, t as u64]);
        let out = pm_step(&state, proposal, marginal, data, priors, &mut rng)?;
        if !out.accepted {
            // pseudo-marginal correctness: the old estimate is reused, never refreshed
            assert_eq!(out.state.log_estimate.to_bits(), state.log_estimate.to_bits());
        }
        state = out.state;
        if t > burn_in {
            rec.iterations.push(t);
            rec.thetas.push(state.theta.clone());
            rec.log_estimates.push(state.log_estimate);
            rec.accept_flags.push(out.accepted);
            rec.failures += out.failed as usize;
        }
    }
    rec.acceptance_rate = rec.accept_flags.iter().filter(|a| **a).count() as f64 / keep as f64;
    Ok(rec)
}

/// Settings of a complete run: warm-up followed by independent chains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub ard: bool,
    pub estimator: EstimatorConfig,
    pub warmup: WarmupConfig,
    pub seed: u64,
}

impl ChainConfig {
    pub fn new(method: EstimatorMethod, n_imp: usize, ard: bool, seed: u64) -> Self {
        Self {
            n_chains: 5,
            n_iter: 2000,
            burn_in: 500,
            ard,
            estimator: EstimatorConfig::new(method, n_imp),
            warmup: WarmupConfig::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainRun {
    pub warmup: WarmupResult,
    pub chains: Vec<ChainRecord>,
}

impl ChainRun {
    pub fn pooled_acceptance(&self) -> f64 {
        pooled_acceptance(&self.chains)
    }
}

pub fn pooled_acceptance(chains: &[ChainRecord]) -> f64 {
    let (acc, total) = chains.iter().fold((0usize, 0usize), |(a, t), c| {
        (a + c.accept_flags.iter().filter(|x| **x).count(), t + c.accept_flags.len())
    });
    if total == 0 {
        0.0
    } else {
        acc as f64 / total as f64
    }
}

/// Warm-up with the Laplace marginal.
pub fn run_warmup(data: &Dataset, config: &ChainConfig) -> Result<WarmupResult> {
    let priors = PriorSpec::standard(data.d(), config.ard);
    let mut rng = stream(config.seed, &[WARMUP_STREAM]);
    warmup_adapt(data, &priors, &LaplaceMarginal, None, &config.warmup, &mut rng)
}

/// Warm-up, then `n_chains` chains one after the other.
pub fn run_chains(data: &Dataset, config: &ChainConfig) -> Result<ChainRun> {
    let priors = PriorSpec::standard(data.d(), config.ard);
    let warmup = run_warmup(data, config)?;
    let chains = (0..config.n_chains)
        .map(|c| {
            run_chain(data, &priors, &warmup.proposal, &config.estimator, c, config.n_iter, config.burn_in, config.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainRun { warmup, chains })
}
