//! Unbiased estimators of the marginal likelihood `p(y|θ)`.
//!
//! All three estimators average `N_imp` independent importance weights:
//!
//! * IS: `w = p(y|f) N(f|0,K) / q(f)` with `f ~ q`, `q` the Laplace
//!   approximation;
//! * AIS from the prior: the bridge `N(f|0,K) p(y|f)^β`;
//! * AIS from the approximation: the bridge
//!   `q(f) [N(f|0,K) p(y|f) / q(f)]^β`.
//!
//! Each weight is computed from its own seeded stream, so the estimate does
//! not depend on the order the trajectories run in. Weights stay in log space
//! throughout.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{gram, GramMatrix, Hyperparams};
use crate::laplace::{laplace_approx, LaplaceResult};
use crate::math;
use crate::model::Dataset;
use crate::rng::{child_seeds, seeded};
use crate::slice::{ess_step, ApproxRatioResidual, LikelihoodResidual, Residual, SlicePoint, TemperedTarget};

const BLOCK_SPLIT: f64 = 0.2;
const SMALLEST_BETA: f64 = 1e-6;

/// Inverse temperatures `1 = β₀ > β₁ > … > β_s = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSchedule {
    betas: Vec<f64>,
}

impl TemperatureSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::argument("a schedule needs at least two temperatures"));
        }
        if betas[0] != 1.0 || *betas.last().unwrap() != 0.0 {
            return Err(Error::argument("schedule must start at 1 and end at 0"));
        }
        if betas.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::argument("schedule must be strictly decreasing"));
        }
        Ok(Self { betas })
    }

    /// Geometric schedule with `s` segments (`s` even): `s/2` log-uniform values
    /// from 1 down to 0.2, `s/2` more from just below 0.2 down to 1e-6, then 0.
    pub fn with_segments(s: usize) -> Result<Self> {
        if s < 2 || !s.is_multiple_of(2) {
            return Err(Error::argument(format!("segment count must be even and ≥ 2, got {s}")));
        }
        let half = s / 2;
        let ln_split = math::ln(BLOCK_SPLIT);
        let ln_ratio = math::ln(SMALLEST_BETA / BLOCK_SPLIT);
        let mut betas = Vec::with_capacity(s + 1);
        betas.push(1.0);
        for k in 1..half {
            let v = if k == half - 1 { BLOCK_SPLIT } else { math::exp(ln_split * k as f64 / (half - 1) as f64) };
            betas.push(v);
        }
        for k in 1..=half {
            let v = if k == half { SMALLEST_BETA } else { BLOCK_SPLIT * math::exp(ln_ratio * k as f64 / half as f64) };
            betas.push(v);
        }
        betas.push(0.0);
        Self::from_betas(betas)
    }

    /// `s = ⌈√n⌉` rounded up to the next even number.
    pub fn geometric(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::argument("schedule needs n ≥ 1"));
        }
        let mut s = math::ceil(math::sqrt(n as f64)) as usize;
        if s % 2 == 1 {
            s += 1;
        }
        Self::with_segments(s.max(2))
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Number of segments `s`.
    pub fn segments(&self) -> usize {
        self.betas.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum EstimatorMethod {
    Is,
    AisPrior,
    AisApprox,
}

impl EstimatorMethod {
    pub const ALL: [EstimatorMethod; 3] = [EstimatorMethod::Is, EstimatorMethod::AisPrior, EstimatorMethod::AisApprox];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorMethod::Is => "is",
            EstimatorMethod::AisPrior => "ais-prior",
            EstimatorMethod::AisApprox => "ais-approx",
        }
    }

    pub fn needs_laplace(&self) -> bool {
        !matches!(self, EstimatorMethod::AisPrior)
    }
}

impl fmt::Display for EstimatorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "is" => Ok(EstimatorMethod::Is),
            "ais-prior" => Ok(EstimatorMethod::AisPrior),
            "ais-approx" => Ok(EstimatorMethod::AisApprox),
            other => Err(Error::argument(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Log of an unbiased marginal-likelihood estimate and its log weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMarginalEstimate {
    pub log_value: f64,
    pub log_weights: Vec<f64>,
    pub method: EstimatorMethod,
    pub n_imp: usize,
    pub ess_stalls: usize,
}

impl LogMarginalEstimate {
    /// `log_value = logsumexp(log_weights) − ln N_imp`.
    pub fn from_log_weights(method: EstimatorMethod, log_weights: Vec<f64>, ess_stalls: usize) -> Result<Self> {
        let n_imp = log_weights.len();
        let log_value = logsumexp(&log_weights)? - math::ln(n_imp as f64);
        Ok(Self { log_value, log_weights, method, n_imp, ess_stalls })
    }
}

/// `ln Σ exp(v_i)` with a max shift.
pub fn logsumexp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::argument("logsumexp of an empty sequence"));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if v.iter().any(|x| x.is_nan()) {
        return Ok(f64::NAN);
    }
    if max.is_infinite() {
        return Ok(max);
    }
    let s: f64 = v.iter().map(|x| math::exp(x - max)).sum();
    Ok(max + math::ln(s))
}

/// Log weight of one plain importance sample drawn from the residual's
/// reference with the given seed.
pub fn importance_log_weight<R: Residual + ?Sized>(residual: &R, seed: u64) -> f64 {
    SlicePoint::from_reference(residual, &mut seeded(seed)).delta
}

/// One AIS trajectory: returns the log weight and the number of stalled
/// slice-sampling transitions.
///
/// The weight `Σ_{i<s} (β_i − β_{i+1}) Δ(f_i)` is accumulated in the
/// rearranged form `Δ(f₀) + Σ_{0<i<s} β_i (Δ(f_i) − Δ(f_{i−1}))`, which is
/// the same sum but collapses to exactly `Δ(f_{s−1})` when no transition
/// moves the state.
pub fn ais_trajectory<R: Residual + ?Sized>(
    residual: &R,
    schedule: &TemperatureSchedule,
    steps_per_level: usize,
    seed: u64,
) -> (f64, usize) {
    let mut rng = seeded(seed);
    let betas = schedule.betas();
    let s = schedule.segments();
    let mut point = SlicePoint::from_reference(residual, &mut rng);
    let mut increments = 0.0;
    let mut stalls = 0;
    for i in (1..s).rev() {
        let beta = betas[i];
        let target = TemperedTarget::new(residual, beta).expect("schedule values lie in [0, 1]");
        let before = point.delta;
        for _ in 0..steps_per_level {
            let step = ess_step(&point, &target, &mut rng);
            stalls += step.stalled as usize;
            point = step.point;
        }
        increments += beta * (before - point.delta);
    }
    (point.delta + increments, stalls)
}

fn require_converged(la: &LaplaceResult) -> Result<()> {
    if la.converged {
        Ok(())
    } else {
        Err(Error::numerical("Laplace approximation did not converge"))
    }
}

/// Importance sampling with the Laplace approximation as proposal.
pub fn is_estimate<G: Rng + ?Sized>(
    y: &[f64],
    g: &GramMatrix,
    la: &LaplaceResult,
    n_imp: usize,
    rng: &mut G,
) -> Result<LogMarginalEstimate> {
    require_converged(la)?;
    if n_imp == 0 {
        return Err(Error::argument("n_imp must be at least 1"));
    }
    let residual = ApproxRatioResidual::new(y, g.prior(), &la.q)?;
    let weights = child_seeds(rng, n_imp).into_iter().map(|s| importance_log_weight(&residual, s)).collect();
    LogMarginalEstimate::from_log_weights(EstimatorMethod::Is, weights, 0)
}

/// Where the annealing bridge starts.
#[derive(Debug, Clone, Copy)]
pub enum AisStart<'a> {
    Prior,
    Approx(&'a LaplaceResult),
}

/// Annealed importance sampling.
pub fn ais_estimate<G: Rng + ?Sized>(
    y: &[f64],
    g: &GramMatrix,
    start: AisStart<'_>,
    schedule: &TemperatureSchedule,
    n_imp: usize,
    ess_steps_per_level: usize,
    rng: &mut G,
) -> Result<LogMarginalEstimate> {
    if n_imp == 0 {
        return Err(Error::argument("n_imp must be at least 1"));
    }
    let seeds = child_seeds(rng, n_imp);
    let run = |residual: &dyn Residual| {
        let mut stalls = 0;
        let weights: Vec<f64> = seeds
            .iter()
            .map(|s| {
                let (w, st) = ais_trajectory(residual, schedule, ess_steps_per_level, *s);
                stalls += st;
                w
            })
            .collect();
        (weights, stalls)
    };
    let (method, (weights, stalls)) = match start {
        AisStart::Prior => (EstimatorMethod::AisPrior, run(&LikelihoodResidual::new(y, g.prior())?)),
        AisStart::Approx(la) => {
            require_converged(la)?;
            (EstimatorMethod::AisApprox, run(&ApproxRatioResidual::new(y, g.prior(), &la.q)?))
        }
    };
    LogMarginalEstimate::from_log_weights(method, weights, stalls)
}

/// Estimator settings shared by the chain, the studies and the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub method: EstimatorMethod,
    pub n_imp: usize,
    pub ess_steps_per_level: usize,
    /// `None` uses [`TemperatureSchedule::geometric`] for the data size.
    pub schedule: Option<TemperatureSchedule>,
}

impl EstimatorConfig {
    pub fn new(method: EstimatorMethod, n_imp: usize) -> Self {
        Self { method, n_imp, ess_steps_per_level: 1, schedule: None }
    }

    pub fn schedule_for(&self, n: usize) -> Result<TemperatureSchedule> {
        match &self.schedule {
            Some(s) => Ok(s.clone()),
            None => TemperatureSchedule::geometric(n),
        }
    }
}

/// Gram matrix and (when needed) Laplace approximation at a fixed θ, so that
/// repeated estimates at the same θ share the `O(n³)` work.
#[derive(Debug, Clone)]
pub struct EstimatorContext {
    pub gram: GramMatrix,
    pub laplace: Option<LaplaceResult>,
}

impl EstimatorContext {
    pub fn new(data: &Dataset, theta: &Hyperparams, with_laplace: bool) -> Result<Self> {
        let g = gram(data.x(), theta)?;
        let laplace = if with_laplace {
            let la = laplace_approx(data.y(), &g)?;
            require_converged(&la)?;
            Some(la)
        } else {
            None
        };
        Ok(Self { gram: g, laplace })
    }

    pub fn for_method(data: &Dataset, theta: &Hyperparams, method: EstimatorMethod) -> Result<Self> {
        Self::new(data, theta, method.needs_laplace())
    }

    fn laplace(&self) -> Result<&LaplaceResult> {
        self.laplace
            .as_ref()
            .ok_or_else(|| Error::argument("estimator context was built without a Laplace approximation"))
    }

    /// Log weight of a single importance sample (or AIS trajectory).
    pub fn log_weight(
        &self,
        y: &[f64],
        config: &EstimatorConfig,
        schedule: &TemperatureSchedule,
        seed: u64,
    ) -> Result<(f64, usize)> {
        match config.method {
            EstimatorMethod::Is => {
                let res = ApproxRatioResidual::new(y, self.gram.prior(), &self.laplace()?.q)?;
                Ok((importance_log_weight(&res, seed), 0))
            }
            EstimatorMethod::AisPrior => {
                let res = LikelihoodResidual::new(y, self.gram.prior())?;
                Ok(ais_trajectory(&res, schedule, config.ess_steps_per_level, seed))
            }
            EstimatorMethod::AisApprox => {
                let res = ApproxRatioResidual::new(y, self.gram.prior(), &self.laplace()?.q)?;
                Ok(ais_trajectory(&res, schedule, config.ess_steps_per_level, seed))
            }
        }
    }

    pub fn estimate<G: Rng + ?Sized>(
        &self,
        y: &[f64],
        config: &EstimatorConfig,
        rng: &mut G,
    ) -> Result<LogMarginalEstimate> {
        self.estimate_with(y, config, rng, &Sequential)
    }

    /// Like [`estimate`](Self::estimate), with the trajectories handed to
    /// `runner`. The result does not depend on how the runner schedules them.
    pub fn estimate_with<G: Rng + ?Sized, T: TrajectoryRunner + ?Sized>(
        &self,
        y: &[f64],
        config: &EstimatorConfig,
        rng: &mut G,
        runner: &T,
    ) -> Result<LogMarginalEstimate> {
        if config.n_imp == 0 {
            return Err(Error::argument("n_imp must be at least 1"));
        }
        let schedule = config.schedule_for(y.len())?;
        let seeds = child_seeds(rng, config.n_imp);
        let steps = config.ess_steps_per_level;
        let out = match config.method {
            EstimatorMethod::Is => {
                let res = ApproxRatioResidual::new(y, self.gram.prior(), &self.laplace()?.q)?;
                runner.run(&seeds, &|s| (importance_log_weight(&res, s), 0))
            }
            EstimatorMethod::AisPrior => {
                let res = LikelihoodResidual::new(y, self.gram.prior())?;
                runner.run(&seeds, &|s| ais_trajectory(&res, &schedule, steps, s))
            }
            EstimatorMethod::AisApprox => {
                let res = ApproxRatioResidual::new(y, self.gram.prior(), &self.laplace()?.q)?;
                runner.run(&seeds, &|s| ais_trajectory(&res, &schedule, steps, s))
            }
        };
        let stalls = out.iter().map(|(_, st)| st).sum();
        LogMarginalEstimate::from_log_weights(config.method, out.into_iter().map(|(w, _)| w).collect(), stalls)
    }
}

/// Runs independent trajectories, one per seed, returning results in seed
/// order.
pub trait TrajectoryRunner {
    fn run(&self, seeds: &[u64], trajectory: &(dyn Fn(u64) -> (f64, usize) + Sync)) -> Vec<(f64, usize)>;
}

/// Runs trajectories one after the other.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl TrajectoryRunner for Sequential {
    fn run(&self, seeds: &[u64], trajectory: &(dyn Fn(u64) -> (f64, usize) + Sync)) -> Vec<(f64, usize)> {
        seeds.iter().map(|s| trajectory(*s)).collect()
    }
}
