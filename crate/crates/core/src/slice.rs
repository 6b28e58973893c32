//! Elliptical slice sampling for targets of the form
//! `reference(f) · exp(β · Δ(f))`, where `reference` is a Gaussian.
//!
//! The ellipse is centered at the reference mean, so the same operator serves
//! the exact posterior (reference = GP prior, `Δ` = log-likelihood), the
//! prior-annealed bridge, and the bridge that starts at the Laplace
//! approximation (reference = `N(μ, Σ)`, `Δ` = log of posterior over
//! approximation).
//!
//! Residuals may carry a per-point cache that is an affine function of `f`.
//! Points on the ellipse are affine combinations of the current point, the
//! auxiliary draw and the center with weights summing to one, so caches are
//! combined the same way instead of being recomputed. This keeps each shrink
//! step `O(n)` once the auxiliary draw is prepared.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::Rng;

use crate::error::{Error, Result};
use crate::laplace::GaussianRef;
use crate::linalg::squared_norm;
use crate::math;
use crate::model::log_likelihood;

const MIN_BRACKET: f64 = 1e-12;

/// The non-Gaussian factor `Δ(f)` of a target, at full strength.
pub trait Residual {
    /// Gaussian defining the ellipses.
    fn reference(&self) -> &GaussianRef;

    /// Affine per-point cache; empty when not needed.
    fn cache(&self, _f: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    /// Cache of the reference mean.
    fn center_cache(&self) -> &[f64] {
        &[]
    }

    /// Cache of a reference draw `z = mean + L ξ`.
    fn cache_of_draw(&self, z: &[f64], _xi: &[f64]) -> Vec<f64> {
        self.cache(z)
    }

    fn log_residual(&self, f: &[f64], cache: &[f64]) -> f64;
}

/// A latent state together with its cache and `Δ(f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicePoint {
    pub f: Vec<f64>,
    pub cache: Vec<f64>,
    pub delta: f64,
}

impl SlicePoint {
    pub fn new<R: Residual + ?Sized>(f: Vec<f64>, residual: &R) -> Self {
        let cache = residual.cache(&f);
        let delta = residual.log_residual(&f, &cache);
        Self { f, cache, delta }
    }

    /// Fresh draw from the residual's reference Gaussian.
    pub fn from_reference<R: Residual + ?Sized, G: Rng + ?Sized>(residual: &R, rng: &mut G) -> Self {
        let (f, xi) = residual.reference().sample(rng);
        let cache = residual.cache_of_draw(&f, &xi);
        let delta = residual.log_residual(&f, &cache);
        Self { f, cache, delta }
    }
}

/// `reference(f) · exp(β Δ(f))`
#[derive(Clone, Copy)]
pub struct TemperedTarget<'a, R: Residual + ?Sized> {
    residual: &'a R,
    beta: f64,
}

impl<'a, R: Residual + ?Sized> TemperedTarget<'a, R> {
    pub fn new(residual: &'a R, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::argument("inverse temperature must lie in [0, 1]"));
        }
        Ok(Self { residual, beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn residual(&self) -> &'a R {
        self.residual
    }

    pub fn reference(&self) -> &'a GaussianRef {
        self.residual.reference()
    }

    /// `β Δ(f)`, identically zero at `β = 0`.
    #[inline]
    pub fn log_tempered(&self, point: &SlicePoint) -> f64 {
        if self.beta == 0.0 {
            0.0
        } else {
            self.beta * point.delta
        }
    }
}

/// Result of one transition.
#[derive(Debug, Clone)]
pub struct EssStep {
    pub point: SlicePoint,
    /// Number of ellipse points evaluated.
    pub proposals: usize,
    /// The bracket collapsed without an acceptable point; `point` is the input.
    pub stalled: bool,
}

fn combine(a: &[f64], ca: f64, b: &[f64], cb: f64, m: &[f64], cm: f64) -> Vec<f64> {
    if m.is_empty() {
        return a.iter().zip(b).map(|(x, z)| x * ca + z * cb).collect();
    }
    a.iter().zip(b).zip(m).map(|((x, z), c)| x * ca + z * cb + c * cm).collect()
}

/// Point on the ellipse through `f` and `z` around center `m` at angle α:
/// `f cos α + z sin α + m (1 − cos α − sin α)`.
pub fn ellipse_point(f: &[f64], z: &[f64], m: &[f64], alpha: f64) -> Vec<f64> {
    let (s, c) = math::sin_cos(alpha);
    combine(f, c, z, s, m, 1.0 - c - s)
}

/// One elliptical slice sampling transition.
pub fn ess_step<R, G>(current: &SlicePoint, target: &TemperedTarget<'_, R>, rng: &mut G) -> EssStep
where
    R: Residual + ?Sized,
    G: Rng + ?Sized,
{
    let residual = target.residual;
    let reference = residual.reference();
    let (z, xi) = reference.sample(rng);
    let z_cache = residual.cache_of_draw(&z, &xi);
    let center = reference.mean();
    let center_cache = residual.center_cache();

    let u: f64 = rng.random();
    let threshold = target.log_tempered(current) + math::ln(u);

    let mut alpha = rng.random::<f64>() * TAU;
    let (mut lo, mut hi) = (alpha - TAU, alpha);
    let mut proposals = 0;
    loop {
        proposals += 1;
        let (s, c) = math::sin_cos(alpha);
        let m_weight = 1.0 - c - s;
        let f = combine(&current.f, c, &z, s, center, m_weight);
        let cache = if current.cache.is_empty() {
            Vec::new()
        } else {
            combine(&current.cache, c, &z_cache, s, center_cache, m_weight)
        };
        let delta = residual.log_residual(&f, &cache);
        let candidate = SlicePoint { f, cache, delta };
        if target.log_tempered(&candidate) > threshold {
            return EssStep { point: candidate, proposals, stalled: false };
        }
        if alpha < 0.0 {
            lo = alpha;
        } else {
            hi = alpha;
        }
        if hi - lo < MIN_BRACKET {
            return EssStep { point: current.clone(), proposals, stalled: true };
        }
        alpha = lo + rng.random::<f64>() * (hi - lo);
    }
}

/// Latent-vector form of [`ess_step`].
pub fn ess_step_latent<R, G>(f: &[f64], target: &TemperedTarget<'_, R>, rng: &mut G) -> Vec<f64>
where
    R: Residual + ?Sized,
    G: Rng + ?Sized,
{
    let point = SlicePoint::new(f.to_vec(), target.residual);
    ess_step(&point, target, rng).point.f
}

/// `Δ(f) = ln p(y|f)` with the GP prior as reference: the exact posterior at
/// `β = 1`, the prior-annealed bridge otherwise.
pub struct LikelihoodResidual<'a> {
    y: &'a [f64],
    prior: &'a GaussianRef,
}

impl<'a> LikelihoodResidual<'a> {
    pub fn new(y: &'a [f64], prior: &'a GaussianRef) -> Result<Self> {
        if y.len() != prior.dim() {
            return Err(Error::Dimension { expected: prior.dim(), got: y.len() });
        }
        Ok(Self { y, prior })
    }
}

impl Residual for LikelihoodResidual<'_> {
    fn reference(&self) -> &GaussianRef {
        self.prior
    }

    fn log_residual(&self, f: &[f64], _cache: &[f64]) -> f64 {
        log_likelihood(f, self.y)
    }
}

/// `Δ(f) = ln N(f|0,K) + ln p(y|f) − ln N(f|μ,Σ)` with `N(μ, Σ)` as reference.
///
/// The cache holds `[L_K⁻¹ f, L_Σ⁻¹ (f − μ)]`.
pub struct ApproxRatioResidual<'a> {
    y: &'a [f64],
    prior: &'a GaussianRef,
    approx: &'a GaussianRef,
    center: Vec<f64>,
    half_log_det_diff: f64,
}

impl<'a> ApproxRatioResidual<'a> {
    pub fn new(y: &'a [f64], prior: &'a GaussianRef, approx: &'a GaussianRef) -> Result<Self> {
        let n = prior.dim();
        if y.len() != n || approx.dim() != n {
            return Err(Error::Dimension { expected: n, got: y.len().max(approx.dim()) });
        }
        let mut center = prior.whiten(approx.mean());
        center.extend(core::iter::repeat_n(0.0, n));
        let half_log_det_diff = 0.5 * (prior.log_det() - approx.log_det());
        Ok(Self { y, prior, approx, center, half_log_det_diff })
    }
}

impl Residual for ApproxRatioResidual<'_> {
    fn reference(&self) -> &GaussianRef {
        self.approx
    }

    fn cache(&self, f: &[f64]) -> Vec<f64> {
        let mut c = self.prior.whiten(f);
        c.extend(self.approx.whiten(f));
        c
    }

    fn center_cache(&self) -> &[f64] {
        &self.center
    }

    fn cache_of_draw(&self, z: &[f64], xi: &[f64]) -> Vec<f64> {
        let mut c = self.prior.whiten(z);
        c.extend_from_slice(xi);
        c
    }

    fn log_residual(&self, f: &[f64], cache: &[f64]) -> f64 {
        let n = f.len();
        let (wk, wq) = cache.split_at(n);
        -0.5 * squared_norm(wk) + 0.5 * squared_norm(wq) - self.half_log_det_diff + log_likelihood(f, self.y)
    }
}

/// Residual given by an arbitrary function of `f`.
pub struct FnResidual<F> {
    reference: GaussianRef,
    func: F,
}

impl<F: Fn(&[f64]) -> f64> FnResidual<F> {
    pub fn new(reference: GaussianRef, func: F) -> Self {
        Self { reference, func }
    }
}

impl<F: Fn(&[f64]) -> f64> Residual for FnResidual<F> {
    fn reference(&self) -> &GaussianRef {
        &self.reference
    }

    fn log_residual(&self, f: &[f64], _cache: &[f64]) -> f64 {
        (self.func)(f)
    }
}
