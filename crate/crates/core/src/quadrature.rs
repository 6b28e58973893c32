//! Tensor-product Gauss–Hermite quadrature for very small latent spaces.
//!
//! Integrals against a Gaussian `N(m, LLᵀ)` are computed in whitened
//! coordinates `f = m + Lξ`. With at most three latents this gives the
//! marginal likelihood and posterior moments to near machine precision, which
//! the tests use as ground truth.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{gram, GramMatrix, Hyperparams};
use crate::laplace::GaussianRef;
use crate::linalg::Matrix;
use crate::math;
use crate::model::Dataset;
use crate::pm_mcmc::LogMarginal;

pub const MAX_DIM: usize = 3;
pub const DEFAULT_NODES: usize = 200;
const MAX_NODES: usize = 800;
const CONVERGENCE: f64 = 1e-10;
/// Nodes whose weight is below this fraction of the largest are dropped.
const PRUNE: f64 = 1e-22;

/// Rule for `∫ g(x) φ(x) dx` with φ the standard normal density.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// `n`-point rule, with negligible nodes dropped.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::argument("quadrature needs at least one node"));
        }
        let (t, w) = hermite_physicists(n)?;
        let wmax = w.iter().cloned().fold(0.0, f64::max);
        let scale = 1.0 / math::sqrt(core::f64::consts::PI);
        let (nodes, weights) = t
            .iter()
            .zip(&w)
            .filter(|(_, wi)| **wi > PRUNE * wmax)
            .map(|(ti, wi)| (core::f64::consts::SQRT_2 * ti, wi * scale))
            .unzip();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Orthonormal Hermite values `(h_n(z), h_{n−1}(z))`, both times `e^{−z²/4}`
/// so that large orders neither overflow nor underflow.
fn hermite_scaled(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = math::exp(-0.25 * math::ln(core::f64::consts::PI) - 0.25 * z * z);
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * math::sqrt(2.0 / jf) * p2 - math::sqrt((jf - 1.0) / jf) * p3;
    }
    (p1, p2)
}

/// Root of `h_n` in `[lo, hi]` by Newton steps kept inside the bracket.
fn bracketed_root(n: usize, mut lo: f64, mut hi: f64) -> f64 {
    let sign_lo = hermite_scaled(n, lo).0 > 0.0;
    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (p, q) = hermite_scaled(n, z);
        if p == 0.0 {
            return z;
        }
        if (p > 0.0) == sign_lo {
            lo = z;
        } else {
            hi = z;
        }
        let newton = z - p / (math::sqrt(2.0 * n as f64) * q);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if math::abs(next - z) <= 1e-15 * (1.0 + math::abs(z)) {
            return next;
        }
        z = next;
    }
    z
}

/// Nodes and weights for the weight `e^{−t²}`. Roots are bracketed by a sign
/// scan of the orthonormal recurrence, then polished by safeguarded Newton.
fn hermite_physicists(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let half = n / 2;
    let zmax = math::sqrt(2.0 * n as f64 + 1.0);
    let steps = 40 * n.max(4);
    let h = zmax / steps as f64;
    let mut roots = Vec::with_capacity(n);
    let mut prev_z = 0.5 * h;
    let mut prev_p = hermite_scaled(n, prev_z).0;
    for k in 1..=steps {
        let z = (k as f64 + 0.5) * h;
        let p = hermite_scaled(n, z).0;
        if (p > 0.0) != (prev_p > 0.0) {
            roots.push(bracketed_root(n, prev_z, z));
        }
        prev_z = z;
        prev_p = p;
    }
    if roots.len() != half {
        return Err(Error::numerical("Gauss–Hermite root scan missed roots"));
    }
    let mut x = Vec::with_capacity(n);
    x.extend(roots.iter().rev().map(|r| -r));
    if n % 2 == 1 {
        x.push(0.0);
    }
    x.extend(roots.iter());
    let w = x
        .iter()
        .map(|z| {
            let pp = math::sqrt(2.0 * n as f64) * hermite_scaled(n, *z).1;
            // pp carries e^{−z²/4}, hence e^{−z²/2} after squaring
            2.0 * math::exp(-0.5 * z * z) / (pp * pp)
        })
        .collect();
    Ok((x, w))
}

/// `E[h(f)]` for `f ~ reference`, by the tensor rule.
pub fn expectation(reference: &GaussianRef, rule: &GaussHermite, mut h: impl FnMut(&[f64]) -> f64) -> Result<f64> {
    let n = reference.dim();
    if n > MAX_DIM {
        return Err(Error::argument("quadrature is limited to three latent dimensions"));
    }
    let l = reference.chol().lower();
    let m = reference.mean();
    let k = rule.len();
    let mut idx = vec![0usize; n];
    let mut f = vec![0.0; n];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for r in 0..n {
            w *= rule.weights[idx[r]];
            let mut v = m[r];
            for c in 0..=r {
                v += l[(r, c)] * rule.nodes[idx[c]];
            }
            f[r] = v;
        }
        total += w * h(&f);
        let mut r = n;
        loop {
            if r == 0 {
                return Ok(total);
            }
            r -= 1;
            idx[r] += 1;
            if idx[r] < k {
                break;
            }
            idx[r] = 0;
        }
    }
}

fn likelihood(f: &[f64], y: &[f64]) -> f64 {
    f.iter().zip(y).map(|(fi, yi)| math::norm_cdf(yi * fi)).product()
}

/// `p(y|θ)` with a fixed rule.
pub fn marginal_with_rule(y: &[f64], g: &GramMatrix, rule: &GaussHermite) -> Result<f64> {
    if y.len() != g.n() {
        return Err(Error::Dimension { expected: g.n(), got: y.len() });
    }
    expectation(g.prior(), rule, |f| likelihood(f, y))
}

/// Converged quadrature value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureValue {
    pub value: f64,
    pub nodes: usize,
    /// Relative change at the last doubling.
    pub change: f64,
}

/// `∫ p(y|f) N(f|0,K) df` for `n ≤ 3`, doubling the rule from 200 nodes until
/// the relative change drops below `1e−10`.
pub fn quadrature_marginal(y: &[f64], g: &GramMatrix) -> Result<QuadratureValue> {
    adaptive(|rule| marginal_with_rule(y, g, rule))
}

fn adaptive(mut eval: impl FnMut(&GaussHermite) -> Result<f64>) -> Result<QuadratureValue> {
    let mut nodes = DEFAULT_NODES;
    let mut prev = eval(&GaussHermite::new(nodes)?)?;
    while nodes < MAX_NODES {
        nodes *= 2;
        let value = eval(&GaussHermite::new(nodes)?)?;
        let change = math::abs(value - prev) / math::abs(value).max(f64::MIN_POSITIVE);
        if change < CONVERGENCE {
            return Ok(QuadratureValue { value, nodes, change });
        }
        prev = value;
    }
    Err(Error::numerical("quadrature did not converge"))
}

/// Normalizer, mean and covariance of `p(f|θ,y)`.
#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    pub marginal: f64,
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

/// Posterior moments under a fixed rule.
pub fn posterior_moments(y: &[f64], g: &GramMatrix, rule: &GaussHermite) -> Result<PosteriorMoments> {
    let n = g.n();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    let z = marginal_with_rule(y, g, rule)?;
    let mut mean = vec![0.0; n];
    for (r, m) in mean.iter_mut().enumerate() {
        *m = expectation(g.prior(), rule, |f| f[r] * likelihood(f, y))? / z;
    }
    let mut cov = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..=r {
            let s = expectation(g.prior(), rule, |f| f[r] * f[c] * likelihood(f, y))? / z;
            let v = s - mean[r] * mean[c];
            cov[(r, c)] = v;
            cov[(c, r)] = v;
        }
    }
    Ok(PosteriorMoments { marginal: z, mean, cov })
}

/// Exact (deterministic) marginal for `n ≤ 3`, usable inside an MH chain.
#[derive(Debug, Clone)]
pub struct QuadratureMarginal {
    rule: GaussHermite,
}

impl QuadratureMarginal {
    pub fn new(nodes: usize) -> Result<Self> {
        Ok(Self { rule: GaussHermite::new(nodes)? })
    }
}

impl LogMarginal for QuadratureMarginal {
    fn log_marginal<R: Rng + ?Sized>(&self, data: &Dataset, theta: &Hyperparams, _rng: &mut R) -> Result<f64> {
        if data.n() > MAX_DIM {
            return Err(Error::argument("quadrature is limited to three latent dimensions"));
        }
        let g = gram(data.x(), theta)?;
        Ok(math::ln(marginal_with_rule(data.y(), &g, &self.rule)?))
    }

    fn label(&self) -> &'static str {
        "quadrature"
    }
}
