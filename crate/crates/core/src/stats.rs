//! Summary statistics used by the studies and the tests.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, EstimatorContext};
use crate::kernel::Hyperparams;
use crate::math;
use crate::model::Dataset;

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard deviation with the `n − 1` divisor.
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    math::sqrt(ss / (v.len() - 1) as f64)
}

/// Median of the finite-or-infinite values; NaN for an empty slice.
pub fn median(v: &[f64]) -> f64 {
    quantile(v, 0.5)
}

/// Linear-interpolation quantile (type 7).
pub fn quantile(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h as usize;
    let hi = (lo + 1).min(s.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        s[lo]
    } else {
        s[lo] + frac * (s[hi] - s[lo])
    }
}

/// Monte Carlo standard error of the mean of a correlated series by
/// non-overlapping batch means.
pub fn batch_means_se(v: &[f64], n_batches: usize) -> f64 {
    let b = n_batches.max(2).min(v.len());
    let len = v.len() / b;
    if len == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..b).map(|i| mean(&v[i * len..(i + 1) * len])).collect();
    sample_sd(&means) / math::sqrt(b as f64)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max(math::abs(i as f64 / na - j as f64 / nb));
    }
    d
}

/// Large-sample critical value of the two-sample statistic at level `alpha`:
/// `√(−ln(α/2)/2) · √((n+m)/(nm))`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = math::sqrt(-math::ln(alpha / 2.0) / 2.0);
    let (n, m) = (n as f64, m as f64);
    c * math::sqrt((n + m) / (n * m))
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_one_sample(v: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (i, x)| {
        let c = cdf(*x);
        d.max(c - i as f64 / n).max((i + 1) as f64 / n - c)
    })
}

/// Asymptotic p-value of a one-sample KS statistic, with the usual
/// small-sample correction of the argument.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = math::sqrt(n as f64);
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = math::exp(-2.0 * kf * kf * lambda * lambda);
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Standard deviation of `log₁₀` estimates given as natural logs; `+∞` when
/// any estimate is zero.
pub fn r_from_log_estimates(log_estimates: &[f64]) -> Result<f64> {
    if log_estimates.len() < 2 {
        return Err(Error::argument("r needs at least two repetitions"));
    }
    if log_estimates.contains(&f64::NEG_INFINITY) {
        return Ok(f64::INFINITY);
    }
    let l10: Vec<f64> = log_estimates.iter().map(|v| v / core::f64::consts::LN_10).collect();
    Ok(sample_sd(&l10))
}

/// `r` at one θ from `reps` independent estimator calls. The Gram matrix and
/// the Laplace approximation are computed once.
pub fn r_statistic<R: Rng + ?Sized>(
    data: &Dataset,
    theta: &Hyperparams,
    config: &EstimatorConfig,
    reps: usize,
    rng: &mut R,
) -> Result<f64> {
    if reps < 2 {
        return Err(Error::argument("r needs at least two repetitions"));
    }
    let ctx = EstimatorContext::for_method(data, theta, config.method)?;
    let logs =
        (0..reps).map(|_| ctx.estimate(data.y(), config, rng).map(|e| e.log_value)).collect::<Result<Vec<_>>>()?;
    r_from_log_estimates(&logs)
}
