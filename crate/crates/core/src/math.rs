//! Scalar special functions used throughout the crate.
//!
//! Everything here goes through `libm` so the crate stays usable without `std`.

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

/// Below this argument `log_norm_cdf` switches to the asymptotic tail series.
const TAIL_SWITCH: f64 = -8.0;

/// Log density of the standard normal.
#[inline]
pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * LN_2PI
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)` without underflow in the lower tail.
///
/// For `x ≥ -8` the value comes from `erfc` (via `log1p` on the upper side so
/// `Φ(x) ≈ 1` keeps its digits). Below that the asymptotic expansion of the
/// Mills ratio is summed until its terms stop shrinking.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > 0.0 {
        return libm::log1p(-0.5 * libm::erfc(x * FRAC_1_SQRT_2));
    }
    if x >= TAIL_SWITCH {
        return libm::log(0.5 * libm::erfc(-x * FRAC_1_SQRT_2));
    }
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let inv_x2 = 1.0 / (x * x);
    let mut term = 1.0;
    let mut series = 1.0;
    let mut k = 1.0;
    loop {
        let next = -term * (2.0 * k - 1.0) * inv_x2;
        if libm::fabs(next) >= libm::fabs(term) || libm::fabs(next) < 1e-17 * libm::fabs(series) {
            break;
        }
        series += next;
        term = next;
        k += 1.0;
        if k > 200.0 {
            break;
        }
    }
    -0.5 * x * x - libm::log(-x) - 0.5 * LN_2PI + libm::log(series)
}

/// Inverse Mills ratio `φ(x)/Φ(x)`, stable in both tails.
#[inline]
pub fn inv_mills(x: f64) -> f64 {
    libm::exp(log_norm_pdf(x) - log_norm_cdf(x))
}

/// Log density of a Gamma(shape, rate) variate at `x > 0`.
pub fn gamma_log_density(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * libm::log(rate) - libm::lgamma(shape) + (shape - 1.0) * libm::log(x) - rate * x
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn sin_cos(x: f64) -> (f64, f64) {
    libm::sincos(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}
