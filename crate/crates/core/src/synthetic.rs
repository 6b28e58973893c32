//! Synthetic classification data drawn from the model itself.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{gram, Hyperparams};
use crate::linalg::Matrix;
use crate::math;
use crate::model::Dataset;
use crate::rng::stream;

pub const DEFAULT_SIGMA: f64 = 20.0;
pub const DEFAULT_TAU: f64 = 0.255;
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub data: Dataset,
    /// Latent values behind the labels.
    pub f: Vec<f64>,
    /// Latent draws discarded for class imbalance.
    pub redraws: usize,
}

/// Largest tolerated `|#positives − n/2|`.
pub fn balance_tolerance(n: usize) -> f64 {
    (0.05 * n as f64).max(1.0)
}

/// Inputs uniform on the unit square, latents from the GP prior with an
/// isotropic RBF kernel, labels with probability `Φ(f)`. Latents and labels are
/// redrawn until the classes are balanced within [`balance_tolerance`].
pub fn gen_synthetic(n: usize, sigma: f64, tau: f64, seed: u64) -> Result<SyntheticData> {
    if n < 2 {
        return Err(Error::argument("synthetic data needs n ≥ 2"));
    }
    let theta = Hyperparams::isotropic(sigma, tau)?;
    let mut rng = stream(seed, &[0x5359_4e54]);
    let x = Matrix::from_fn(n, 2, |_, _| rng.random::<f64>());
    let g = gram(&x, &theta)?;
    let tol = balance_tolerance(n);
    for redraws in 0..MAX_REDRAWS {
        let (f, _) = g.prior().sample(&mut rng);
        let y: Vec<f64> =
            f.iter().map(|fi| if rng.random::<f64>() < math::norm_cdf(*fi) { 1.0 } else { -1.0 }).collect();
        let pos = y.iter().filter(|v| **v > 0.0).count() as f64;
        if math::abs(pos - n as f64 / 2.0) <= tol {
            return Ok(SyntheticData { data: Dataset::new(x, y)?, f, redraws });
        }
    }
    Err(Error::numerical(format!("no balanced draw after {MAX_REDRAWS} attempts")))
}
