//! Discrete Gaussian moments by direct summation of the pmf.

#![allow(dead_code)]

use tdamc_core::noise::DiscreteGaussian;
use tdamc_core::rng::SeedStream;

/// Support is truncated at `|k| <= 60`, which loses less than 1e-30 of the
/// mass for the variances used here.
pub const TRUNCATION: i64 = 60;

/// Exact variance of the discrete Gaussian with parameter `sigma2`. The mean
/// is zero by symmetry.
pub fn exact_variance(sigma2: f64) -> f64 {
    let w = |k: i64| (-((k * k) as f64) / (2.0 * sigma2)).exp();
    let z: f64 = (-TRUNCATION..=TRUNCATION).map(w).sum();
    (-TRUNCATION..=TRUNCATION)
        .map(|k| (k * k) as f64 * w(k))
        .sum::<f64>()
        / z
}

pub struct SamplerCheck {
    pub sigma2: f64,
    pub draws: usize,
    pub mean: f64,
    pub variance: f64,
    pub exact_variance: f64,
}

impl SamplerCheck {
    pub fn run(sigma2: f64, draws: usize, seed: u64) -> Self {
        let g = DiscreteGaussian::new(sigma2).unwrap();
        let mut rng = SeedStream::new(seed).label("sampler-check").rng();
        let (mut s1, mut s2) = (0.0f64, 0.0f64);
        for _ in 0..draws {
            let x = g.sample(&mut rng) as f64;
            s1 += x;
            s2 += x * x;
        }
        let n = draws as f64;
        let mean = s1 / n;
        Self {
            sigma2,
            draws,
            mean,
            variance: (s2 - n * mean * mean) / (n - 1.0),
            exact_variance: exact_variance(sigma2),
        }
    }

    /// Within three standard errors of zero.
    pub fn mean_ok(&self) -> bool {
        self.mean.abs() <= 3.0 * (self.exact_variance / self.draws as f64).sqrt()
    }

    /// Within 2% of the exact variance.
    pub fn variance_ok(&self) -> bool {
        (self.variance / self.exact_variance - 1.0).abs() <= 0.02
    }
}
