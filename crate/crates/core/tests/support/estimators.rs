//! Shared checks for the moment estimators and the conditional rule.

#![allow(dead_code)]

use rand::Rng;

use tdamc_core::intervals::{moments, MomentEstimates};
use tdamc_core::rng::SeedStream;

/// Largest relative gap in `mse = variance (n - 1) / n + bias^2` over
/// `count` random replicate vectors.
pub fn identity_gap(count: usize, seed: u64) -> f64 {
    let stream = SeedStream::new(seed).label("moment-identity");
    let mut worst = 0.0f64;
    for i in 0..count {
        let mut rng = stream.index(i as u64).rng();
        let n = rng.random_range(2..=200);
        let scale = 10f64.powf(rng.random_range(-2.0..4.0));
        let values: Vec<f64> = (0..n)
            .map(|_| (rng.random::<f64>() * scale).round())
            .collect();
        let reference = (rng.random::<f64>() * scale).round();
        let m = moments(&values, reference).unwrap();
        let nf = n as f64;
        let rhs = m.variance * (nf - 1.0) / nf + m.bias * m.bias;
        let gap = (m.mse - rhs).abs() / m.mse.abs().max(f64::MIN_POSITIVE);
        if m.mse > 0.0 || rhs > 0.0 {
            worst = worst.max(gap);
        }
    }
    worst
}

/// `(point, bias, sd, corrected)` rows on both sides of every boundary of
/// the conditional rule: point 5/6, |bias|/sd 0.49/0.50, point 24/25, and
/// the sign of the bias.
pub const CONDITIONAL_TABLE: [(u64, f64, f64, bool); 12] = [
    (5, -3.0, 4.0, false),
    (6, -3.0, 4.0, true),
    (6, -1.96, 4.0, false),
    (6, -2.0, 4.0, true),
    (24, 2.0, 4.0, false),
    (25, 2.0, 4.0, true),
    (25, 1.96, 4.0, false),
    (24, -2.0, 4.0, true),
    (6, 3.0, 4.0, false),
    (30, 3.0, 4.0, true),
    (10, -3.0, 4.0, true),
    (4, -10.0, 1.0, false),
];

pub fn estimates(bias: f64, sd: f64) -> MomentEstimates {
    MomentEstimates {
        bias,
        variance: sd * sd,
        mse: sd * sd * 99.0 / 100.0 + bias * bias,
        median_bias: bias,
        sd,
        n: 100,
    }
}
