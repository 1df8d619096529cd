//! Moment estimates from replicate answers and the eight interval types.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};

/// Bias, variance and MSE of replicate answers around a reference answer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub bias: f64,
    /// Sample variance with divisor `n - 1`.
    pub variance: f64,
    /// Mean squared deviation from the reference.
    pub mse: f64,
    /// Nearest-rank median minus the reference.
    pub median_bias: f64,
    pub sd: f64,
    pub n: usize,
}

/// `ceil(n p)`-th order statistic of sorted data (1-based, clamped to `1..=n`).
pub fn nearest_rank<T: Copy>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    let rank = libm::ceil(n as f64 * p - 1e-9).max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

pub fn moments(values: &[f64], reference: f64) -> Result<MomentEstimates> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientReplicates { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    let mse = values
        .iter()
        .map(|v| (v - reference) * (v - reference))
        .sum::<f64>()
        / nf;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(MomentEstimates {
        bias: mean - reference,
        variance,
        mse,
        median_bias: nearest_rank(&sorted, 0.5) - reference,
        sd: libm::sqrt(variance),
        n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CiType {
    Np,
    BcNp,
    Z,
    T,
    BcZ,
    BcT,
    Cz,
    Ct,
}

impl CiType {
    pub const ALL: [CiType; 8] = [
        CiType::Np,
        CiType::BcNp,
        CiType::Z,
        CiType::T,
        CiType::BcZ,
        CiType::BcT,
        CiType::Cz,
        CiType::Ct,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            CiType::Np => "np",
            CiType::BcNp => "BCnp",
            CiType::Z => "z",
            CiType::T => "t",
            CiType::BcZ => "BCz",
            CiType::BcT => "BCt",
            CiType::Cz => "cz",
            CiType::Ct => "ct",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::Data(format!("unknown interval type `{s}`")))
    }
}

impl fmt::Display for CiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for CiType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for CiType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CiType::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Reference distribution for Wald critical values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dist {
    Gauss,
    StudentT { df: f64 },
}

impl Dist {
    pub fn critical(&self, level: f64) -> Result<f64> {
        match self {
            Dist::Gauss => dist::critical_value(level, None),
            Dist::StudentT { df } => dist::critical_value(level, Some(*df)),
        }
    }
}

/// Spread used by Wald intervals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaldScale {
    #[default]
    Mse,
    Variance,
}

/// Integer endpoints, widened outward and truncated at zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: u64,
    pub upper: u64,
}

impl Bounds {
    pub fn from_raw(lower: f64, upper: f64) -> Self {
        Self {
            lower: libm::floor(lower).max(0.0) as u64,
            upper: libm::ceil(upper).max(0.0) as u64,
        }
    }

    pub fn contains(&self, v: u64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> u64 {
        self.upper - self.lower
    }
}

/// Real-valued Wald interval around `point`, before integer snapping.
pub fn wald_raw(
    point: f64,
    m: &MomentEstimates,
    crit: f64,
    bias_correct: bool,
    scale: WaldScale,
) -> (f64, f64) {
    let pivot = if bias_correct { point - m.bias } else { point };
    let spread = match scale {
        WaldScale::Mse => m.mse,
        WaldScale::Variance => m.variance,
    };
    let half = crit * libm::sqrt(spread);
    (pivot - half, pivot + half)
}

pub fn ci_wald(
    point: u64,
    m: &MomentEstimates,
    dist: Dist,
    level: f64,
    bias_correct: bool,
    scale: WaldScale,
) -> Result<Bounds> {
    let (lo, hi) = wald_raw(point as f64, m, dist.critical(level)?, bias_correct, scale);
    Ok(Bounds::from_raw(lo, hi))
}

/// Empirical `(1 - level) / 2` and `(1 + level) / 2` quantiles of the
/// replicate answers, optionally shifted by the median bias.
pub fn ci_quantile(
    values: &[f64],
    m: &MomentEstimates,
    level: f64,
    bias_correct: bool,
) -> Result<Bounds> {
    if values.len() < 2 {
        return Err(Error::InsufficientReplicates {
            needed: 2,
            got: values.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!(
            "confidence level {level} is not in (0, 1)"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let shift = if bias_correct { m.median_bias } else { 0.0 };
    Ok(Bounds::from_raw(
        nearest_rank(&sorted, alpha / 2.0) - shift,
        nearest_rank(&sorted, 1.0 - alpha / 2.0) - shift,
    ))
}

/// Whether the conditional interval applies the bias correction: the point
/// exceeds 5, |bias| / sd is at least 0.5, and the bias is negative or the
/// point is at least 25.
pub fn conditional_corrects(point: u64, m: &MomentEstimates) -> bool {
    point > 5 && m.sd > 0.0 && libm::fabs(m.bias) / m.sd >= 0.5 && (m.bias < 0.0 || point >= 25)
}

pub fn ci_conditional(
    point: u64,
    m: &MomentEstimates,
    dist: Dist,
    level: f64,
    scale: WaldScale,
) -> Result<Bounds> {
    ci_wald(point, m, dist, level, conditional_corrects(point, m), scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntervalParams {
    pub level: f64,
    /// Degrees of freedom of the t-based intervals.
    pub df: f64,
    pub scale: WaldScale,
}

impl Default for IntervalParams {
    fn default() -> Self {
        Self {
            level: 0.90,
            df: 5.0,
            scale: WaldScale::Mse,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiRecord {
    pub query_id: String,
    pub ci_type: CiType,
    pub level: f64,
    /// The published answer; bias-corrected pivots are not reported.
    pub point: u64,
    pub lower: u64,
    pub upper: u64,
    pub moments: MomentEstimates,
}

impl CiRecord {
    pub fn bounds(&self) -> Bounds {
        Bounds {
            lower: self.lower,
            upper: self.upper,
        }
    }
}

/// All eight intervals for one query from its replicate answers.
pub fn all_intervals(
    query_id: &str,
    point: u64,
    values: &[f64],
    params: &IntervalParams,
) -> Result<Vec<CiRecord>> {
    let m = moments(values, point as f64)?;
    let gauss = Dist::Gauss;
    let t = Dist::StudentT { df: params.df };
    let (level, scale) = (params.level, params.scale);
    let mut out = Vec::with_capacity(CiType::ALL.len());
    for ty in CiType::ALL {
        let b = match ty {
            CiType::Np => ci_quantile(values, &m, level, false)?,
            CiType::BcNp => ci_quantile(values, &m, level, true)?,
            CiType::Z => ci_wald(point, &m, gauss, level, false, scale)?,
            CiType::T => ci_wald(point, &m, t, level, false, scale)?,
            CiType::BcZ => ci_wald(point, &m, gauss, level, true, scale)?,
            CiType::BcT => ci_wald(point, &m, t, level, true, scale)?,
            CiType::Cz => ci_conditional(point, &m, gauss, level, scale)?,
            CiType::Ct => ci_conditional(point, &m, t, level, scale)?,
        };
        out.push(CiRecord {
            query_id: query_id.into(),
            ci_type: ty,
            level,
            point,
            lower: b.lower,
            upper: b.upper,
            moments: m,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn hand_moments() {
        let m = moments(&[5.0, 5.0, 5.0], 5.0).unwrap();
        assert!(close(m.bias, 0.0) && close(m.variance, 0.0) && close(m.mse, 0.0));
        let m = moments(&[4.0, 6.0], 5.0).unwrap();
        assert!(close(m.bias, 0.0) && close(m.variance, 2.0) && close(m.mse, 1.0));
        let m = moments(&[7.0, 7.0], 5.0).unwrap();
        assert!(close(m.bias, 2.0) && close(m.variance, 0.0) && close(m.mse, 4.0));
        assert!(matches!(
            moments(&[1.0], 0.0),
            Err(Error::InsufficientReplicates { .. })
        ));
    }

    #[test]
    fn wald_hand_example() {
        let m = MomentEstimates {
            bias: 0.0,
            variance: 4.0,
            mse: 4.0,
            median_bias: 0.0,
            sd: 2.0,
            n: 100,
        };
        let b = ci_wald(3, &m, Dist::Gauss, 0.90, false, WaldScale::Mse).unwrap();
        assert_eq!(b, Bounds { lower: 0, upper: 7 });
    }

    #[test]
    fn zero_mse_gives_point_interval() {
        let m = moments(&[8.0, 8.0], 8.0).unwrap();
        let b = ci_wald(8, &m, Dist::StudentT { df: 5.0 }, 0.9, true, WaldScale::Mse).unwrap();
        assert_eq!(b, Bounds { lower: 8, upper: 8 });
    }

    #[test]
    fn quantile_order_statistics() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let m = moments(&values, 50.0).unwrap();
        let b = ci_quantile(&values, &m, 0.9, false).unwrap();
        assert_eq!(
            b,
            Bounds {
                lower: 5,
                upper: 95
            }
        );
        let same = vec![4.0; 25];
        let m = moments(&same, 4.0).unwrap();
        assert_eq!(
            ci_quantile(&same, &m, 0.9, true).unwrap(),
            Bounds { lower: 4, upper: 4 }
        );
    }

    #[test]
    fn all_types_labelled_in_order() {
        let rs = all_intervals(
            "q",
            10,
            &[9.0, 11.0, 12.0, 10.0],
            &IntervalParams::default(),
        )
        .unwrap();
        let labels: Vec<&str> = rs.iter().map(|r| r.ci_type.label()).collect();
        assert_eq!(labels, ["np", "BCnp", "z", "t", "BCz", "BCt", "cz", "ct"]);
    }
}
