//! Privacy-loss budget allocation and discrete Gaussian noisy measurements.
//!
//! Accounting is zCDP-style: a query group that receives `rho` has i.i.d.
//! discrete Gaussian noise with variance parameter `1 / (2 rho)` on every
//! coordinate.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GeoHierarchy, Histogram, Schema};
use crate::rng::SeedStream;

const SHARE_TOLERANCE: f64 = 1e-12;
/// Largest denominator used when representing a variance as a rational.
const MAX_DENOMINATOR: u64 = 1 << 20;
const MAX_SIGMA2: f64 = 1e12;

/// Best rational approximation `num / den` of `x >= 0` with `den <= max_den`.
fn rational_approx(x: f64, max_den: u64) -> (u64, u64) {
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut v = x;
    loop {
        let r = libm::round(v);
        let a = if libm::fabs(v - r) <= 1e-9 * libm::fmax(1.0, v) {
            r
        } else {
            libm::floor(v)
        };
        let a_u = a as u64;
        let q2 = a_u.saturating_mul(q1).saturating_add(q0);
        if q2 > max_den {
            // Best semiconvergent against the last convergent.
            let k = (max_den - q0) / q1;
            let (ps, qs) = (k * p1 + p0, k * q1 + q0);
            let err_s = libm::fabs(x - ps as f64 / qs as f64);
            let err_c = libm::fabs(x - p1 as f64 / q1 as f64);
            return if err_s < err_c { (ps, qs) } else { (p1, q1) };
        }
        let p2 = a_u * p1 + p0;
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        let frac = v - a;
        if libm::fabs(frac) <= 1e-9 * libm::fmax(1.0, v)
            || libm::fabs(x - p1 as f64 / q1 as f64) <= 1e-15 * x
        {
            return (p1, q1);
        }
        v = 1.0 / frac;
    }
}

fn isqrt(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = libm::sqrt(n as f64) as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

fn next_u128<R: RngCore + ?Sized>(rng: &mut R) -> u128 {
    (u128::from(rng.next_u64()) << 64) | u128::from(rng.next_u64())
}

/// Uniform on `[0, n)`, exact by rejection.
fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, n: u128) -> u128 {
    debug_assert!(n > 0);
    if n <= u128::from(u64::MAX) {
        let n64 = n as u64;
        // 2^64 mod n
        let reject = n64.wrapping_neg() % n64;
        loop {
            let v = rng.next_u64();
            if v >= reject {
                return u128::from(v % n64);
            }
        }
    }
    let reject = n.wrapping_neg() % n;
    loop {
        let v = next_u128(rng);
        if v >= reject {
            return v % n;
        }
    }
}

fn bernoulli_frac<R: RngCore + ?Sized>(rng: &mut R, num: u128, den: u128) -> bool {
    uniform_below(rng, den) < num
}

/// Bernoulli(exp(-num/den)) for `num <= den`.
fn bernoulli_exp_le1<R: RngCore + ?Sized>(rng: &mut R, num: u128, den: u128) -> bool {
    let mut k: u128 = 1;
    loop {
        let Some(d) = den.checked_mul(k) else {
            return k % 2 == 1;
        };
        if bernoulli_frac(rng, num, d) {
            k += 1;
        } else {
            return k % 2 == 1;
        }
    }
}

/// Bernoulli(exp(-num/den)).
fn bernoulli_exp<R: RngCore + ?Sized>(rng: &mut R, mut num: u128, den: u128) -> bool {
    while num > den {
        if !bernoulli_exp_le1(rng, 1, 1) {
            return false;
        }
        num -= den;
    }
    bernoulli_exp_le1(rng, num, den)
}

/// Discrete Laplace with integer scale `t`: P(x) proportional to exp(-|x|/t).
fn discrete_laplace<R: RngCore + ?Sized>(rng: &mut R, t: u128) -> i128 {
    loop {
        let u = uniform_below(rng, t);
        if !bernoulli_exp(rng, u, t) {
            continue;
        }
        let mut v: u128 = 0;
        while bernoulli_exp(rng, 1, 1) {
            v += 1;
        }
        let x = u + t * v;
        let negative = rng.next_u32() & 1 == 1;
        if negative && x == 0 {
            continue;
        }
        return if negative { -(x as i128) } else { x as i128 };
    }
}

/// Exact sampler for the discrete Gaussian on the integers,
/// P(k) proportional to exp(-k^2 / (2 sigma2)).
///
/// The variance parameter is held as a rational `num / den`; `f64` inputs are
/// converted to the closest rational with denominator at most 2^20. Sampling
/// uses rejection from a discrete Laplace with integer arithmetic only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscreteGaussian {
    num: u128,
    den: u128,
    t: u128,
}

impl DiscreteGaussian {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Parameter(format!(
                "discrete Gaussian variance must be positive and finite, got {sigma2}"
            )));
        }
        if sigma2 > MAX_SIGMA2 {
            return Err(Error::Parameter(format!(
                "variance {sigma2} exceeds {MAX_SIGMA2}"
            )));
        }
        let (num, den) = rational_approx(sigma2, MAX_DENOMINATOR);
        Ok(Self::from_ratio(u128::from(num), u128::from(den.max(1))))
    }

    /// Variance parameter given exactly as `num / den`.
    pub fn from_ratio(num: u128, den: u128) -> Self {
        let t = isqrt(num / den) + 1;
        Self { num, den, t }
    }

    /// The variance parameter actually used.
    pub fn sigma2(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> i64 {
        if self.num == 0 {
            return 0;
        }
        let (n, d, t) = (self.num, self.den, self.t);
        let Some(den) = d
            .checked_mul(n)
            .and_then(|x| x.checked_mul(2))
            .and_then(|x| x.checked_mul(t))
            .and_then(|x| x.checked_mul(t))
        else {
            unreachable!("variance bounds keep the acceptance denominator in range");
        };
        loop {
            let y = discrete_laplace(rng, t);
            let a = y.unsigned_abs();
            // exponent = (|y| - sigma2 / t)^2 / (2 sigma2) = (|y| d t - n)^2 / (2 n d t^2)
            let Some(adt) = a.checked_mul(d).and_then(|x| x.checked_mul(t)) else {
                continue;
            };
            let diff = adt.abs_diff(n);
            let Some(num) = diff.checked_mul(diff) else {
                continue;
            };
            if bernoulli_exp(rng, num, den) {
                return y as i64;
            }
        }
    }
}

/// One draw from the discrete Gaussian with variance parameter `sigma2`.
pub fn sample_discrete_gaussian<R: RngCore + ?Sized>(sigma2: f64, rng: &mut R) -> Result<i64> {
    Ok(DiscreteGaussian::new(sigma2)?.sample(rng))
}

/// A measured marginal. An empty `marginal` is the total; all attributes is
/// the detailed query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryGroup {
    pub name: String,
    pub marginal: Vec<String>,
}

impl QueryGroup {
    pub fn new(name: &str, marginal: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            marginal: marginal.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn detailed(schema: &Schema) -> Self {
        Self {
            name: "detailed".into(),
            marginal: schema.attributes().iter().map(|a| a.name.clone()).collect(),
        }
    }

    pub fn total() -> Self {
        Self::new("total", &[])
    }

    fn resolve(&self, schema: &Schema) -> Result<Vec<usize>> {
        let mut attrs = Vec::with_capacity(self.marginal.len());
        for name in &self.marginal {
            let i = schema.attribute_index(name).ok_or_else(|| {
                Error::Schema(format!(
                    "query group `{}` uses unknown attribute `{name}`",
                    self.name
                ))
            })?;
            if attrs.contains(&i) {
                return Err(Error::Schema(format!(
                    "query group `{}` repeats attribute `{name}`",
                    self.name
                )));
            }
            attrs.push(i);
        }
        Ok(attrs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupShare {
    #[serde(flatten)]
    pub group: QueryGroup,
    pub share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelShare {
    pub level: String,
    pub share: f64,
    pub groups: Vec<GroupShare>,
}

/// Split of the total budget over geolevels and, within each level, over
/// the query groups measured there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetAllocation {
    pub total_rho: f64,
    pub levels: Vec<LevelShare>,
}

impl BudgetAllocation {
    /// Same level shares for every level and a uniform split over `groups`
    /// within each level.
    pub fn uniform(total_rho: f64, levels: &[String], groups: &[QueryGroup]) -> Self {
        let shares: Vec<f64> = levels.iter().map(|_| 1.0 / levels.len() as f64).collect();
        Self::with_level_shares(total_rho, levels, &shares, groups)
    }

    pub fn with_level_shares(
        total_rho: f64,
        levels: &[String],
        level_shares: &[f64],
        groups: &[QueryGroup],
    ) -> Self {
        let g = groups.len().max(1) as f64;
        Self {
            total_rho,
            levels: levels
                .iter()
                .zip(level_shares)
                .map(|(level, &share)| LevelShare {
                    level: level.clone(),
                    share,
                    groups: groups
                        .iter()
                        .map(|group| GroupShare {
                            group: group.clone(),
                            share: 1.0 / g,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Budget of one (level, group) pair.
    pub fn rho(&self, level: &str, group: &str) -> Option<f64> {
        let l = self.levels.iter().find(|l| l.level == level)?;
        let g = l.groups.iter().find(|g| g.group.name == group)?;
        Some(self.total_rho * l.share * g.share)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_rho > 0.0) || !self.total_rho.is_finite() {
            return Err(Error::Config(format!(
                "total_rho must be positive and finite, got {}",
                self.total_rho
            )));
        }
        check_shares("level shares", self.levels.iter().map(|l| l.share))?;
        for l in &self.levels {
            check_shares(
                &format!("group shares at level `{}`", l.level),
                l.groups.iter().map(|g| g.share),
            )?;
        }
        Ok(())
    }
}

fn check_shares(what: &str, shares: impl Iterator<Item = f64>) -> Result<()> {
    let mut sum = 0.0;
    for s in shares {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::Config(format!(
                "{what}: share {s} is not a non-negative number"
            )));
        }
        sum += s;
    }
    if libm::fabs(sum - 1.0) > SHARE_TOLERANCE {
        return Err(Error::Config(format!("{what} sum to {sum}, expected 1")));
    }
    Ok(())
}

/// A query group resolved against a schema, with its noise scale.
#[derive(Clone, Debug)]
pub struct PlannedGroup {
    pub name: String,
    pub attrs: Vec<usize>,
    /// Detailed cell to marginal cell.
    pub cell_map: Vec<usize>,
    pub size: usize,
    pub rho: f64,
    pub variance: f64,
    sampler: DiscreteGaussian,
}

impl PlannedGroup {
    /// Marginal of a detailed cell vector.
    pub fn project(&self, cells: &[u64]) -> Vec<u64> {
        let mut out = alloc::vec![0u64; self.size];
        for (c, &n) in cells.iter().enumerate() {
            out[self.cell_map[c]] += n;
        }
        out
    }
}

/// A validated allocation bound to a schema and hierarchy: the groups to
/// measure at every level. Groups with zero budget are not measured.
#[derive(Clone, Debug)]
pub struct MeasurementPlan {
    levels: Vec<Vec<PlannedGroup>>,
}

impl MeasurementPlan {
    pub fn new(
        alloc: &BudgetAllocation,
        schema: &Schema,
        hierarchy: &GeoHierarchy,
    ) -> Result<Self> {
        alloc.validate()?;
        let names = hierarchy.levels();
        if alloc.levels.len() != names.len()
            || alloc.levels.iter().zip(names).any(|(l, n)| &l.level != n)
        {
            return Err(Error::Config(format!(
                "allocation levels {:?} do not match hierarchy levels {:?}",
                alloc
                    .levels
                    .iter()
                    .map(|l| l.level.as_str())
                    .collect::<Vec<_>>(),
                names
            )));
        }
        let mut levels = Vec::with_capacity(names.len());
        for l in &alloc.levels {
            let mut planned = Vec::new();
            for g in &l.groups {
                let attrs = g.group.resolve(schema)?;
                if planned
                    .iter()
                    .any(|p: &PlannedGroup| p.name == g.group.name)
                {
                    return Err(Error::Config(format!(
                        "duplicate query group `{}` at level `{}`",
                        g.group.name, l.level
                    )));
                }
                let rho = alloc.total_rho * l.share * g.share;
                if rho <= 0.0 {
                    continue;
                }
                let variance = 1.0 / (2.0 * rho);
                let sampler = DiscreteGaussian::new(variance)?;
                planned.push(PlannedGroup {
                    name: g.group.name.clone(),
                    size: schema.marginal_size(&attrs),
                    cell_map: schema.marginal_map(&attrs),
                    attrs,
                    rho,
                    variance,
                    sampler,
                });
            }
            levels.push(planned);
        }
        let n_attrs = schema.attributes().len();
        let detailed_at_blocks = levels
            .last()
            .map(|gs| gs.iter().any(|g| g.attrs.len() == n_attrs))
            .unwrap_or(false);
        if !detailed_at_blocks {
            return Err(Error::Config(
                "the block level must measure the detailed query with positive budget".into(),
            ));
        }
        Ok(Self { levels })
    }

    pub fn groups(&self, level: usize) -> &[PlannedGroup] {
        &self.levels[level]
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Draws every measurement of `h`: for each level, each unit at that level
    /// in canonical order, and each group measured there. Each (unit, group)
    /// pair uses its own substream of `stream`.
    pub fn measure(&self, h: &Histogram, stream: &SeedStream) -> Result<Vec<NoisyMeasurement>> {
        let hier = h.hierarchy();
        if self.levels.len() != hier.depth() {
            return Err(Error::Config(
                "plan depth does not match the histogram".into(),
            ));
        }
        let k = h.schema().cell_count();
        if let Some(g) = self.levels.iter().flatten().find(|g| g.cell_map.len() != k) {
            return Err(Error::Schema(format!(
                "query group `{}` was planned for a different schema",
                g.name
            )));
        }
        let aggregates = h.aggregate_all();
        let mut out = Vec::new();
        for (level, groups) in self.levels.iter().enumerate() {
            for &u in hier.units_at(level) {
                let unit = hier.unit(u);
                let unit_stream = stream.label(&unit.id);
                for (gi, g) in groups.iter().enumerate() {
                    let mut rng = unit_stream.label(&g.name).rng();
                    let answers = g
                        .project(&aggregates[u])
                        .into_iter()
                        .map(|v| (v as i64 + g.sampler.sample(&mut rng)) as f64)
                        .collect();
                    out.push(NoisyMeasurement {
                        unit: unit.id.clone(),
                        unit_index: u,
                        level,
                        group: g.name.clone(),
                        group_index: gi,
                        answers,
                        variance: g.variance,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Noisy answer to one query group at one geographic unit.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyMeasurement {
    pub unit: String,
    pub unit_index: usize,
    pub level: usize,
    pub group: String,
    /// Position of the group in [`MeasurementPlan::groups`] for `level`.
    pub group_index: usize,
    pub answers: Vec<f64>,
    /// Per-coordinate noise variance, `1 / (2 rho)`.
    pub variance: f64,
}

/// Noisy measurements of `h` under `alloc`, drawn from `stream`.
pub fn take_measurements(
    h: &Histogram,
    alloc: &BudgetAllocation,
    stream: &SeedStream,
) -> Result<Vec<NoisyMeasurement>> {
    MeasurementPlan::new(alloc, h.schema(), h.hierarchy())?.measure(h, stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GeoHierarchy, Universe};
    use alloc::sync::Arc;
    use alloc::vec;

    fn rng(seed: u64) -> crate::rng::StreamRng {
        SeedStream::new(seed).rng()
    }

    #[test]
    fn rational_approximation() {
        assert_eq!(rational_approx(4.0, MAX_DENOMINATOR), (4, 1));
        assert_eq!(rational_approx(0.25, MAX_DENOMINATOR), (1, 4));
        assert_eq!(rational_approx(1e-6, MAX_DENOMINATOR), (1, 1_000_000));
        assert_eq!(rational_approx(1e-9, MAX_DENOMINATOR).0, 0);
        let (n, d) = rational_approx(1.0 / 0.3, MAX_DENOMINATOR);
        assert_eq!((n, d), (10, 3));
        let (n, d) = rational_approx(core::f64::consts::PI, MAX_DENOMINATOR);
        assert!(d <= MAX_DENOMINATOR);
        assert!((n as f64 / d as f64 - core::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_positive_variance() {
        assert!(matches!(
            DiscreteGaussian::new(0.0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            DiscreteGaussian::new(-1.0),
            Err(Error::Parameter(_))
        ));
        assert!(DiscreteGaussian::new(f64::NAN).is_err());
    }

    #[test]
    fn tiny_variance_concentrates_at_zero() {
        let dg = DiscreteGaussian::new(1e-6).unwrap();
        let mut r = rng(1);
        let zeros = (0..100_000).filter(|_| dg.sample(&mut r) == 0).count();
        assert!(zeros as f64 / 100_000.0 > 0.999);
    }

    #[test]
    fn laplace_is_symmetric() {
        let mut r = rng(3);
        let n = 200_000;
        let sum: i128 = (0..n).map(|_| discrete_laplace(&mut r, 3)).sum();
        assert!((sum as f64 / n as f64).abs() < 0.05);
    }

    #[test]
    fn bernoulli_exp_matches_probability() {
        let mut r = rng(4);
        let n = 200_000;
        for (num, den) in [(1u128, 2u128), (3, 2), (5, 1)] {
            let hits = (0..n).filter(|_| bernoulli_exp(&mut r, num, den)).count();
            let p = libm::exp(-(num as f64) / den as f64);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hits as f64 / n as f64 - p).abs() < 5.0 * se, "{num}/{den}");
        }
    }

    fn tiny_setup() -> (Histogram, Vec<String>) {
        let schema = Arc::new(Schema::from_pairs(Universe::Person, &[("a", 2), ("b", 2)]).unwrap());
        let levels: Vec<String> = ["root", "block"].iter().map(|s| s.to_string()).collect();
        let hier = Arc::new(GeoHierarchy::from_fanouts(levels.clone(), &[1]).unwrap());
        let h = Histogram::from_block_vectors(schema, hier, &[vec![3, 0, 7, 1]]).unwrap();
        (h, levels)
    }

    #[test]
    fn zero_noise_limit_is_exact() {
        let (h, levels) = tiny_setup();
        let groups = [
            QueryGroup::detailed(h.schema()),
            QueryGroup::new("a", &["a"]),
        ];
        // 1 / (2 rho) = 1e-9
        let alloc = BudgetAllocation::uniform(2.0 * 5e8, &levels, &groups);
        let ms = take_measurements(&h, &alloc, &SeedStream::new(1)).unwrap();
        assert_eq!(ms.len(), 4);
        for m in &ms {
            let truth: Vec<f64> = if m.group == "detailed" {
                vec![3.0, 0.0, 7.0, 1.0]
            } else {
                vec![3.0, 8.0]
            };
            assert_eq!(m.answers, truth);
        }
    }

    #[test]
    fn noise_is_integral_and_variance_recorded() {
        let (h, levels) = tiny_setup();
        let groups = [QueryGroup::detailed(h.schema())];
        // rho per (level, group) = 0.5 -> variance 1
        let alloc = BudgetAllocation::uniform(1.0, &levels, &groups);
        let ms = take_measurements(&h, &alloc, &SeedStream::new(9)).unwrap();
        for m in &ms {
            assert_eq!(m.variance, 1.0);
            let rho = alloc.rho(&levels[m.level], &m.group).unwrap();
            assert_eq!(m.variance, 1.0 / (2.0 * rho));
            for (a, t) in m.answers.iter().zip([3.0, 0.0, 7.0, 1.0]) {
                assert_eq!((a - t).fract(), 0.0);
            }
        }
    }

    #[test]
    fn measurement_is_deterministic() {
        let (h, levels) = tiny_setup();
        let alloc = BudgetAllocation::uniform(0.5, &levels, &[QueryGroup::detailed(h.schema())]);
        let a = take_measurements(&h, &alloc, &SeedStream::new(5)).unwrap();
        let b = take_measurements(&h, &alloc, &SeedStream::new(5)).unwrap();
        assert_eq!(a, b);
        let c = take_measurements(&h, &alloc, &SeedStream::new(6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unknown_marginal_attribute_is_schema_error() {
        let (h, levels) = tiny_setup();
        let groups = [
            QueryGroup::detailed(h.schema()),
            QueryGroup::new("bad", &["zz"]),
        ];
        let alloc = BudgetAllocation::uniform(1.0, &levels, &groups);
        assert!(matches!(
            take_measurements(&h, &alloc, &SeedStream::new(1)),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn shares_must_sum_to_one() {
        let (h, levels) = tiny_setup();
        let groups = [QueryGroup::detailed(h.schema())];
        let alloc = BudgetAllocation::with_level_shares(1.0, &levels, &[0.5, 0.6], &groups);
        assert!(matches!(alloc.validate(), Err(Error::Config(_))));
        let alloc = BudgetAllocation::with_level_shares(1.0, &levels, &[1.2, -0.2], &groups);
        assert!(alloc.validate().is_err());
    }

    #[test]
    fn block_level_needs_detailed_group() {
        let (h, levels) = tiny_setup();
        let alloc = BudgetAllocation::uniform(1.0, &levels, &[QueryGroup::total()]);
        assert!(matches!(
            MeasurementPlan::new(&alloc, h.schema(), h.hierarchy()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn level_variances_follow_shares() {
        let schema = Schema::from_pairs(Universe::Person, &[("a", 2)]).unwrap();
        let levels: Vec<String> = ["root", "state", "county", "block"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let hier = GeoHierarchy::from_fanouts(levels.clone(), &[2, 2, 2]).unwrap();
        let rest = (1.0 - 0.0254 - 0.0403) / 2.0;
        let shares = [0.0254, rest, rest, 0.0403];
        let alloc = BudgetAllocation::with_level_shares(
            1.0,
            &levels,
            &shares,
            &[QueryGroup::detailed(&schema)],
        );
        let plan = MeasurementPlan::new(&alloc, &schema, &hier).unwrap();
        let var: Vec<f64> = (0..4).map(|l| plan.groups(l)[0].variance).collect();
        // smaller share, larger variance
        assert!(var[0] > var[3]);
        assert!(var[3] > var[1]);
        assert_eq!(var[1], var[2]);
        for (l, s) in shares.iter().enumerate() {
            assert!((var[l] - 1.0 / (2.0 * s)).abs() < 1e-9 * var[l]);
        }
    }
}
