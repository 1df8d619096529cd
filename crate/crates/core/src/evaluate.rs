//! Coverage, width, bias and moment comparisons across a query workload.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervals::{
    all_intervals, nearest_rank, CiRecord, CiType, IntervalParams, MomentEstimates,
};
use crate::query::{size_group, SizeGroup};
use crate::rng::SeedStream;
use crate::simulate::subset_indices;

/// Confidential answer of one query and the geolevel it is reported under.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTruth {
    pub query_id: String,
    pub geolevel: String,
    pub cef: u64,
}

impl QueryTruth {
    pub fn size_group(&self) -> SizeGroup {
        size_group(self.cef)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub geolevel: String,
    pub size_group: SizeGroup,
    pub ci_type: CiType,
    pub n_queries: usize,
    pub proportion_containing_cef: f64,
    /// Fraction of the geolevel's queries in this size group.
    pub group_share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthRow {
    pub geolevel: String,
    pub size_group: SizeGroup,
    pub ci_type: CiType,
    pub n_queries: usize,
    pub min: u64,
    pub q1: u64,
    pub median: u64,
    pub q3: u64,
    pub max: u64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasPercentileRow {
    pub geolevel: String,
    pub size_group: SizeGroup,
    pub p01: f64,
    pub p50: f64,
    pub p99: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentComparisonRow {
    pub query_id: String,
    pub geolevel: String,
    pub size_group: SizeGroup,
    pub rmse_mc: f64,
    pub rmse_amc: f64,
    pub bias_mc: f64,
    pub bias_amc: f64,
    pub sd_mc: f64,
    pub sd_amc: f64,
}

/// Joins records to their truths and orders geolevels by first appearance
/// in `truth`.
struct Index<'a> {
    by_id: BTreeMap<&'a str, &'a QueryTruth>,
    level_rank: BTreeMap<&'a str, usize>,
}

impl<'a> Index<'a> {
    fn new(truth: &'a [QueryTruth]) -> Self {
        let mut level_rank = BTreeMap::new();
        for t in truth {
            let next = level_rank.len();
            level_rank.entry(t.geolevel.as_str()).or_insert(next);
        }
        Self {
            by_id: truth.iter().map(|t| (t.query_id.as_str(), t)).collect(),
            level_rank,
        }
    }

    fn get(&self, id: &str) -> Result<&'a QueryTruth> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::Data(format!("query `{id}` has no confidential answer")))
    }

    fn key(&self, t: &QueryTruth) -> (usize, SizeGroup) {
        (self.level_rank[t.geolevel.as_str()], t.size_group())
    }

    fn level_name(&self, rank: usize) -> String {
        self.level_rank
            .iter()
            .find(|(_, &r)| r == rank)
            .map(|(n, _)| String::from(*n))
            .expect("rank exists")
    }
}

/// Proportion of intervals containing the confidential answer, by geolevel,
/// size group and interval type. Endpoints count as inside.
pub fn coverage_table(records: &[CiRecord], truth: &[QueryTruth]) -> Result<Vec<CoverageRow>> {
    let idx = Index::new(truth);
    let mut cells: BTreeMap<(usize, SizeGroup, CiType), (usize, usize)> = BTreeMap::new();
    let mut level_queries: BTreeMap<(usize, CiType), usize> = BTreeMap::new();
    for r in records {
        let t = idx.get(&r.query_id)?;
        let (lv, sg) = idx.key(t);
        let e = cells.entry((lv, sg, r.ci_type)).or_default();
        e.0 += 1;
        e.1 += usize::from(r.bounds().contains(t.cef));
        *level_queries.entry((lv, r.ci_type)).or_default() += 1;
    }
    Ok(cells
        .into_iter()
        .map(|((lv, sg, ty), (n, hit))| CoverageRow {
            geolevel: idx.level_name(lv),
            size_group: sg,
            ci_type: ty,
            n_queries: n,
            proportion_containing_cef: hit as f64 / n as f64,
            group_share: n as f64 / level_queries[&(lv, ty)] as f64,
        })
        .collect())
}

/// Proportion of `ci_type` intervals containing the confidential answer over
/// all queries, with the number of queries.
pub fn aggregate_coverage(
    records: &[CiRecord],
    truth: &[QueryTruth],
    ci_type: CiType,
) -> Result<(f64, usize)> {
    let idx = Index::new(truth);
    let (mut n, mut hit) = (0usize, 0usize);
    for r in records.iter().filter(|r| r.ci_type == ci_type) {
        n += 1;
        hit += usize::from(r.bounds().contains(idx.get(&r.query_id)?.cef));
    }
    if n == 0 {
        return Err(Error::Data(format!("no `{ci_type}` intervals")));
    }
    Ok((hit as f64 / n as f64, n))
}

/// Five-number summary and mean of interval widths.
pub fn width_summary(records: &[CiRecord], truth: &[QueryTruth]) -> Result<Vec<WidthRow>> {
    let idx = Index::new(truth);
    let mut groups: BTreeMap<(usize, SizeGroup, CiType), Vec<u64>> = BTreeMap::new();
    for r in records {
        let (lv, sg) = idx.key(idx.get(&r.query_id)?);
        groups
            .entry((lv, sg, r.ci_type))
            .or_default()
            .push(r.bounds().width());
    }
    Ok(groups
        .into_iter()
        .map(|((lv, sg, ty), mut w)| {
            w.sort_unstable();
            WidthRow {
                geolevel: idx.level_name(lv),
                size_group: sg,
                ci_type: ty,
                n_queries: w.len(),
                min: w[0],
                q1: nearest_rank(&w, 0.25),
                median: nearest_rank(&w, 0.5),
                q3: nearest_rank(&w, 0.75),
                max: w[w.len() - 1],
                mean: w.iter().sum::<u64>() as f64 / w.len() as f64,
            }
        })
        .collect())
}

/// MC and AMC moments side by side. `mc[i]` and `amc[i]` belong to `truth[i]`.
pub fn moment_comparison(
    truth: &[QueryTruth],
    mc: &[MomentEstimates],
    amc: &[MomentEstimates],
) -> Result<Vec<MomentComparisonRow>> {
    if mc.len() != truth.len() || amc.len() != truth.len() {
        return Err(Error::Data("moment lists do not match the workload".into()));
    }
    Ok(truth
        .iter()
        .zip(mc.iter().zip(amc))
        .map(|(t, (m, a))| MomentComparisonRow {
            query_id: t.query_id.clone(),
            geolevel: t.geolevel.clone(),
            size_group: t.size_group(),
            rmse_mc: libm::sqrt(m.mse),
            rmse_amc: libm::sqrt(a.mse),
            bias_mc: m.bias,
            bias_amc: a.bias,
            sd_mc: m.sd,
            sd_amc: a.sd,
        })
        .collect())
}

/// 1st, 50th and 99th nearest-rank percentiles of the AMC bias per
/// geolevel and size group. Empty groups produce no row.
pub fn bias_percentiles(rows: &[MomentComparisonRow]) -> Vec<BiasPercentileRow> {
    let mut level_rank: BTreeMap<&str, usize> = BTreeMap::new();
    for r in rows {
        let next = level_rank.len();
        level_rank.entry(r.geolevel.as_str()).or_insert(next);
    }
    let mut groups: BTreeMap<(usize, SizeGroup), (&str, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        groups
            .entry((level_rank[r.geolevel.as_str()], r.size_group))
            .or_insert_with(|| (r.geolevel.as_str(), Vec::new()))
            .1
            .push(r.bias_amc);
    }
    groups
        .into_iter()
        .map(|((_, sg), (level, mut b))| {
            b.sort_by(f64::total_cmp);
            BiasPercentileRow {
                geolevel: level.into(),
                size_group: sg,
                p01: nearest_rank(&b, 0.01),
                p50: nearest_rank(&b, 0.5),
                p99: nearest_rank(&b, 0.99),
            }
        })
        .collect()
}

/// How closely AMC moments track MC moments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    /// Median of `|rmse_amc - rmse_mc| / rmse_mc` over queries with confidential answer at least 25.
    pub median_relative_rmse_error: f64,
    pub rmse_queries: usize,
    /// Share of queries with confidential answer at least 100 and
    /// `|bias_mc| > 0.5 sd_mc` whose AMC bias has the same sign.
    pub bias_sign_agreement: f64,
    pub sign_queries: usize,
}

pub fn fidelity(rows: &[MomentComparisonRow]) -> Fidelity {
    let mut rel: Vec<f64> = rows
        .iter()
        .filter(|r| r.size_group >= SizeGroup::TwentyFiveTo99 && r.rmse_mc > 0.0)
        .map(|r| libm::fabs(r.rmse_amc - r.rmse_mc) / r.rmse_mc)
        .collect();
    rel.sort_by(f64::total_cmp);
    let signed: Vec<&MomentComparisonRow> = rows
        .iter()
        .filter(|r| {
            r.size_group >= SizeGroup::HundredTo499 && libm::fabs(r.bias_mc) > 0.5 * r.sd_mc
        })
        .collect();
    let agree = signed
        .iter()
        .filter(|r| (r.bias_mc > 0.0) == (r.bias_amc > 0.0) && r.bias_amc != 0.0)
        .count();
    Fidelity {
        median_relative_rmse_error: if rel.is_empty() {
            f64::NAN
        } else {
            nearest_rank(&rel, 0.5)
        },
        rmse_queries: rel.len(),
        bias_sign_agreement: if signed.is_empty() {
            f64::NAN
        } else {
            agree as f64 / signed.len() as f64
        },
        sign_queries: signed.len(),
    }
}

/// Coverage of one interval type when only a subset of replicates is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub iterations: usize,
    /// Replicate indices used, ascending.
    pub replicates: Vec<usize>,
    pub rows: Vec<CoverageRow>,
    pub aggregate: f64,
}

/// Recomputes `ci_type` intervals from random replicate subsets of each size.
///
/// `values[q]` holds the replicate answers of `truth[q]` and `points[q]` its
/// published answer. One subset per size is shared by all queries.
pub fn iteration_sensitivity(
    values: &[Vec<f64>],
    points: &[u64],
    truth: &[QueryTruth],
    sizes: &[usize],
    ci_type: CiType,
    params: &IntervalParams,
    stream: &SeedStream,
) -> Result<Vec<SensitivityTable>> {
    if values.len() != truth.len() || points.len() != truth.len() {
        return Err(Error::Data(
            "replicate answers do not match the workload".into(),
        ));
    }
    let total = values.first().map_or(0, |v| v.len());
    if values.iter().any(|v| v.len() != total) {
        return Err(Error::Data(
            "queries have different replicate counts".into(),
        ));
    }
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let idx = subset_indices(total, size, &stream.label("subset").index(size as u64))?;
        let mut records = Vec::with_capacity(truth.len());
        let mut buf = Vec::with_capacity(size);
        for ((v, &p), t) in values.iter().zip(points).zip(truth) {
            buf.clear();
            buf.extend(idx.iter().map(|&i| v[i]));
            records.extend(
                all_intervals(&t.query_id, p, &buf, params)?
                    .into_iter()
                    .filter(|r| r.ci_type == ci_type),
            );
        }
        out.push(SensitivityTable {
            iterations: size,
            replicates: idx,
            rows: coverage_table(&records, truth)?,
            aggregate: aggregate_coverage(&records, truth, ci_type)?.0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn rec(id: &str, ty: CiType, lower: u64, upper: u64) -> CiRecord {
        CiRecord {
            query_id: id.into(),
            ci_type: ty,
            level: 0.9,
            point: lower,
            lower,
            upper,
            moments: MomentEstimates {
                bias: 0.0,
                variance: 0.0,
                mse: 0.0,
                median_bias: 0.0,
                sd: 0.0,
                n: 2,
            },
        }
    }

    fn truth(id: &str, level: &str, cef: u64) -> QueryTruth {
        QueryTruth {
            query_id: id.into(),
            geolevel: level.into(),
            cef,
        }
    }

    #[test]
    fn closed_interval_and_enumeration() {
        let t: Vec<QueryTruth> = (0..10)
            .map(|i| truth(&format!("q{i}"), "state", 7))
            .collect();
        let r: Vec<CiRecord> = (0..10)
            .map(|i| {
                if i == 3 {
                    rec(&format!("q{i}"), CiType::Z, 8, 9)
                } else {
                    rec(&format!("q{i}"), CiType::Z, 7, 9)
                }
            })
            .collect();
        let rows = coverage_table(&r, &t).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].proportion_containing_cef - 0.9).abs() < 1e-12);
        assert!((rows[0].group_share - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unjoined_record_is_an_error() {
        let t = vec![truth("a", "root", 1)];
        assert!(matches!(
            coverage_table(&[rec("b", CiType::T, 0, 1)], &t),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn widths_and_percentiles() {
        let t: Vec<QueryTruth> = (0..11)
            .map(|i| truth(&format!("q{i}"), "block", 2))
            .collect();
        let r: Vec<CiRecord> = (0..11)
            .map(|i| rec(&format!("q{i}"), CiType::Z, 0, i))
            .collect();
        let w = width_summary(&r, &t).unwrap();
        assert_eq!((w[0].min, w[0].median, w[0].max), (0, 5, 10));
        let rows: Vec<MomentComparisonRow> = (1..=100)
            .map(|i| MomentComparisonRow {
                query_id: format!("q{i}"),
                geolevel: "county".into(),
                size_group: SizeGroup::FiveToTen,
                rmse_mc: 1.0,
                rmse_amc: 1.0,
                bias_mc: 0.0,
                bias_amc: f64::from(i),
                sd_mc: 1.0,
                sd_amc: 1.0,
            })
            .collect();
        let p = bias_percentiles(&rows);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].p01, p[0].p50, p[0].p99), (1.0, 50.0, 99.0));
    }
}
