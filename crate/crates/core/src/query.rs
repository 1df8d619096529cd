//! Count queries over histograms, query-size groups and workload generation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GeoHierarchy, Histogram, Schema, Universe};
use crate::rng::SeedStream;

/// Where a query is tabulated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Geography {
    /// A unit of the hierarchy.
    Unit(String),
    /// An off-spine area made of arbitrary blocks, reported under `label`.
    Blocks { label: String, ids: Vec<String> },
}

/// A univariate count query: the number of records in `cells` within
/// `geography`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub universe: Universe,
    pub cells: Vec<usize>,
    pub geography: Geography,
}

impl Query {
    /// Level name of a unit query, or the label of a block-union query.
    pub fn geolevel(&self, hierarchy: &GeoHierarchy) -> Result<String> {
        match &self.geography {
            Geography::Unit(id) => {
                let u = hierarchy.lookup(id)?;
                Ok(hierarchy.levels()[hierarchy.unit(u).level].clone())
            }
            Geography::Blocks { label, .. } => Ok(label.clone()),
        }
    }

    fn check(&self, schema: &Schema) -> Result<()> {
        if self.universe != schema.universe() {
            return Err(Error::Query(format!(
                "query `{}` is for the {} universe but the histogram is {}",
                self.id,
                self.universe.as_str(),
                schema.universe().as_str()
            )));
        }
        if self.cells.is_empty() {
            return Err(Error::Query(format!(
                "query `{}` selects no cells",
                self.id
            )));
        }
        if let Some(c) = self.cells.iter().find(|&&c| c >= schema.cell_count()) {
            return Err(Error::Query(format!(
                "query `{}` has cell {c} out of range",
                self.id
            )));
        }
        if let Geography::Blocks { ids, .. } = &self.geography {
            if ids.is_empty() {
                return Err(Error::Query(format!("query `{}` has no blocks", self.id)));
            }
        }
        Ok(())
    }

    /// Block positions of the geography.
    fn blocks(&self, hierarchy: &GeoHierarchy) -> Result<Vec<usize>> {
        match &self.geography {
            Geography::Unit(id) => Ok(hierarchy.descendant_blocks(hierarchy.lookup(id)?)),
            Geography::Blocks { ids, .. } => ids
                .iter()
                .map(|id| {
                    hierarchy
                        .block_position(hierarchy.lookup(id)?)
                        .ok_or_else(|| Error::Query(format!("`{id}` is not a block")))
                })
                .collect(),
        }
    }
}

/// Answers `q` on `h` by summing the selected cells over the geography's blocks.
pub fn evaluate(q: &Query, h: &Histogram) -> Result<u64> {
    q.check(h.schema())?;
    let hier = h.hierarchy();
    let mut total = 0;
    for pos in q.blocks(hier)? {
        total += q.cells.iter().map(|&c| h.get_at(pos, c)).sum::<u64>();
    }
    Ok(total)
}

/// Query-size bins by confidential count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SizeGroup {
    Zero,
    OneToFour,
    FiveToTen,
    ElevenTo24,
    TwentyFiveTo99,
    HundredTo499,
    FiveHundredTo999,
    ThousandPlus,
}

impl SizeGroup {
    pub const ALL: [SizeGroup; 8] = [
        SizeGroup::Zero,
        SizeGroup::OneToFour,
        SizeGroup::FiveToTen,
        SizeGroup::ElevenTo24,
        SizeGroup::TwentyFiveTo99,
        SizeGroup::HundredTo499,
        SizeGroup::FiveHundredTo999,
        SizeGroup::ThousandPlus,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SizeGroup::Zero => "0",
            SizeGroup::OneToFour => "1-4",
            SizeGroup::FiveToTen => "5-10",
            SizeGroup::ElevenTo24 => "11-24",
            SizeGroup::TwentyFiveTo99 => "25-99",
            SizeGroup::HundredTo499 => "100-499",
            SizeGroup::FiveHundredTo999 => "500-999",
            SizeGroup::ThousandPlus => "1000+",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.label() == s)
            .ok_or_else(|| Error::Data(format!("unknown size group `{s}`")))
    }
}

impl fmt::Display for SizeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for SizeGroup {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for SizeGroup {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        SizeGroup::parse(&s).map_err(serde::de::Error::custom)
    }
}

pub fn size_group(cef_value: u64) -> SizeGroup {
    match cef_value {
        0 => SizeGroup::Zero,
        1..=4 => SizeGroup::OneToFour,
        5..=10 => SizeGroup::FiveToTen,
        11..=24 => SizeGroup::ElevenTo24,
        25..=99 => SizeGroup::TwentyFiveTo99,
        100..=499 => SizeGroup::HundredTo499,
        500..=999 => SizeGroup::FiveHundredTo999,
        _ => SizeGroup::ThousandPlus,
    }
}

enum Target {
    Unit(usize),
    Blocks(Vec<usize>),
}

/// Answers a fixed workload on many histograms over the same hierarchy.
pub struct Tabulator {
    targets: Vec<(Target, Vec<usize>)>,
    universe: Universe,
    cells: usize,
}

impl Tabulator {
    pub fn new(queries: &[Query], hierarchy: &GeoHierarchy, schema: &Schema) -> Result<Self> {
        let mut targets = Vec::with_capacity(queries.len());
        for q in queries {
            q.check(schema)?;
            let t = match &q.geography {
                Geography::Unit(id) => Target::Unit(hierarchy.lookup(id)?),
                Geography::Blocks { .. } => Target::Blocks(
                    q.blocks(hierarchy)?
                        .into_iter()
                        .map(|p| hierarchy.blocks()[p])
                        .collect(),
                ),
            };
            targets.push((t, q.cells.clone()));
        }
        Ok(Self {
            targets,
            universe: schema.universe(),
            cells: schema.cell_count(),
        })
    }

    /// One answer per query, in workload order.
    pub fn tabulate(&self, h: &Histogram) -> Result<Vec<u64>> {
        if h.schema().universe() != self.universe || h.schema().cell_count() != self.cells {
            return Err(Error::Query(
                "histogram schema does not match the workload".into(),
            ));
        }
        let agg = h.aggregate_all();
        Ok(self
            .targets
            .iter()
            .map(|(t, cells)| {
                let sum_cells = |u: usize| cells.iter().map(|&c| agg[u][c]).sum::<u64>();
                match t {
                    Target::Unit(u) => sum_cells(*u),
                    Target::Blocks(bs) => bs.iter().map(|&b| sum_cells(b)).sum(),
                }
            })
            .collect())
    }
}

/// Size-stratified random sample of blocks within each level-1 unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockSample {
    /// Blocks drawn per (level-1 unit, stratum).
    pub per_stratum: usize,
    /// Increasing block-total boundaries; `[20]` gives strata `< 20` and `>= 20`.
    pub strata_bounds: Vec<u64>,
}

impl Default for BlockSample {
    fn default() -> Self {
        Self {
            per_stratum: 5,
            strata_bounds: vec![20],
        }
    }
}

/// Randomly drawn block unions reported under one label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnionSpec {
    pub label: String,
    pub count: usize,
    pub blocks_per_union: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSpec {
    /// Highest marginal order; 0 is the total.
    pub max_order: usize,
    /// Levels queried at every unit. Defaults to all levels above blocks.
    pub levels: Option<Vec<String>>,
    pub block_sample: BlockSample,
    pub unions: Vec<UnionSpec>,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            max_order: 2,
            levels: None,
            block_sample: BlockSample::default(),
            unions: vec![
                UnionSpec {
                    label: "aian-analogue".into(),
                    count: 4,
                    blocks_per_union: 6,
                },
                UnionSpec {
                    label: "school-district-analogue".into(),
                    count: 4,
                    blocks_per_union: 12,
                },
            ],
        }
    }
}

/// A marginal level set: attribute indices with one level each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarginalCell {
    pub attrs: Vec<usize>,
    pub levels: Vec<usize>,
}

impl MarginalCell {
    /// Text key such as `sex=1&age=3`, or `total`.
    pub fn key(&self, schema: &Schema) -> String {
        if self.attrs.is_empty() {
            return "total".into();
        }
        let names = schema.attributes();
        self.attrs
            .iter()
            .zip(&self.levels)
            .map(|(&a, l)| format!("{}={l}", names[a].name))
            .collect::<Vec<_>>()
            .join("&")
    }

    pub fn cells(&self, schema: &Schema) -> Vec<usize> {
        (0..schema.cell_count())
            .filter(|&c| {
                let code = schema.decode(c);
                self.attrs
                    .iter()
                    .zip(&self.levels)
                    .all(|(&a, &l)| code[a] == l)
            })
            .collect()
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Every marginal level set of order `0..=max_order`, in a fixed order.
pub fn marginal_cells(schema: &Schema, max_order: usize) -> Vec<MarginalCell> {
    let attrs = schema.attributes();
    let mut out = Vec::new();
    for order in 0..=max_order.min(attrs.len()) {
        for subset in combinations(attrs.len(), order) {
            let sizes: Vec<usize> = subset.iter().map(|&a| attrs[a].cardinality).collect();
            let total: usize = sizes.iter().product();
            for mut i in 0..total {
                let mut levels = vec![0; sizes.len()];
                for j in (0..sizes.len()).rev() {
                    levels[j] = i % sizes[j];
                    i /= sizes[j];
                }
                out.push(MarginalCell {
                    attrs: subset.clone(),
                    levels,
                });
            }
        }
    }
    out
}

fn push_marginals(
    out: &mut Vec<Query>,
    schema: &Schema,
    marginals: &[(String, Vec<usize>)],
    prefix: &str,
    geography: &Geography,
) {
    for (key, cells) in marginals {
        out.push(Query {
            id: format!("{prefix}|{key}"),
            universe: schema.universe(),
            cells: cells.clone(),
            geography: geography.clone(),
        });
    }
}

/// Builds the evaluation workload.
///
/// Unit queries are ordered by level and unit; sampled blocks follow, then
/// block unions. The block sample is stratified by the block totals of
/// `reference`.
pub fn generate_workload(
    spec: &WorkloadSpec,
    reference: &Histogram,
    stream: &SeedStream,
) -> Result<Vec<Query>> {
    let schema = reference.schema();
    let hier = reference.hierarchy();
    let block_level = hier.depth() - 1;
    let levels: Vec<usize> = match &spec.levels {
        Some(names) => names
            .iter()
            .map(|n| {
                hier.level_index(n)
                    .ok_or_else(|| Error::Config(format!("unknown workload level `{n}`")))
            })
            .collect::<Result<_>>()?,
        None => (0..block_level).collect(),
    };
    if spec
        .block_sample
        .strata_bounds
        .windows(2)
        .any(|w| w[0] >= w[1])
    {
        return Err(Error::Config("strata bounds must increase".into()));
    }
    let marginals: Vec<(String, Vec<usize>)> = marginal_cells(schema, spec.max_order)
        .into_iter()
        .map(|m| (m.key(schema), m.cells(schema)))
        .collect();

    let mut out = Vec::new();
    for &level in &levels {
        for &u in hier.units_at(level) {
            let id = &hier.unit(u).id;
            push_marginals(
                &mut out,
                schema,
                &marginals,
                &format!("u:{id}"),
                &Geography::Unit(id.clone()),
            );
        }
    }

    let sample = &spec.block_sample;
    if sample.per_stratum > 0 && !levels.contains(&block_level) {
        let agg = reference.aggregate_all();
        let group_level = 1.min(block_level);
        let mut chosen = Vec::new();
        for &g in hier.units_at(group_level) {
            let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for p in hier.descendant_blocks(g) {
                let b = hier.blocks()[p];
                let total: u64 = agg[b].iter().sum();
                let s = sample.strata_bounds.iter().filter(|&&t| total >= t).count();
                strata.entry(s).or_default().push(b);
            }
            let gs = stream.label("block-sample").label(&hier.unit(g).id);
            for (s, blocks) in strata {
                let mut rng = gs.index(s as u64).rng();
                let n = sample.per_stratum.min(blocks.len());
                let mut picked: Vec<usize> = index::sample(&mut rng, blocks.len(), n)
                    .into_iter()
                    .map(|i| blocks[i])
                    .collect();
                picked.sort_unstable();
                chosen.extend(picked);
            }
        }
        chosen.sort_unstable();
        for b in chosen {
            let id = &hier.unit(b).id;
            push_marginals(
                &mut out,
                schema,
                &marginals,
                &format!("u:{id}"),
                &Geography::Unit(id.clone()),
            );
        }
    }

    let blocks = hier.blocks();
    for us in &spec.unions {
        if us.label.is_empty()
            || us.label.contains([',', ';', '|'])
            || hier.level_index(&us.label).is_some()
        {
            return Err(Error::Config(format!("invalid union label `{}`", us.label)));
        }
        if us.blocks_per_union == 0 || us.blocks_per_union > blocks.len() {
            return Err(Error::Config(format!(
                "union `{}` needs between 1 and {} blocks",
                us.label,
                blocks.len()
            )));
        }
        let ls = stream.label("union").label(&us.label);
        for i in 0..us.count {
            let mut rng = ls.index(i as u64).rng();
            let mut picked: Vec<usize> = index::sample(&mut rng, blocks.len(), us.blocks_per_union)
                .into_iter()
                .map(|j| blocks[j])
                .collect();
            picked.sort_unstable();
            let geo = Geography::Blocks {
                label: us.label.clone(),
                ids: picked.iter().map(|&b| hier.unit(b).id.clone()).collect(),
            };
            push_marginals(
                &mut out,
                schema,
                &marginals,
                &format!("b:{}-{i:02}", us.label),
                &geo,
            );
        }
    }
    Ok(out)
}

/// Level name or union label of every query, in order.
pub fn geolevels(queries: &[Query], hierarchy: &GeoHierarchy) -> Result<Vec<String>> {
    queries.iter().map(|q| q.geolevel(hierarchy)).collect()
}

impl fmt::Display for Geography {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geography::Unit(id) => write!(f, "{id}"),
            Geography::Blocks { label, ids } => write!(f, "{label}[{}]", ids.join(";")),
        }
    }
}
