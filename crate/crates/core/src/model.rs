//! Attribute schemas, geographic hierarchies and sparse block histograms.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Population universe a histogram counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Universe {
    Person,
    Household,
}

impl Universe {
    pub fn as_str(&self) -> &'static str {
        match self {
            Universe::Person => "person",
            Universe::Household => "household",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "person" => Ok(Universe::Person),
            "household" => Ok(Universe::Household),
            other => Err(Error::Schema(format!("unknown universe `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub cardinality: usize,
}

/// Attribute layout of a fully saturated contingency table.
///
/// Cells are numbered in row-major order: the last attribute varies fastest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct Schema {
    universe: Universe,
    attributes: Vec<Attribute>,
    strides: Vec<usize>,
    cells: usize,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    universe: Universe,
    attributes: Vec<Attribute>,
}

impl TryFrom<RawSchema> for Schema {
    type Error = Error;
    fn try_from(raw: RawSchema) -> Result<Self> {
        Schema::new(raw.universe, raw.attributes)
    }
}

impl From<Schema> for RawSchema {
    fn from(s: Schema) -> Self {
        RawSchema {
            universe: s.universe,
            attributes: s.attributes,
        }
    }
}

impl Schema {
    pub fn new(universe: Universe, attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::Schema("schema needs at least one attribute".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &attributes {
            if a.cardinality < 2 {
                return Err(Error::Schema(format!(
                    "attribute `{}` has cardinality {} (< 2)",
                    a.name, a.cardinality
                )));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{}`", a.name)));
            }
        }
        let mut strides = vec![1usize; attributes.len()];
        let mut cells: usize = 1;
        for i in (0..attributes.len()).rev() {
            strides[i] = cells;
            cells = cells
                .checked_mul(attributes[i].cardinality)
                .filter(|&c| c <= u32::MAX as usize)
                .ok_or_else(|| Error::Schema("cell count overflows".into()))?;
        }
        Ok(Self {
            universe,
            attributes,
            strides,
            cells,
        })
    }

    /// Convenience constructor from `(name, cardinality)` pairs.
    pub fn from_pairs(universe: Universe, pairs: &[(&str, usize)]) -> Result<Self> {
        Self::new(
            universe,
            pairs
                .iter()
                .map(|(n, c)| Attribute {
                    name: (*n).to_string(),
                    cardinality: *c,
                })
                .collect(),
        )
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn cell_count(&self) -> usize {
        self.cells
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Per-attribute levels of a cell.
    pub fn decode(&self, cell: usize) -> Vec<usize> {
        self.attributes
            .iter()
            .zip(&self.strides)
            .map(|(a, s)| (cell / s) % a.cardinality)
            .collect()
    }

    pub fn encode(&self, levels: &[usize]) -> usize {
        levels.iter().zip(&self.strides).map(|(l, s)| l * s).sum()
    }

    /// Number of cells of the marginal over `attrs`.
    pub fn marginal_size(&self, attrs: &[usize]) -> usize {
        attrs
            .iter()
            .map(|&a| self.attributes[a].cardinality)
            .product()
    }

    /// Maps every detailed cell to its cell in the marginal over `attrs`
    /// (row-major in the order `attrs` is listed). An empty `attrs` maps
    /// everything to the single total cell.
    pub fn marginal_map(&self, attrs: &[usize]) -> Vec<usize> {
        (0..self.cells)
            .map(|cell| {
                attrs.iter().fold(0usize, |acc, &a| {
                    let level = (cell / self.strides[a]) % self.attributes[a].cardinality;
                    acc * self.attributes[a].cardinality + level
                })
            })
            .collect()
    }
}

/// One node of a [`GeoHierarchy`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeoUnit {
    pub id: String,
    pub level: usize,
    pub parent: Option<usize>,
}

/// Rooted tree of geographic units. Units are stored sorted by
/// `(level, id)`, so index order is canonical and independent of input order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeoHierarchy {
    levels: Vec<String>,
    units: Vec<GeoUnit>,
    children: Vec<Vec<usize>>,
    index: BTreeMap<String, usize>,
    by_level: Vec<Vec<usize>>,
    blocks: Vec<usize>,
    block_pos: Vec<Option<usize>>,
}

impl GeoHierarchy {
    /// Builds a balanced tree from per-level fan-outs. `levels` names every
    /// level root first; `fanouts[i]` is the number of children of each unit
    /// at level `i`.
    ///
    /// The root is called `root`; other ids concatenate zero-padded child
    /// positions, e.g. `02` for the third state and `0203` for its fourth county.
    pub fn from_fanouts(levels: Vec<String>, fanouts: &[usize]) -> Result<Self> {
        if levels.len() != fanouts.len() + 1 {
            return Err(Error::Config(format!(
                "{} levels need {} fan-outs, got {}",
                levels.len(),
                levels.len().saturating_sub(1),
                fanouts.len()
            )));
        }
        if let Some(i) = fanouts.iter().position(|&f| f == 0) {
            return Err(Error::Config(format!(
                "fan-out at level {i} must be positive"
            )));
        }
        let mut rows: Vec<(String, usize, Option<String>)> = vec![("root".into(), 0, None)];
        let mut frontier: Vec<String> = vec![String::new()];
        for (depth, &fan) in fanouts.iter().enumerate() {
            let width = digits(fan - 1).max(2);
            let mut next = Vec::with_capacity(frontier.len() * fan);
            for prefix in &frontier {
                let parent = if depth == 0 {
                    String::from("root")
                } else {
                    prefix.clone()
                };
                for i in 0..fan {
                    let id = format!("{prefix}{i:0width$}");
                    rows.push((id.clone(), depth + 1, Some(parent.clone())));
                    next.push(id);
                }
            }
            frontier = next;
        }
        Self::from_units(levels, rows)
    }

    /// Builds a hierarchy from `(id, level index, parent id)` rows.
    pub fn from_units(
        levels: Vec<String>,
        rows: Vec<(String, usize, Option<String>)>,
    ) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::Hierarchy(
                "need at least a root and a block level".into(),
            ));
        }
        let mut rows = rows;
        rows.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
        let mut index = BTreeMap::new();
        for (i, (id, level, _)) in rows.iter().enumerate() {
            if *level >= levels.len() {
                return Err(Error::Hierarchy(format!(
                    "unit `{id}` has unknown level {level}"
                )));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Hierarchy(format!("duplicate unit id `{id}`")));
            }
        }
        let mut units = Vec::with_capacity(rows.len());
        let mut children = vec![Vec::new(); rows.len()];
        let mut by_level = vec![Vec::new(); levels.len()];
        let mut roots = 0;
        for (i, (id, level, parent)) in rows.into_iter().enumerate() {
            let parent_idx = match parent {
                None => {
                    if level != 0 {
                        return Err(Error::Hierarchy(format!(
                            "unit `{id}` has no parent but is not at the root level"
                        )));
                    }
                    roots += 1;
                    None
                }
                Some(p) => {
                    let &pi = index.get(&p).ok_or_else(|| {
                        Error::Hierarchy(format!("unit `{id}` has unknown parent `{p}`"))
                    })?;
                    if units
                        .get(pi)
                        .map(|u: &GeoUnit| u.level + 1 != level)
                        .unwrap_or(true)
                    {
                        return Err(Error::Hierarchy(format!(
                            "parent `{p}` of `{id}` is not one level above it"
                        )));
                    }
                    children[pi].push(i);
                    Some(pi)
                }
            };
            by_level[level].push(i);
            units.push(GeoUnit {
                id,
                level,
                parent: parent_idx,
            });
        }
        if roots != 1 {
            return Err(Error::Hierarchy(format!(
                "expected exactly one root, found {roots}"
            )));
        }
        let leaf_level = levels.len() - 1;
        let mut blocks = Vec::new();
        let mut block_pos = vec![None; units.len()];
        for (i, u) in units.iter().enumerate() {
            if children[i].is_empty() {
                if u.level != leaf_level {
                    return Err(Error::Hierarchy(format!(
                        "leaf `{}` is at level `{}`, not the block level",
                        u.id, levels[u.level]
                    )));
                }
                block_pos[i] = Some(blocks.len());
                blocks.push(i);
            } else if u.level == leaf_level {
                return Err(Error::Hierarchy(format!("block `{}` has children", u.id)));
            }
        }
        Ok(Self {
            levels,
            units,
            children,
            index,
            by_level,
            blocks,
            block_pos,
        })
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level_index(&self, name: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == name)
    }

    pub fn units(&self) -> &[GeoUnit] {
        &self.units
    }

    pub fn unit(&self, idx: usize) -> &GeoUnit {
        &self.units[idx]
    }

    pub fn root(&self) -> usize {
        self.by_level[0][0]
    }

    pub fn lookup(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownUnit(id.to_string()))
    }

    pub fn children(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    /// Unit indices at a level, in canonical order.
    pub fn units_at(&self, level: usize) -> &[usize] {
        &self.by_level[level]
    }

    /// Unit indices of the blocks; position in this slice is the block position.
    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Position of a unit among the blocks, if it is one.
    pub fn block_position(&self, idx: usize) -> Option<usize> {
        self.block_pos[idx]
    }

    /// Ancestor of `idx` at `level` (itself when already at that level).
    pub fn ancestor_at(&self, mut idx: usize, level: usize) -> Option<usize> {
        if self.units[idx].level < level {
            return None;
        }
        while self.units[idx].level > level {
            idx = self.units[idx].parent?;
        }
        Some(idx)
    }

    /// Block positions under a unit, ascending.
    pub fn descendant_blocks(&self, idx: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![idx];
        while let Some(u) = stack.pop() {
            if let Some(p) = self.block_pos[u] {
                out.push(p);
            }
            stack.extend(self.children[u].iter().copied());
        }
        out.sort_unstable();
        out
    }
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

/// Sparse non-negative integer counts per (block, cell).
///
/// Only blocks are stored; counts at internal units are always derived by
/// summation, so a histogram is hierarchically consistent by construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    schema: Arc<Schema>,
    hierarchy: Arc<GeoHierarchy>,
    blocks: Vec<BTreeMap<u32, u64>>,
}

impl Histogram {
    pub fn zeros(schema: Arc<Schema>, hierarchy: Arc<GeoHierarchy>) -> Self {
        let n = hierarchy.block_count();
        Self {
            schema,
            hierarchy,
            blocks: vec![BTreeMap::new(); n],
        }
    }

    /// Builds a histogram from dense per-block vectors in block-position order.
    pub fn from_block_vectors(
        schema: Arc<Schema>,
        hierarchy: Arc<GeoHierarchy>,
        vectors: &[Vec<u64>],
    ) -> Result<Self> {
        if vectors.len() != hierarchy.block_count() {
            return Err(Error::Data(format!(
                "expected {} block vectors, got {}",
                hierarchy.block_count(),
                vectors.len()
            )));
        }
        let k = schema.cell_count();
        let mut h = Self::zeros(schema, hierarchy);
        for (pos, v) in vectors.iter().enumerate() {
            if v.len() != k {
                return Err(Error::Data(format!(
                    "block vector {pos} has {} cells, expected {k}",
                    v.len()
                )));
            }
            for (cell, &c) in v.iter().enumerate() {
                if c > 0 {
                    h.blocks[pos].insert(cell as u32, c);
                }
            }
        }
        Ok(h)
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn hierarchy(&self) -> &Arc<GeoHierarchy> {
        &self.hierarchy
    }

    /// Sets one count by block id.
    pub fn set(&mut self, block_id: &str, cell: usize, count: u64) -> Result<()> {
        let idx = self.hierarchy.lookup(block_id)?;
        let pos = self
            .hierarchy
            .block_position(idx)
            .ok_or_else(|| Error::Data(format!("`{block_id}` is not a block")))?;
        self.set_at(pos, cell, count)
    }

    pub fn set_at(&mut self, block_pos: usize, cell: usize, count: u64) -> Result<()> {
        if cell >= self.schema.cell_count() {
            return Err(Error::Data(format!(
                "cell index {cell} out of range (schema has {} cells)",
                self.schema.cell_count()
            )));
        }
        if count == 0 {
            self.blocks[block_pos].remove(&(cell as u32));
        } else {
            self.blocks[block_pos].insert(cell as u32, count);
        }
        Ok(())
    }

    pub fn get_at(&self, block_pos: usize, cell: usize) -> u64 {
        self.blocks[block_pos]
            .get(&(cell as u32))
            .copied()
            .unwrap_or(0)
    }

    pub fn block_vector(&self, block_pos: usize) -> Vec<u64> {
        let mut v = vec![0; self.schema.cell_count()];
        for (&c, &n) in &self.blocks[block_pos] {
            v[c as usize] = n;
        }
        v
    }

    /// Non-zero entries as `(block position, cell, count)` in block then cell order.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(pos, m)| m.iter().map(move |(&c, &n)| (pos, c as usize, n)))
    }

    pub fn total(&self) -> u64 {
        self.blocks.iter().flat_map(|m| m.values()).sum()
    }

    /// Cell vector of a unit by id: the block's own vector for a block, the
    /// elementwise sum over descendant blocks otherwise.
    pub fn aggregate(&self, unit_id: &str) -> Result<Vec<u64>> {
        let idx = self.hierarchy.lookup(unit_id)?;
        Ok(self.aggregate_unit(idx))
    }

    pub fn aggregate_unit(&self, idx: usize) -> Vec<u64> {
        let mut v = vec![0; self.schema.cell_count()];
        for pos in self.hierarchy.descendant_blocks(idx) {
            for (&c, &n) in &self.blocks[pos] {
                v[c as usize] += n;
            }
        }
        v
    }

    /// Cell vectors for every unit, indexed by unit index, built bottom-up.
    pub fn aggregate_all(&self) -> Vec<Vec<u64>> {
        let h = &*self.hierarchy;
        let k = self.schema.cell_count();
        let mut out = vec![vec![0u64; k]; h.units().len()];
        for (pos, &u) in h.blocks().iter().enumerate() {
            for (&c, &n) in &self.blocks[pos] {
                out[u][c as usize] = n;
            }
        }
        for level in (0..h.depth() - 1).rev() {
            for &u in h.units_at(level) {
                let mut acc = vec![0u64; k];
                for &c in h.children(u) {
                    for (a, b) in acc.iter_mut().zip(&out[c]) {
                        *a += *b;
                    }
                }
                out[u] = acc;
            }
        }
        out
    }
}

/// Mixture distribution for synthetic block cell counts: exact zeros, small
/// geometric counts, and a log-uniform heavy tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountModel {
    /// Probability that an entire block is empty.
    pub empty_block_share: f64,
    /// Probability that a cell of a non-empty block is zero.
    pub zero_share: f64,
    /// Share of non-zero cells drawn from the heavy tail.
    pub tail_share: f64,
    /// Mean of the geometric small-count component (support 1, 2, ...).
    pub small_mean: f64,
    pub tail_min: u64,
    pub tail_max: u64,
}

impl Default for CountModel {
    fn default() -> Self {
        Self {
            empty_block_share: 0.1,
            zero_share: 0.5,
            tail_share: 0.2,
            small_mean: 3.0,
            tail_min: 8,
            tail_max: 250,
        }
    }
}

impl CountModel {
    fn validate(&self) -> Result<()> {
        let unit = |x: f64, name: &str| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {x}")))
            }
        };
        unit(self.empty_block_share, "empty_block_share")?;
        unit(self.zero_share, "zero_share")?;
        unit(self.tail_share, "tail_share")?;
        if !(self.small_mean >= 1.0 && self.small_mean.is_finite()) {
            return Err(Error::Config("small_mean must be at least 1".into()));
        }
        if self.tail_min == 0 || self.tail_min > self.tail_max {
            return Err(Error::Config("need 1 <= tail_min <= tail_max".into()));
        }
        Ok(())
    }

    fn draw_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if rng.random::<f64>() < self.tail_share {
            let lo = libm::log(self.tail_min as f64);
            let hi = libm::log(self.tail_max as f64 + 1.0);
            let v = libm::floor(libm::exp(lo + rng.random::<f64>() * (hi - lo))) as u64;
            v.clamp(self.tail_min, self.tail_max)
        } else if self.small_mean <= 1.0 {
            1
        } else {
            // Geometric on {1, 2, ...} with the configured mean.
            let p = 1.0 / self.small_mean;
            let u: f64 = 1.0 - rng.random::<f64>();
            1 + libm::floor(libm::log(u) / libm::log(1.0 - p)) as u64
        }
    }
}

/// Shape of a synthetic confidential histogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub schema: Schema,
    /// Level names, root first, block last.
    pub levels: Vec<String>,
    /// Children per unit at each non-block level.
    pub fanouts: Vec<usize>,
    #[serde(default)]
    pub counts: CountModel,
}

/// Generates a synthetic stand-in for the confidential input. Deterministic
/// for a fixed seed.
pub fn synth_cef(config: &SynthConfig, seed: u64) -> Result<Histogram> {
    config.counts.validate()?;
    let hierarchy = Arc::new(GeoHierarchy::from_fanouts(
        config.levels.clone(),
        &config.fanouts,
    )?);
    let schema = Arc::new(config.schema.clone());
    let mut h = Histogram::zeros(schema.clone(), hierarchy.clone());
    let stream = SeedStream::new(seed).label("cef");
    let k = schema.cell_count();
    for pos in 0..hierarchy.block_count() {
        let mut rng = stream.index(pos as u64).rng();
        if rng.random::<f64>() < config.counts.empty_block_share {
            continue;
        }
        for cell in 0..k {
            if rng.random::<f64>() >= config.counts.zero_share {
                let n = config.counts.draw_nonzero(&mut rng);
                h.set_at(pos, cell, n)?;
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn two_block() -> (Arc<Schema>, Arc<GeoHierarchy>) {
        let schema = Arc::new(Schema::from_pairs(Universe::Person, &[("a", 2)]).unwrap());
        let hier = GeoHierarchy::from_units(
            names(&["root", "county", "block"]),
            vec![
                ("root".into(), 0, None),
                ("c1".into(), 1, Some("root".into())),
                ("b1".into(), 2, Some("c1".into())),
                ("b2".into(), 2, Some("c1".into())),
            ],
        )
        .unwrap();
        (schema, Arc::new(hier))
    }

    #[test]
    fn schema_rejects_bad_attributes() {
        assert!(Schema::from_pairs(Universe::Person, &[("a", 1)]).is_err());
        assert!(Schema::from_pairs(Universe::Person, &[("a", 2), ("a", 3)]).is_err());
        assert!(Schema::from_pairs(Universe::Person, &[]).is_err());
        let s = Schema::from_pairs(Universe::Household, &[("a", 2), ("b", 3)]).unwrap();
        assert_eq!(s.cell_count(), 6);
    }

    #[test]
    fn cell_coding_round_trips() {
        let s = Schema::from_pairs(Universe::Person, &[("a", 2), ("b", 4), ("c", 3)]).unwrap();
        for cell in 0..s.cell_count() {
            assert_eq!(s.encode(&s.decode(cell)), cell);
        }
        assert_eq!(s.decode(1), vec![0, 0, 1]);
        assert_eq!(s.decode(3), vec![0, 1, 0]);
        let m = s.marginal_map(&[2, 0]);
        for cell in 0..s.cell_count() {
            let l = s.decode(cell);
            assert_eq!(m[cell], l[2] * 2 + l[0]);
        }
        assert!(s.marginal_map(&[]).iter().all(|&x| x == 0));
    }

    #[test]
    fn schema_json_shape() {
        let s: Schema = serde_json::from_str(
            r#"{"universe":"person","attributes":[{"name":"sex","cardinality":2}]}"#,
        )
        .unwrap();
        assert_eq!(s.cell_count(), 2);
        let bad = serde_json::from_str::<Schema>(
            r#"{"universe":"person","attributes":[{"name":"sex","cardinality":1}]}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn aggregate_sums_children() {
        let (schema, hier) = two_block();
        let h = Histogram::from_block_vectors(schema, hier, &[vec![1, 2], vec![3, 4]]).unwrap();
        assert_eq!(h.aggregate("c1").unwrap(), vec![4, 6]);
        assert_eq!(h.aggregate("root").unwrap(), vec![4, 6]);
        assert_eq!(h.aggregate("b2").unwrap(), vec![3, 4]);
        assert!(matches!(h.aggregate("nope"), Err(Error::UnknownUnit(_))));
    }

    #[test]
    fn aggregate_block_identity() {
        let (schema, hier) = two_block();
        let h = Histogram::from_block_vectors(schema, hier, &[vec![5, 0], vec![0, 0]]).unwrap();
        assert_eq!(h.aggregate("b1").unwrap(), vec![5, 0]);
    }

    #[test]
    fn hierarchy_validation() {
        let lv = names(&["root", "block"]);
        // two roots
        assert!(GeoHierarchy::from_units(
            lv.clone(),
            vec![("r".into(), 0, None), ("s".into(), 0, None)]
        )
        .is_err());
        // leaf not at block level
        assert!(GeoHierarchy::from_units(
            names(&["root", "mid", "block"]),
            vec![("r".into(), 0, None), ("m".into(), 1, Some("r".into()))]
        )
        .is_err());
        // parent skips a level
        assert!(GeoHierarchy::from_units(
            names(&["root", "mid", "block"]),
            vec![
                ("r".into(), 0, None),
                ("m".into(), 1, Some("r".into())),
                ("b".into(), 2, Some("m".into())),
                ("c".into(), 2, Some("r".into())),
            ]
        )
        .is_err());
        // duplicate ids
        assert!(GeoHierarchy::from_units(
            lv,
            vec![
                ("r".into(), 0, None),
                ("b".into(), 1, Some("r".into())),
                ("b".into(), 1, Some("r".into())),
            ]
        )
        .is_err());
        assert!(GeoHierarchy::from_fanouts(names(&["root", "block"]), &[0]).is_err());
    }

    #[test]
    fn fanout_ids_are_ordered() {
        let h =
            GeoHierarchy::from_fanouts(names(&["root", "state", "county", "block"]), &[4, 4, 8])
                .unwrap();
        assert_eq!(h.units().len(), 1 + 4 + 16 + 128);
        assert_eq!(h.block_count(), 128);
        assert_eq!(h.unit(h.units_at(1)[2]).id, "02");
        let county = h.lookup("0203").unwrap();
        assert_eq!(h.unit(h.unit(county).parent.unwrap()).id, "02");
        let block = h.lookup("020307").unwrap();
        assert_eq!(h.unit(h.ancestor_at(block, 1).unwrap()).id, "02");
    }

    #[test]
    fn synth_is_deterministic_and_sized() {
        let cfg = SynthConfig {
            schema: Schema::from_pairs(Universe::Person, &[("a", 2), ("b", 2)]).unwrap(),
            levels: names(&["root", "state", "block"]),
            fanouts: vec![2, 2],
            counts: CountModel::default(),
        };
        let a = synth_cef(&cfg, 7).unwrap();
        let b = synth_cef(&cfg, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hierarchy().block_count(), 4);
        assert_eq!(a.schema().cell_count(), 4);
        assert_ne!(a, synth_cef(&cfg, 8).unwrap());
    }

    #[test]
    fn synth_degenerate_all_zero() {
        let cfg = SynthConfig {
            schema: Schema::from_pairs(Universe::Person, &[("a", 2), ("b", 2)]).unwrap(),
            levels: names(&["root", "state", "block"]),
            fanouts: vec![3, 3],
            counts: CountModel {
                zero_share: 1.0,
                ..CountModel::default()
            },
        };
        assert_eq!(synth_cef(&cfg, 1).unwrap().total(), 0);
    }

    #[test]
    fn synth_zero_share_frequency() {
        let cfg = SynthConfig {
            schema: Schema::from_pairs(Universe::Person, &[("a", 4), ("b", 4)]).unwrap(),
            levels: names(&["root", "state", "block"]),
            fanouts: vec![25, 30],
            counts: CountModel {
                zero_share: 0.6,
                empty_block_share: 0.0,
                ..CountModel::default()
            },
        };
        let h = synth_cef(&cfg, 11).unwrap();
        let cells = h.hierarchy().block_count() * h.schema().cell_count();
        assert!(cells >= 10_000);
        let nonzero = h.nonzero().count();
        let zero_share = 1.0 - nonzero as f64 / cells as f64;
        assert!((zero_share - 0.6).abs() <= 0.05, "zero share {zero_share}");
    }

    #[test]
    fn synth_rejects_zero_fanout() {
        let cfg = SynthConfig {
            schema: Schema::from_pairs(Universe::Person, &[("a", 2)]).unwrap(),
            levels: names(&["root", "block"]),
            fanouts: vec![0],
            counts: CountModel::default(),
        };
        assert!(matches!(synth_cef(&cfg, 1), Err(Error::Config(_))));
    }
}
