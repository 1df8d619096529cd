//! Run configuration (JSON).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tdamc_core::intervals::{CiType, IntervalParams};
use tdamc_core::model::{CountModel, Schema};
use tdamc_core::noise::{BudgetAllocation, GroupShare, LevelShare, QueryGroup};
use tdamc_core::query::WorkloadSpec;
use tdamc_core::topdown::{Invariants, TdaParams};

use crate::error::{Error, Result};

/// A value given inline or as a path to a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum HierarchySpec {
    /// Balanced tree. `levels` runs from the root to the blocks.
    Fanouts {
        levels: Vec<String>,
        fanouts: Vec<usize>,
    },
    /// `unit_id,level,parent_id` CSV.
    File { file: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CefSpec {
    Synthetic(CountModel),
    /// `block_id,cell_index,count` CSV.
    File(PathBuf),
}

impl Default for CefSpec {
    fn default() -> Self {
        CefSpec::Synthetic(CountModel::default())
    }
}

/// Budget split. Levels or groups missing from the share maps divide the
/// remaining share evenly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    pub total_rho: f64,
    /// Measured at every level. Defaults to the total, each one-way
    /// marginal, and the detailed query.
    #[serde(default)]
    pub groups: Option<Vec<QueryGroup>>,
    #[serde(default)]
    pub level_shares: BTreeMap<String, f64>,
    #[serde(default)]
    pub group_shares: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: Source<Schema>,
    pub hierarchy: HierarchySpec,
    #[serde(default)]
    pub cef: CefSpec,
    pub budget: BudgetSpec,
    #[serde(default)]
    pub invariants: Invariants,
    #[serde(default)]
    pub workload: WorkloadSpec,
    pub m: usize,
    pub s: usize,
    /// MC replicate published as PPMF0.
    #[serde(default)]
    pub ppmf0_index: usize,
    #[serde(default = "default_subset_sizes")]
    pub subset_sizes: Vec<usize>,
    /// Interval type used for the replicate-count analysis.
    #[serde(default = "default_sensitivity_ci")]
    pub sensitivity_ci: CiType,
    #[serde(default)]
    pub intervals: IntervalParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_subset_sizes() -> Vec<usize> {
    vec![25, 50, 75, 100]
}

fn default_sensitivity_ci() -> CiType {
    CiType::Ct
}

impl RunConfig {
    /// Reads a config; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Source::Path(p) = &mut cfg.schema {
            fix(p);
        }
        if let HierarchySpec::File { file } = &mut cfg.hierarchy {
            fix(file);
        }
        if let CefSpec::File(p) = &mut cfg.cef {
            fix(p);
        }
        if let Some(p) = &mut cfg.out {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.m < 2 || self.s < 2 {
            return bad(format!(
                "need m >= 2 and s >= 2, got m = {}, s = {}",
                self.m, self.s
            ));
        }
        if self.ppmf0_index >= self.m {
            return bad(format!(
                "ppmf0_index {} is not below m = {}",
                self.ppmf0_index, self.m
            ));
        }
        if !(self.intervals.level > 0.0 && self.intervals.level < 1.0) {
            return bad(format!(
                "interval level {} is not in (0, 1)",
                self.intervals.level
            ));
        }
        if !(self.intervals.df > 0.0) {
            return bad(format!(
                "degrees of freedom {} must be positive",
                self.intervals.df
            ));
        }
        if let Some(&n) = self.subset_sizes.iter().find(|&&n| n < 2 || n > self.s) {
            return bad(format!("subset size {n} is outside 2..={}", self.s));
        }
        let mut files = Vec::new();
        if let Source::Path(p) = &self.schema {
            files.push(p);
        }
        if let HierarchySpec::File { file } = &self.hierarchy {
            files.push(file);
        }
        if let CefSpec::File(p) = &self.cef {
            files.push(p);
        }
        if let Some(p) = files.into_iter().find(|p| !p.exists()) {
            return bad(format!("`{}` does not exist", p.display()));
        }
        if let (CefSpec::Synthetic(_), HierarchySpec::File { .. }) = (&self.cef, &self.hierarchy) {
            return bad("synthetic counts need a fan-out hierarchy".into());
        }
        Ok(())
    }

    pub fn load_schema(&self) -> Result<Schema> {
        match &self.schema {
            Source::Inline(s) => Ok(s.clone()),
            Source::Path(p) => crate::io::read_schema(p),
        }
    }

    /// Top-down parameters for a hierarchy with the given level names.
    pub fn tda_params(&self, levels: &[String], schema: &Schema) -> Result<TdaParams> {
        let groups = self
            .budget
            .groups
            .clone()
            .unwrap_or_else(|| default_groups(schema));
        let level_shares = fill_shares("level", levels, &self.budget.level_shares)?;
        let names: Vec<String> = groups.iter().map(|g| g.name.clone()).collect();
        let group_shares = fill_shares("group", &names, &self.budget.group_shares)?;
        let allocation = BudgetAllocation {
            total_rho: self.budget.total_rho,
            levels: levels
                .iter()
                .zip(&level_shares)
                .map(|(level, &share)| LevelShare {
                    level: level.clone(),
                    share,
                    groups: groups
                        .iter()
                        .zip(&group_shares)
                        .map(|(g, &share)| GroupShare {
                            group: g.clone(),
                            share,
                        })
                        .collect(),
                })
                .collect(),
        };
        allocation.validate()?;
        Ok(TdaParams {
            allocation,
            invariants: self.invariants,
        })
    }
}

pub fn default_groups(schema: &Schema) -> Vec<QueryGroup> {
    let mut g = vec![QueryGroup::total()];
    g.extend(
        schema
            .attributes()
            .iter()
            .map(|a| QueryGroup::new(&a.name, &[a.name.as_str()])),
    );
    g.push(QueryGroup::detailed(schema));
    g
}

fn fill_shares(what: &str, names: &[String], given: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    if let Some(k) = given.keys().find(|k| !names.contains(k)) {
        return Err(Error::Config(format!(
            "share given for unknown {what} `{k}`"
        )));
    }
    let fixed: f64 = given.values().sum();
    let missing = names.len() - given.len();
    let rest = if missing == 0 {
        0.0
    } else {
        (1.0 - fixed) / missing as f64
    };
    if rest < 0.0 {
        return Err(Error::Config(format!(
            "{what} shares sum to {fixed}, more than 1"
        )));
    }
    Ok(names
        .iter()
        .map(|n| given.get(n).copied().unwrap_or(rest))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_level_shares_split_the_remainder() {
        let levels: Vec<String> = ["us", "state", "county", "block"].map(String::from).into();
        let given = BTreeMap::from([("us".to_string(), 0.0254), ("block".to_string(), 0.0403)]);
        let s = fill_shares("level", &levels, &given).unwrap();
        assert_eq!(s[0], 0.0254);
        assert_eq!(s[3], 0.0403);
        assert!((s[1] - (1.0 - 0.0657) / 2.0).abs() < 1e-15);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_level_is_rejected() {
        let levels = vec!["a".to_string()];
        let given = BTreeMap::from([("b".to_string(), 0.5)]);
        assert!(fill_shares("level", &levels, &given).is_err());
    }
}
