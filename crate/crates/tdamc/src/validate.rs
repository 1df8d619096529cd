//! Invariant checks over a finished artifact directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use tdamc_core::model::GeoHierarchy;
use tdamc_core::simulate::ReplicateKind;

use crate::error::{Error, Result};
use crate::io;
use crate::manifest::{ArtifactManifest, RunManifest, ARTIFACTS};
use crate::pipeline::{PublishedInvariants, HIERARCHY, INVARIANTS, PPMF0, PPMF0_UNITS, SCHEMA};

/// Failure messages kept per check.
const MAX_MESSAGES: usize = 50;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Number of items examined.
    pub checked: usize,
    pub failures: usize,
    pub messages: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Default)]
struct Check {
    checked: usize,
    failures: usize,
    messages: Vec<String>,
}

impl Check {
    fn ok(&mut self) {
        self.checked += 1;
    }

    fn fail(&mut self, msg: String) {
        self.checked += 1;
        self.failures += 1;
        if self.messages.len() < MAX_MESSAGES {
            self.messages.push(msg);
        }
    }

    fn expect(&mut self, cond: bool, msg: impl FnOnce() -> String) {
        if cond {
            self.ok()
        } else {
            self.fail(msg())
        }
    }

    fn finish(self, name: &str) -> CheckResult {
        CheckResult {
            name: name.into(),
            passed: self.failures == 0,
            checked: self.checked,
            failures: self.failures,
            messages: self.messages,
        }
    }
}

/// A stored replicate: block file and unit file, relative to the directory.
struct Replicate {
    histogram: String,
    units: String,
}

fn replicates(dir: &Path) -> Vec<Replicate> {
    let mut out = vec![Replicate {
        histogram: PPMF0.into(),
        units: PPMF0_UNITS.into(),
    }];
    for kind in [ReplicateKind::Mc, ReplicateKind::Amc] {
        let k = kind.as_str();
        for i in 0.. {
            let histogram = format!("{k}/ppmf_{i}.csv");
            if !dir.join(&histogram).exists() {
                break;
            }
            out.push(Replicate {
                histogram,
                units: format!("{k}/units_{i}.csv"),
            });
        }
    }
    out
}

/// Reads `id,cell_index,count` rows without trusting them. Rows that are not
/// well formed are reported and skipped.
fn read_counts(
    dir: &Path,
    rel: &str,
    cells: usize,
    check: &mut Check,
) -> Result<BTreeMap<(String, usize), u64>> {
    let path = dir.join(rel);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let mut out = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(&path, e))?;
        let row = line + 2;
        let (Some(id), Some(cell), Some(count)) = (rec.get(0), rec.get(1), rec.get(2)) else {
            check.fail(format!("{rel}:{row}: expected three fields"));
            continue;
        };
        let cell = match cell.trim().parse::<usize>() {
            Ok(c) if c < cells => c,
            _ => {
                check.fail(format!("{rel}:{row}: cell index `{cell}` is not valid"));
                continue;
            }
        };
        match count.trim().parse::<u64>() {
            Ok(v) => {
                check.ok();
                out.insert((id.to_string(), cell), v);
            }
            Err(_) => check.fail(format!(
                "{rel}:{row}: count `{count}` for `{id}` cell {cell} is not a non-negative integer"
            )),
        }
    }
    Ok(out)
}

/// Cell vectors for every unit: blocks from the histogram, the rest from the
/// unit file.
fn unit_vectors(
    hier: &GeoHierarchy,
    cells: usize,
    blocks: &BTreeMap<(String, usize), u64>,
    units: &BTreeMap<(String, usize), u64>,
) -> Vec<Vec<u64>> {
    let mut v = vec![vec![0; cells]; hier.units().len()];
    for src in [blocks, units] {
        for ((id, cell), &count) in src {
            if let Ok(u) = hier.lookup(id) {
                v[u][*cell] = count;
            }
        }
    }
    v
}

pub fn validate(dir: &Path) -> Result<ValidationReport> {
    let schema = io::read_schema(&dir.join(SCHEMA))?;
    let hier = io::read_hierarchy(&dir.join(HIERARCHY))?;
    let published: PublishedInvariants = io::read_json(&dir.join(INVARIANTS))?;
    let cells = schema.cell_count();

    let mut nonneg = Check::default();
    let mut consistent = Check::default();
    let mut invariants = Check::default();
    for rep in replicates(dir) {
        let blocks = read_counts(dir, &rep.histogram, cells, &mut nonneg)?;
        let units = read_counts(dir, &rep.units, cells, &mut nonneg)?;
        for (id, _) in blocks.keys() {
            if hier
                .lookup(id)
                .ok()
                .and_then(|u| hier.block_position(u))
                .is_none()
            {
                consistent.fail(format!("{}: `{id}` is not a block", rep.histogram));
            }
        }
        let v = unit_vectors(&hier, cells, &blocks, &units);
        for (u, unit) in hier.units().iter().enumerate() {
            let children = hier.children(u);
            if children.is_empty() {
                continue;
            }
            for cell in 0..cells {
                let sum: u64 = children.iter().map(|&c| v[c][cell]).sum();
                consistent.expect(sum == v[u][cell], || {
                    format!(
                        "{}: unit `{}` cell {cell} holds {} but its children sum to {sum}",
                        rep.histogram, unit.id, v[u][cell]
                    )
                });
            }
        }
        let total = |u: usize| v[u].iter().sum::<u64>();
        if let Some(t) = published.root_total {
            let got = total(hier.root());
            invariants.expect(got == t, || {
                format!(
                    "{}: root total {got} differs from the invariant {t}",
                    rep.units
                )
            });
        }
        for (id, &t) in published.level1_totals.iter().flatten() {
            match hier.lookup(id) {
                Ok(u) => {
                    let got = total(u);
                    invariants.expect(got == t, || {
                        format!("{}: total of `{id}` is {got}, invariant is {t}", rep.units)
                    });
                }
                Err(_) => invariants.fail(format!("invariant names unknown unit `{id}`")),
            }
        }
    }

    let mut integrity = Check::default();
    for kind in [ReplicateKind::Mc, ReplicateKind::Amc] {
        let path = dir.join(RunManifest::file_name(kind));
        match io::read_json::<RunManifest>(&path).and_then(|m| m.verify(dir)) {
            Ok(()) => integrity.ok(),
            Err(e) => integrity.fail(e.to_string()),
        }
    }
    match io::read_json::<ArtifactManifest>(&dir.join(ARTIFACTS)) {
        Ok(m) => {
            let diff = m.diff(dir)?;
            if diff.is_empty() {
                integrity.ok();
            }
            for d in diff {
                integrity.fail(format!("{ARTIFACTS}: {d}"));
            }
        }
        Err(e) => integrity.fail(e.to_string()),
    }

    let checks = vec![
        nonneg.finish("non_negative_integers"),
        consistent.finish("hierarchical_consistency"),
        invariants.finish("invariant_totals"),
        integrity.finish("manifest_integrity"),
    ];
    Ok(ValidationReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
