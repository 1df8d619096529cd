//! Staged pipeline: confidential input, MC runs, AMC runs, tabulation,
//! intervals and evaluation. Every stage reads its inputs from the artifact
//! directory, so stages can be rerun one at a time.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tdamc_core::evaluate::{
    aggregate_coverage, bias_percentiles, coverage_table, fidelity, iteration_sensitivity,
    moment_comparison, width_summary, CoverageRow, Fidelity, QueryTruth,
};
use tdamc_core::intervals::{all_intervals, moments, CiRecord, CiType};
use tdamc_core::model::{synth_cef, GeoHierarchy, Schema, SynthConfig};
use tdamc_core::query::{generate_workload, geolevels, Query, SizeGroup, Tabulator};
use tdamc_core::rng::SeedStream;
use tdamc_core::simulate::{replicate_stream, ReplicateKind};
use tdamc_core::topdown::{Clock, Tda, TdaParams};

use crate::config::{CefSpec, HierarchySpec, RunConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::manifest::{self, ArtifactManifest, FileHash, ReplicateEntry, RunManifest};

pub const SCHEMA: &str = "schema.json";
pub const HIERARCHY: &str = "hierarchy.csv";
pub const CEF: &str = "cef.csv";
pub const INVARIANTS: &str = "invariants.json";
pub const WORKLOAD: &str = "workload.csv";
pub const PPMF0: &str = "ppmf_0.csv";
pub const PPMF0_UNITS: &str = "ppmf_0_units.csv";
pub const NMF0: &str = "nmf_0.csv";
pub const CI: &str = "ci.csv";
pub const SUMMARY: &str = "summary.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    All,
    Cef,
    Mc,
    Amc,
    Tabulate,
    Intervals,
    Evaluate,
}

impl Stage {
    pub const SEQUENCE: [Stage; 6] = [
        Stage::Cef,
        Stage::Mc,
        Stage::Amc,
        Stage::Tabulate,
        Stage::Intervals,
        Stage::Evaluate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::All => "all",
            Stage::Cef => "cef",
            Stage::Mc => "mc",
            Stage::Amc => "amc",
            Stage::Tabulate => "tabulate",
            Stage::Intervals => "intervals",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// Totals published without noise, as written by the `cef` stage.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedInvariants {
    pub root_total: Option<u64>,
    pub level1_totals: Option<BTreeMap<String, u64>>,
}

/// Headline numbers of the `evaluate` stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub queries: usize,
    pub mc_replicates: usize,
    pub amc_replicates: usize,
    /// Aggregate coverage per interval type.
    pub coverage: BTreeMap<CiType, f64>,
    /// Lowest coverage of any size group, pooled over geolevels.
    pub min_size_group_coverage: BTreeMap<CiType, f64>,
    pub fidelity: Fidelity,
    pub zero_count: ZeroCount,
    /// Aggregate coverage of the sensitivity interval type per subset size.
    pub sensitivity: BTreeMap<usize, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroCount {
    pub queries: usize,
    pub negative_bias_mc: usize,
    pub negative_bias_amc: usize,
    pub min_bias_mc: f64,
    pub min_bias_amc: f64,
}

#[derive(Debug, Serialize)]
struct SensitivityRow<'a> {
    iterations: usize,
    geolevel: &'a str,
    size_group: SizeGroup,
    ci_type: CiType,
    n_queries: usize,
    proportion_containing_cef: f64,
    group_share: f64,
}

impl<'a> SensitivityRow<'a> {
    fn new(iterations: usize, r: &'a CoverageRow) -> Self {
        Self {
            iterations,
            geolevel: &r.geolevel,
            size_group: r.size_group,
            ci_type: r.ci_type,
            n_queries: r.n_queries,
            proportion_containing_cef: r.proportion_containing_cef,
            group_share: r.group_share,
        }
    }
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

pub struct Pipeline {
    cfg: RunConfig,
    out: PathBuf,
    seed: u64,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    /// `workers` caps the worker threads; `None` uses all cores.
    pub fn new(cfg: RunConfig, out: PathBuf, seed: u64, workers: Option<usize>) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.unwrap_or(0))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self {
            cfg,
            out,
            seed,
            pool,
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        let stages: &[Stage] = if stage == Stage::All {
            &Stage::SEQUENCE
        } else {
            &[stage]
        };
        for &s in stages {
            self.run_one(s).map_err(|e| Error::Stage {
                stage: s.name(),
                source: Box::new(e),
            })?;
        }
        ArtifactManifest::build(&self.out)?.write(&self.out)
    }

    fn run_one(&self, stage: Stage) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        match stage {
            Stage::All => unreachable!("expanded by run"),
            Stage::Cef => self.cef(),
            Stage::Mc => self.replicates(ReplicateKind::Mc),
            Stage::Amc => self.replicates(ReplicateKind::Amc),
            Stage::Tabulate => self.tabulate(),
            Stage::Intervals => self.intervals(),
            Stage::Evaluate => self.evaluate(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn structure(&self) -> Result<(Arc<Schema>, Arc<GeoHierarchy>)> {
        Ok((
            Arc::new(io::read_schema(&self.path(SCHEMA))?),
            Arc::new(io::read_hierarchy(&self.path(HIERARCHY))?),
        ))
    }

    fn params(&self, schema: &Schema, hier: &GeoHierarchy) -> Result<TdaParams> {
        self.cfg.tda_params(hier.levels(), schema)
    }

    fn cef(&self) -> Result<()> {
        let schema = self.cfg.load_schema()?;
        let cef = match (&self.cfg.cef, &self.cfg.hierarchy) {
            (CefSpec::Synthetic(counts), HierarchySpec::Fanouts { levels, fanouts }) => synth_cef(
                &SynthConfig {
                    schema,
                    levels: levels.clone(),
                    fanouts: fanouts.clone(),
                    counts: counts.clone(),
                },
                self.seed,
            )?,
            (CefSpec::File(file), spec) => {
                let hier = match spec {
                    HierarchySpec::Fanouts { levels, fanouts } => {
                        GeoHierarchy::from_fanouts(levels.clone(), fanouts)?
                    }
                    HierarchySpec::File { file } => io::read_hierarchy(file)?,
                };
                io::read_histogram(file, &Arc::new(schema), &Arc::new(hier))?
            }
            (CefSpec::Synthetic(_), HierarchySpec::File { .. }) => {
                return Err(Error::Config(
                    "synthetic counts need a fan-out hierarchy".into(),
                ))
            }
        };
        // Fail early on a budget that does not fit the hierarchy.
        self.params(cef.schema(), cef.hierarchy())?;
        let hier = cef.hierarchy();
        io::write_json(&self.path(SCHEMA), &**cef.schema())?;
        io::write_hierarchy(&self.path(HIERARCHY), hier)?;
        io::write_histogram(&self.path(CEF), &cef)?;

        let inv = self.cfg.invariants;
        let agg = cef.aggregate_all();
        let total = |u: usize| agg[u].iter().sum::<u64>();
        let published = PublishedInvariants {
            root_total: inv.root_total_held().then(|| total(hier.root())),
            level1_totals: inv.level1_totals.then(|| {
                hier.units_at(1)
                    .iter()
                    .map(|&u| (hier.unit(u).id.clone(), total(u)))
                    .collect()
            }),
        };
        io::write_json(&self.path(INVARIANTS), &published)?;

        let queries = generate_workload(
            &self.cfg.workload,
            &cef,
            &SeedStream::new(self.seed).label("workload"),
        )?;
        io::write_workload(&self.path(WORKLOAD), &queries)
    }

    /// MC runs read the confidential file; AMC runs read only PPMF0.
    fn replicates(&self, kind: ReplicateKind) -> Result<()> {
        let (schema, hier) = self.structure()?;
        let (input_file, n) = match kind {
            ReplicateKind::Mc => (CEF, self.cfg.m),
            ReplicateKind::Amc => (PPMF0, self.cfg.s),
        };
        let input = io::read_histogram(&self.path(input_file), &schema, &hier)?;
        let params = self.params(&schema, &hier)?;
        let tda = Tda::new(&params, &schema, &hier)?;
        let dir = self.path(kind.as_str());
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let reports = self.path("solve_reports");
        let entries: Vec<ReplicateEntry> = self.pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let clock = WallClock(Instant::now());
                    let stream = replicate_stream(self.seed, kind, i as u64);
                    let ms = tda.plan().measure(&input, &stream.label("measure"))?;
                    let (h, report) = tda.postprocess(&input, &ms, &stream, &clock)?;
                    let hist = format!("{}/ppmf_{i}.csv", kind.as_str());
                    let units = format!("{}/units_{i}.csv", kind.as_str());
                    io::write_histogram(&self.path(&hist), &h)?;
                    io::write_units(&self.path(&units), &hier, &h.aggregate_all())?;
                    io::write_json(
                        &reports.join(format!("{}_{i}.json", kind.as_str())),
                        &report,
                    )?;
                    if kind == ReplicateKind::Mc && i == self.cfg.ppmf0_index {
                        io::write_nmf(&self.path(NMF0), i as u64, &hier, &ms)?;
                    }
                    Ok(ReplicateEntry {
                        index: i,
                        histogram: FileHash::of(&self.out, &hist)?,
                        units: FileHash::of(&self.out, &units)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        if kind == ReplicateKind::Mc {
            let e = &entries[self.cfg.ppmf0_index];
            let copy = |from: &str, to: &str| {
                fs::copy(self.path(from), self.path(to))
                    .map(drop)
                    .map_err(|e| Error::io(&self.path(to), e))
            };
            copy(&e.histogram.file, PPMF0)?;
            copy(&e.units.file, PPMF0_UNITS)?;
        }
        let manifest = RunManifest {
            kind,
            m_or_s: n,
            master_seed: self.seed,
            params_hash: manifest::params_hash(&params),
            input: match kind {
                ReplicateKind::Mc => None,
                ReplicateKind::Amc => Some(FileHash::of(&self.out, PPMF0)?),
            },
            replicates: entries,
        };
        io::write_json(&self.path(&RunManifest::file_name(kind)), &manifest)
    }

    fn tabulate(&self) -> Result<()> {
        let (schema, hier) = self.structure()?;
        let queries = io::read_workload(&self.path(WORKLOAD))?;
        let ids = query_ids(&queries);
        let tab = Tabulator::new(&queries, &hier, &schema)?;
        let one = |file: &str| -> Result<Vec<u64>> {
            Ok(tab.tabulate(&io::read_histogram(&self.path(file), &schema, &hier)?)?)
        };
        io::write_tabulation(&self.path("tabulations/cef.csv"), &ids, &[one(CEF)?])?;
        io::write_tabulation(&self.path("tabulations/ppmf0.csv"), &ids, &[one(PPMF0)?])?;
        for kind in [ReplicateKind::Mc, ReplicateKind::Amc] {
            let m = manifest::load_verified(&self.out, kind)?;
            let values = self.pool.install(|| {
                m.replicates
                    .par_iter()
                    .map(|r| one(&r.histogram.file))
                    .collect::<Result<Vec<_>>>()
            })?;
            io::write_tabulation(
                &self.path(&format!("tabulations/{}.csv", kind.as_str())),
                &ids,
                &values,
            )?;
        }
        Ok(())
    }

    fn intervals(&self) -> Result<()> {
        let ids = query_ids(&io::read_workload(&self.path(WORKLOAD))?);
        let points = io::read_tabulation(&self.path("tabulations/ppmf0.csv"), &ids)?;
        let amc = by_query(
            &io::read_tabulation(&self.path("tabulations/amc.csv"), &ids)?,
            ids.len(),
        );
        let params = self.cfg.intervals;
        let records = self.pool.install(|| {
            ids.par_iter()
                .zip(&amc)
                .enumerate()
                .map(|(q, (id, v))| Ok(all_intervals(id, points[0][q], v, &params)?))
                .collect::<Result<Vec<_>>>()
        })?;
        io::write_ci(&self.path(CI), &records.concat())
    }

    /// Reads tabulations and intervals only; the confidential answers come
    /// from `tabulations/cef.csv`.
    fn evaluate(&self) -> Result<()> {
        let mc_manifest = manifest::load_verified(&self.out, ReplicateKind::Mc)?;
        let amc_manifest = manifest::load_verified(&self.out, ReplicateKind::Amc)?;
        let hier = io::read_hierarchy(&self.path(HIERARCHY))?;
        let queries = io::read_workload(&self.path(WORKLOAD))?;
        let ids = query_ids(&queries);
        let tab =
            |name: &str| io::read_tabulation(&self.path(&format!("tabulations/{name}.csv")), &ids);
        let cef = tab("cef")?.remove(0);
        let points = tab("ppmf0")?.remove(0);
        let mc = by_query(&tab("mc")?, ids.len());
        let amc = by_query(&tab("amc")?, ids.len());
        if mc.iter().any(|v| v.len() != mc_manifest.m_or_s)
            || amc.iter().any(|v| v.len() != amc_manifest.m_or_s)
        {
            return Err(Error::Integrity(
                "tabulations do not match the run manifests".into(),
            ));
        }
        let truth: Vec<QueryTruth> = geolevels(&queries, &hier)?
            .into_iter()
            .zip(&ids)
            .zip(&cef)
            .map(|((geolevel, id), &c)| QueryTruth {
                query_id: id.clone(),
                geolevel,
                cef: c,
            })
            .collect();
        let records = io::read_ci(&self.path(CI))?;

        let coverage = coverage_table(&records, &truth)?;
        io::write_csv(&self.path("coverage.csv"), &coverage)?;
        io::write_csv(&self.path("widths.csv"), width_summary(&records, &truth)?)?;

        let mom = |vals: &[Vec<f64>], refs: &[u64]| -> Result<Vec<_>> {
            Ok(vals
                .iter()
                .zip(refs)
                .map(|(v, &r)| moments(v, r as f64))
                .collect::<std::result::Result<Vec<_>, _>>()?)
        };
        let comparison = moment_comparison(&truth, &mom(&mc, &cef)?, &mom(&amc, &points)?)?;
        io::write_csv(&self.path("moment_comparison.csv"), &comparison)?;
        io::write_csv(
            &self.path("bias_percentiles.csv"),
            bias_percentiles(&comparison),
        )?;

        let sizes: Vec<usize> = self
            .cfg
            .subset_sizes
            .iter()
            .copied()
            .filter(|&n| n <= self.cfg.s)
            .collect();
        let sensitivity = iteration_sensitivity(
            &amc,
            &points,
            &truth,
            &sizes,
            self.cfg.sensitivity_ci,
            &self.cfg.intervals,
            &SeedStream::new(self.seed).label("sensitivity"),
        )?;
        io::write_csv_with_header(
            &self.path("sensitivity.csv"),
            &[
                "iterations",
                "geolevel",
                "size_group",
                "ci_type",
                "n_queries",
                "proportion_containing_cef",
                "group_share",
            ],
            sensitivity.iter().flat_map(|t| {
                t.rows
                    .iter()
                    .map(|row| SensitivityRow::new(t.iterations, row))
            }),
        )?;

        let zeros: Vec<_> = comparison
            .iter()
            .zip(&truth)
            .filter(|(_, t)| t.cef == 0)
            .map(|(r, _)| r)
            .collect();
        let summary = Summary {
            queries: ids.len(),
            mc_replicates: mc_manifest.m_or_s,
            amc_replicates: amc_manifest.m_or_s,
            coverage: CiType::ALL
                .iter()
                .map(|&t| Ok((t, aggregate_coverage(&records, &truth, t)?.0)))
                .collect::<Result<_>>()?,
            min_size_group_coverage: CiType::ALL
                .iter()
                .map(|&t| (t, min_group_coverage(&records, &truth, t)))
                .collect(),
            fidelity: fidelity(&comparison),
            zero_count: ZeroCount {
                queries: zeros.len(),
                negative_bias_mc: zeros.iter().filter(|r| r.bias_mc < 0.0).count(),
                negative_bias_amc: zeros.iter().filter(|r| r.bias_amc < 0.0).count(),
                min_bias_mc: zeros
                    .iter()
                    .map(|r| r.bias_mc)
                    .fold(f64::INFINITY, f64::min),
                min_bias_amc: zeros
                    .iter()
                    .map(|r| r.bias_amc)
                    .fold(f64::INFINITY, f64::min),
            },
            sensitivity: sensitivity
                .iter()
                .map(|t| (t.iterations, t.aggregate))
                .collect(),
        };
        io::write_json(&self.path(SUMMARY), &summary)
    }
}

fn query_ids(queries: &[Query]) -> Vec<String> {
    queries.iter().map(|q| q.id.clone()).collect()
}

/// `[replicate][query]` to `[query][replicate]` as reals.
fn by_query(values: &[Vec<u64>], queries: usize) -> Vec<Vec<f64>> {
    (0..queries)
        .map(|q| values.iter().map(|r| r[q] as f64).collect())
        .collect()
}

/// Coverage of `ty` in the worst size group, pooling geolevels.
pub fn min_group_coverage(records: &[CiRecord], truth: &[QueryTruth], ty: CiType) -> f64 {
    let cef: BTreeMap<&str, &QueryTruth> = truth.iter().map(|t| (t.query_id.as_str(), t)).collect();
    let mut groups: BTreeMap<_, (usize, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.ci_type == ty) {
        if let Some(t) = cef.get(r.query_id.as_str()) {
            let e = groups.entry(t.size_group()).or_default();
            e.0 += usize::from(r.bounds().contains(t.cef));
            e.1 += 1;
        }
    }
    groups
        .values()
        .map(|&(hit, n)| hit as f64 / n as f64)
        .fold(f64::INFINITY, f64::min)
}
