//! Top-down post-processing of noisy measurements into a non-negative,
//! integer, hierarchically consistent histogram.

mod qp;
mod rounding;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GeoHierarchy, Histogram, Schema};
use crate::noise::{BudgetAllocation, MeasurementPlan, NoisyMeasurement};
use crate::rng::SeedStream;

pub use qp::{solve as solve_table_qp, QpSolution, TableQp};
pub use rounding::integerize;

/// Ridge added to every least-squares block so each one is strictly convex.
pub const RIDGE: f64 = 1e-9;

/// Scaled KKT residual above which a subproblem is flagged in the report.
const NONCONVERGED: f64 = 1e-6;

/// Counts that are published without noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Invariants {
    /// Total count at the root.
    pub root_total: bool,
    /// Total count of every unit one level below the root. Implies `root_total`.
    pub level1_totals: bool,
}

impl Invariants {
    pub fn root_total_held(&self) -> bool {
        self.root_total || self.level1_totals
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdaParams {
    pub allocation: BudgetAllocation,
    #[serde(default)]
    pub invariants: Invariants,
}

/// Diagnostics for one geographic level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: String,
    pub subproblems: usize,
    pub iterations: usize,
    pub max_residual: f64,
    /// Subproblems whose solution came from the exact support solve.
    pub polished: usize,
    /// Some subproblem stopped before reaching the solver tolerance.
    pub infeasible: bool,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub levels: Vec<LevelReport>,
}

/// Source of wall-clock time. The core has no clock of its own.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Clock that always reads zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

/// Real-valued solution of one subproblem.
#[derive(Clone, Debug)]
pub struct LevelSolution {
    /// One cell vector per child.
    pub values: Vec<Vec<f64>>,
    pub iterations: usize,
    pub residual: f64,
    pub polished: bool,
}

/// Weighted least-squares fit of the children of one unit.
///
/// `children[c]` holds the measurements of child `c` (all at `level`). The
/// fit is non-negative, its children sum to `parent` cell by cell when a
/// parent is given, and child `c` sums to `child_totals[c]` when totals are
/// given.
pub fn solve_level(
    plan: &MeasurementPlan,
    level: usize,
    cells: usize,
    children: &[Vec<&NoisyMeasurement>],
    parent: Option<&[u64]>,
    child_totals: Option<&[u64]>,
) -> Result<LevelSolution> {
    let groups = plan.groups(level);
    let mut hessians = Vec::with_capacity(children.len());
    let mut linear = Vec::with_capacity(children.len());
    for ms in children {
        let mut h = vec![0.0; cells * cells];
        let mut c = vec![0.0; cells];
        for i in 0..cells {
            h[i * cells + i] = RIDGE;
        }
        for m in ms {
            if m.level != level {
                return Err(Error::Consistency(format!(
                    "measurement of `{}` belongs to level {}, not {level}",
                    m.unit, m.level
                )));
            }
            let g = groups
                .get(m.group_index)
                .ok_or_else(|| Error::Consistency(format!("unknown query group `{}`", m.group)))?;
            if g.cell_map.len() != cells || m.answers.len() != g.size {
                return Err(Error::Consistency(format!(
                    "measurement `{}` does not match the schema",
                    m.group
                )));
            }
            let w = 1.0 / m.variance;
            for i in 0..cells {
                c[i] -= w * m.answers[g.cell_map[i]];
                for j in 0..cells {
                    if g.cell_map[i] == g.cell_map[j] {
                        h[i * cells + j] += w;
                    }
                }
            }
        }
        hessians.push(h);
        linear.push(c);
    }
    let to_f64 = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let qp = TableQp {
        rows: children.len(),
        cols: cells,
        hessians,
        linear,
        col_targets: parent.map(to_f64),
        row_targets: child_totals.map(to_f64),
    };
    let s = qp::solve(&qp)?;
    Ok(LevelSolution {
        values: s.x,
        iterations: s.iterations,
        residual: s.residual,
        polished: s.polished,
    })
}

/// Reusable top-down run for one schema, hierarchy and parameter set.
pub struct Tda {
    plan: MeasurementPlan,
    invariants: Invariants,
    cells: usize,
}

impl Tda {
    pub fn new(params: &TdaParams, schema: &Schema, hierarchy: &GeoHierarchy) -> Result<Self> {
        Ok(Self {
            plan: MeasurementPlan::new(&params.allocation, schema, hierarchy)?,
            invariants: params.invariants,
            cells: schema.cell_count(),
        })
    }

    pub fn plan(&self) -> &MeasurementPlan {
        &self.plan
    }

    /// Measures `input` and post-processes the measurements.
    pub fn run(
        &self,
        input: &Histogram,
        stream: &SeedStream,
        clock: &dyn Clock,
    ) -> Result<(Histogram, SolveReport)> {
        let measurements = self.plan.measure(input, &stream.label("measure"))?;
        self.postprocess(input, &measurements, stream, clock)
    }

    /// Post-processes given measurements. `input` is read only for invariants.
    pub fn postprocess(
        &self,
        input: &Histogram,
        measurements: &[NoisyMeasurement],
        stream: &SeedStream,
        clock: &dyn Clock,
    ) -> Result<(Histogram, SolveReport)> {
        let hier = input.hierarchy();
        let k = self.cells;
        let mut by_unit: Vec<Vec<&NoisyMeasurement>> = vec![Vec::new(); hier.units().len()];
        for m in measurements {
            by_unit
                .get_mut(m.unit_index)
                .ok_or_else(|| Error::UnknownUnit(m.unit.clone()))?
                .push(m);
        }
        let truth = input.aggregate_all();
        let round_stream = stream.label("round");
        let mut solved: Vec<Option<Vec<u64>>> = vec![None; hier.units().len()];
        let mut report = SolveReport::default();

        for level in 0..hier.depth() {
            let start = clock.now_ms();
            let mut lr = LevelReport {
                level: hier.levels()[level].clone(),
                ..LevelReport::default()
            };
            let parents: Vec<Option<usize>> = if level == 0 {
                vec![None]
            } else {
                hier.units_at(level - 1).iter().map(|&p| Some(p)).collect()
            };
            for parent in parents {
                let children: Vec<usize> = match parent {
                    None => vec![hier.root()],
                    Some(p) => hier.children(p).to_vec(),
                };
                let parent_vec = parent.map(|p| solved[p].clone().expect("parent solved first"));
                let totals: Option<Vec<u64>> = if level == 0 && self.invariants.root_total_held() {
                    Some(vec![truth[hier.root()].iter().sum()])
                } else if level == 1 && self.invariants.level1_totals {
                    Some(children.iter().map(|&c| truth[c].iter().sum()).collect())
                } else {
                    None
                };
                let child_ms: Vec<Vec<&NoisyMeasurement>> =
                    children.iter().map(|&c| by_unit[c].clone()).collect();
                let sol = solve_level(
                    &self.plan,
                    level,
                    k,
                    &child_ms,
                    parent_vec.as_deref(),
                    totals.as_deref(),
                )?;
                let key = parent.map_or("", |p| hier.unit(p).id.as_str());
                let mut rng = round_stream.label(key).rng();
                let ints = integerize(
                    &sol.values,
                    parent_vec.as_deref(),
                    totals.as_deref(),
                    &mut rng,
                )?;
                for (&c, v) in children.iter().zip(ints) {
                    solved[c] = Some(v);
                }
                lr.subproblems += 1;
                lr.iterations += sol.iterations;
                lr.max_residual = lr.max_residual.max(sol.residual);
                lr.polished += usize::from(sol.polished);
                lr.infeasible |= sol.residual > NONCONVERGED;
            }
            lr.wall_time_ms = clock.now_ms() - start;
            report.levels.push(lr);
        }

        let vectors: Vec<Vec<u64>> = hier
            .blocks()
            .iter()
            .map(|&b| solved[b].clone().expect("every block solved"))
            .collect();
        let out = Histogram::from_block_vectors(input.schema().clone(), hier.clone(), &vectors)?;
        // Internal units were fixed before their children; the children must
        // reproduce them exactly.
        for (u, agg) in out.aggregate_all().iter().enumerate() {
            if solved[u].as_ref() != Some(agg) {
                return Err(Error::Consistency(format!(
                    "children of `{}` do not sum to its solved counts",
                    hier.unit(u).id
                )));
            }
        }
        Ok((out, report))
    }
}

/// One top-down run of `input` under `params`.
pub fn tda_run(
    input: &Histogram,
    params: &TdaParams,
    stream: &SeedStream,
) -> Result<(Histogram, SolveReport)> {
    Tda::new(params, input.schema(), input.hierarchy())?.run(input, stream, &NoClock)
}
