//! Dense exhaustive active-set oracle for the per-level least-squares fit.
//!
//! Every support set is tried: the equality-constrained problem on the free
//! coordinates is solved through its KKT system, infeasible candidates are
//! dropped, and the cheapest feasible candidate wins. The objective is
//! strictly convex, so that candidate is the minimizer.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use tdamc_core::noise::{MeasurementPlan, NoisyMeasurement};
use tdamc_core::topdown::RIDGE;

/// min ½ xᵀHx + cᵀx  subject to  Ax = b, x ≥ 0.
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl DenseQp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.c.dot(x)
    }

    /// The fit of `children` (one cell vector each, flattened child-major).
    pub fn from_measurements(
        plan: &MeasurementPlan,
        level: usize,
        cells: usize,
        children: &[Vec<&NoisyMeasurement>],
        parent: Option<&[u64]>,
        child_totals: Option<&[u64]>,
    ) -> Self {
        let r = children.len();
        let n = r * cells;
        let mut h = DMatrix::<f64>::identity(n, n) * RIDGE;
        let mut c = DVector::<f64>::zeros(n);
        for (ci, ms) in children.iter().enumerate() {
            for m in ms {
                let g = &plan.groups(level)[m.group_index];
                // Indicator matrix of the marginal: A[q][i] = 1 when cell i
                // falls in marginal cell q.
                let mut a = DMatrix::<f64>::zeros(g.size, cells);
                for (i, &q) in g.cell_map.iter().enumerate() {
                    a[(q, i)] = 1.0;
                }
                let w = 1.0 / m.variance;
                let y = DVector::from_vec(m.answers.clone());
                let off = ci * cells;
                let hh = a.transpose() * &a * w;
                let cc = a.transpose() * y * (-w);
                for i in 0..cells {
                    c[off + i] += cc[i];
                    for j in 0..cells {
                        h[(off + i, off + j)] += hh[(i, j)];
                    }
                }
            }
        }
        let mut rows: Vec<(Vec<usize>, f64)> = Vec::new();
        if let Some(p) = parent {
            for j in 0..cells {
                rows.push(((0..r).map(|ci| ci * cells + j).collect(), p[j] as f64));
            }
        }
        if let Some(t) = child_totals {
            for ci in 0..r {
                rows.push(((0..cells).map(|j| ci * cells + j).collect(), t[ci] as f64));
            }
        }
        let mut a = DMatrix::<f64>::zeros(rows.len(), n);
        let mut b = DVector::<f64>::zeros(rows.len());
        for (k, (idx, rhs)) in rows.into_iter().enumerate() {
            for i in idx {
                a[(k, i)] = 1.0;
            }
            b[k] = rhs;
        }
        Self { h, c, a, b }
    }

    pub fn solve_exhaustive(&self) -> DVector<f64> {
        let n = self.c.len();
        let m = self.b.len();
        assert!(n <= 16, "exhaustive oracle is for tiny instances");
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0u32..(1 << n) {
            let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let f = free.len();
            let mut x = DVector::<f64>::zeros(n);
            if f > 0 {
                let mut k = DMatrix::<f64>::zeros(f + m, f + m);
                let mut rhs = DVector::<f64>::zeros(f + m);
                for (p, &i) in free.iter().enumerate() {
                    rhs[p] = -self.c[i];
                    for (q, &j) in free.iter().enumerate() {
                        k[(p, q)] = self.h[(i, j)];
                    }
                    for e in 0..m {
                        k[(p, f + e)] = self.a[(e, i)];
                        k[(f + e, p)] = self.a[(e, i)];
                    }
                }
                for e in 0..m {
                    rhs[f + e] = self.b[e];
                }
                let z = match k.clone().svd(true, true).solve(&rhs, 1e-12) {
                    Ok(z) => z,
                    Err(_) => continue,
                };
                let kkt = (&k * &z - &rhs).amax();
                if kkt > 1e-7 * (1.0 + rhs.amax()) {
                    continue;
                }
                for (p, &i) in free.iter().enumerate() {
                    x[i] = z[p];
                }
            }
            if x.iter().any(|&v| v < -1e-9) {
                continue;
            }
            if m > 0 && (&self.a * &x - &self.b).amax() > 1e-7 * (1.0 + self.b.amax()) {
                continue;
            }
            let obj = self.objective(&x);
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, x));
            }
        }
        best.expect("feasible instance").1
    }
}

/// Euclidean projection of `y` onto `{x >= 0, sum x = total}`.
pub fn simplex_projection(y: &[f64], total: f64) -> Vec<f64> {
    if total == 0.0 {
        return vec![0.0; y.len()];
    }
    let mut s = y.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &v) in s.iter().enumerate() {
        acc += v;
        let t = (acc - total) / (j + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// A random fit with at most 3 children and 2 to 4 cells (a schema needs
/// at least two cells), drawn from `seed`.
pub struct Instance {
    pub plan: MeasurementPlan,
    pub cells: usize,
    pub measurements: Vec<NoisyMeasurement>,
    pub children: usize,
    pub parent: Option<Vec<u64>>,
    pub totals: Option<Vec<u64>>,
}

impl Instance {
    pub fn random(seed: u64) -> Self {
        use rand::Rng;
        use std::sync::Arc;
        use tdamc_core::model::{GeoHierarchy, Histogram, Schema, Universe};
        use tdamc_core::noise::{BudgetAllocation, QueryGroup};
        use tdamc_core::rng::SeedStream;

        let stream = SeedStream::new(seed).label("qp-instance");
        let mut rng = stream.rng();
        let r = rng.random_range(1..=3usize);
        let k = rng.random_range(2..=4usize);
        let schema = if k == 4 {
            Schema::from_pairs(Universe::Person, &[("a", 2), ("b", 2)]).unwrap()
        } else {
            Schema::from_pairs(Universe::Person, &[("a", k)]).unwrap()
        };
        let levels = vec!["root".to_string(), "block".to_string()];
        let hier = GeoHierarchy::from_fanouts(levels.clone(), &[r]).unwrap();
        let mut groups = vec![QueryGroup::total(), QueryGroup::detailed(&schema)];
        if k == 4 {
            groups.push(QueryGroup::new("a", &["a"]));
            groups.push(QueryGroup::new("b", &["b"]));
        }
        let alloc = BudgetAllocation::uniform(rng.random_range(0.05..2.0), &levels, &groups);
        let plan = MeasurementPlan::new(&alloc, &schema, &hier).unwrap();
        let truth: Vec<Vec<u64>> = (0..r)
            .map(|_| (0..k).map(|_| rng.random_range(0..=4u64)).collect())
            .collect();
        let h = Histogram::from_block_vectors(Arc::new(schema), Arc::new(hier), &truth).unwrap();
        let measurements = plan.measure(&h, &stream.label("measure")).unwrap();
        let mode = rng.random_range(0..4u8);
        let parent =
            (mode & 1 != 0).then(|| (0..k).map(|j| truth.iter().map(|v| v[j]).sum()).collect());
        let totals = (mode & 2 != 0).then(|| truth.iter().map(|v| v.iter().sum()).collect());
        Self {
            plan,
            cells: k,
            measurements,
            children: r,
            parent,
            totals,
        }
    }

    /// Measurements of each child, in child order.
    pub fn by_child(&self) -> Vec<Vec<&NoisyMeasurement>> {
        // Blocks are units 1..=r under a single root.
        (1..=self.children)
            .map(|u| {
                self.measurements
                    .iter()
                    .filter(|m| m.unit_index == u)
                    .collect()
            })
            .collect()
    }

    /// Largest coordinate gap between `solve_level` and the oracle.
    pub fn max_gap(&self) -> f64 {
        let children = self.by_child();
        let got = tdamc_core::topdown::solve_level(
            &self.plan,
            1,
            self.cells,
            &children,
            self.parent.as_deref(),
            self.totals.as_deref(),
        )
        .unwrap();
        let want = DenseQp::from_measurements(
            &self.plan,
            1,
            self.cells,
            &children,
            self.parent.as_deref(),
            self.totals.as_deref(),
        )
        .solve_exhaustive();
        got.values
            .iter()
            .flatten()
            .zip(want.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
