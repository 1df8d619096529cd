//! Convex QP over a non-negative table with optional row and column sums.
//!
//! ```text
//! minimize   sum_r  1/2 x_r' H_r x_r + c_r' x_r
//! subject to x >= 0
//!            sum_r x_rk = col_targets[k]   (when given)
//!            sum_k x_rk = row_targets[r]   (when given)
//! ```
//!
//! Every `H_r` must be symmetric positive definite. The solver runs a
//! Mehrotra predictor-corrector interior-point method, then polishes the
//! result by solving the equality-constrained problem on the identified
//! support, which gives exact zeros and machine-precision constraint sums.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const TOLERANCE: f64 = 1e-10;

/// Problem data. `hessians[r]` is `cols x cols`, row-major.
#[derive(Clone, Debug)]
pub struct TableQp {
    pub rows: usize,
    pub cols: usize,
    pub hessians: Vec<Vec<f64>>,
    pub linear: Vec<Vec<f64>>,
    pub col_targets: Option<Vec<f64>>,
    pub row_targets: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    /// `rows x cols` minimizer.
    pub x: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Scaled KKT residual of the returned point.
    pub residual: f64,
    pub polished: bool,
    pub objective: f64,
}

impl TableQp {
    pub fn objective(&self, x: &[Vec<f64>]) -> f64 {
        let k = self.cols;
        let mut obj = 0.0;
        for r in 0..self.rows {
            let h = &self.hessians[r];
            for i in 0..k {
                let mut hx = 0.0;
                for j in 0..k {
                    hx += h[i * k + j] * x[r][j];
                }
                obj += x[r][i] * (0.5 * hx + self.linear[r][i]);
            }
        }
        obj
    }

    fn validate(&self) -> Result<()> {
        let k = self.cols;
        if self.hessians.len() != self.rows || self.linear.len() != self.rows {
            return Err(Error::Parameter("QP row data has the wrong length".into()));
        }
        if self.hessians.iter().any(|h| h.len() != k * k)
            || self.linear.iter().any(|c| c.len() != k)
        {
            return Err(Error::Parameter("QP block has the wrong size".into()));
        }
        let check = |t: &Option<Vec<f64>>, n: usize, what: &str| -> Result<()> {
            if let Some(t) = t {
                if t.len() != n {
                    return Err(Error::Parameter(format!(
                        "{what} targets have the wrong length"
                    )));
                }
                if t.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "{what} targets must be non-negative"
                    )));
                }
            }
            Ok(())
        };
        check(&self.col_targets, k, "column")?;
        check(&self.row_targets, self.rows, "row")?;
        if let (Some(c), Some(r)) = (&self.col_targets, &self.row_targets) {
            let (sc, sr): (f64, f64) = (c.iter().sum(), r.iter().sum());
            if libm::fabs(sc - sr) > 1e-9 * (1.0 + sc) {
                return Err(Error::Consistency(format!(
                    "row targets sum to {sr} but column targets sum to {sc}"
                )));
            }
        }
        Ok(())
    }
}

/// Free variables and the independent equality constraints over them.
struct Reduced {
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// Constraint index of each variable's column sum, if any.
    col_con: Vec<Option<usize>>,
    /// Constraint index of each variable's row sum, if any.
    row_con: Vec<Option<usize>>,
    targets: Vec<f64>,
    /// Per free row: `kc x kc` Hessian block and linear term.
    h: Vec<Vec<f64>>,
    c: Vec<f64>,
}

impl Reduced {
    fn n(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    fn m(&self) -> usize {
        self.targets.len()
    }

    fn kc(&self) -> usize {
        self.cols.len()
    }

    fn build(qp: &TableQp) -> Self {
        let keep = |t: &Option<Vec<f64>>, n: usize| -> Vec<usize> {
            match t {
                Some(t) => (0..n).filter(|&i| t[i] > 0.0).collect(),
                None => (0..n).collect(),
            }
        };
        let rows = keep(&qp.row_targets, qp.rows);
        let cols = keep(&qp.col_targets, qp.cols);
        let (nr, kc) = (rows.len(), cols.len());
        let mut targets = Vec::new();
        let mut col_con = vec![None; nr * kc];
        let mut row_con = vec![None; nr * kc];
        if let Some(t) = &qp.col_targets {
            if nr > 0 {
                for (j, &k) in cols.iter().enumerate() {
                    for i in 0..nr {
                        col_con[i * kc + j] = Some(targets.len());
                    }
                    targets.push(t[k]);
                }
            }
        }
        if let Some(t) = &qp.row_targets {
            // With both families present one row sum is implied by the others.
            let skip_last = qp.col_targets.is_some();
            for (i, &r) in rows.iter().enumerate() {
                if skip_last && i + 1 == nr {
                    break;
                }
                if kc == 0 {
                    continue;
                }
                for j in 0..kc {
                    row_con[i * kc + j] = Some(targets.len());
                }
                targets.push(t[r]);
            }
        }
        let k = qp.cols;
        let mut h = Vec::with_capacity(nr);
        let mut c = Vec::with_capacity(nr * kc);
        for &r in &rows {
            let full = &qp.hessians[r];
            let mut block = vec![0.0; kc * kc];
            for (a, &ka) in cols.iter().enumerate() {
                for (b, &kb) in cols.iter().enumerate() {
                    block[a * kc + b] = full[ka * k + kb];
                }
                c.push(qp.linear[r][ka]);
            }
            h.push(block);
        }
        Self {
            rows,
            cols,
            col_con,
            row_con,
            targets,
            h,
            c,
        }
    }

    fn hess_mul(&self, x: &[f64]) -> Vec<f64> {
        let kc = self.kc();
        let mut out = vec![0.0; x.len()];
        for (r, block) in self.h.iter().enumerate() {
            let off = r * kc;
            for i in 0..kc {
                let mut s = 0.0;
                for j in 0..kc {
                    s += block[i * kc + j] * x[off + j];
                }
                out[off + i] = s;
            }
        }
        out
    }

    fn e_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for (i, &xi) in x.iter().enumerate() {
            if let Some(c) = self.col_con[i] {
                out[c] += xi;
            }
            if let Some(c) = self.row_con[i] {
                out[c] += xi;
            }
        }
        out
    }

    fn et_mul(&self, y: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.col_con[i].map_or(0.0, |c| y[c]) + self.row_con[i].map_or(0.0, |c| y[c]))
            .collect()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.hess_mul(x);
        x.iter()
            .zip(&hx)
            .zip(&self.c)
            .map(|((xi, hi), ci)| xi * (0.5 * hi + ci))
            .sum()
    }

    /// Strictly positive point satisfying the equality constraints.
    fn interior_start(&self, qp: &TableQp) -> Vec<f64> {
        let (nr, kc) = (self.rows.len(), self.kc());
        let mut x = vec![1.0; nr * kc];
        match (&qp.col_targets, &qp.row_targets) {
            (Some(ct), Some(rt)) => {
                let total: f64 = self.cols.iter().map(|&k| ct[k]).sum();
                for (i, &r) in self.rows.iter().enumerate() {
                    for (j, &k) in self.cols.iter().enumerate() {
                        x[i * kc + j] = rt[r] * ct[k] / total;
                    }
                }
            }
            (Some(ct), None) => {
                for i in 0..nr {
                    for (j, &k) in self.cols.iter().enumerate() {
                        x[i * kc + j] = ct[k] / nr as f64;
                    }
                }
            }
            (None, Some(rt)) => {
                for (i, &r) in self.rows.iter().enumerate() {
                    for j in 0..kc {
                        x[i * kc + j] = rt[r] / kc as f64;
                    }
                }
            }
            (None, None) => {}
        }
        x
    }
}

/// In-place Cholesky of an SPD `n x n` matrix (lower triangle).
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Cholesky with a growing diagonal shift until it succeeds.
fn robust_cholesky(a: &[f64], n: usize) -> Vec<f64> {
    let scale = (0..n)
        .map(|i| libm::fabs(a[i * n + i]))
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut shift = 0.0;
    loop {
        let mut l = a.to_vec();
        for i in 0..n {
            l[i * n + i] += shift;
        }
        if cholesky(&mut l, n) {
            return l;
        }
        shift = if shift == 0.0 {
            1e-14 * scale
        } else {
            shift * 10.0
        };
    }
}

/// Solves `A y = b` for symmetric PSD `A` using diagonally pivoted Cholesky.
/// Directions with negligible pivots get a zero component.
fn psd_solve(a: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut w = a.to_vec();
    let mut piv: Vec<usize> = (0..n).collect();
    let max_diag = (0..n).map(|i| w[i * n + i]).fold(0.0, f64::max);
    let tol = 1e-12 * max_diag.max(1e-300);
    let mut rank = n;
    for j in 0..n {
        let (p, d) = (j..n)
            .map(|i| (i, w[i * n + i]))
            .fold(
                (j, f64::NEG_INFINITY),
                |acc, v| if v.1 > acc.1 { v } else { acc },
            );
        if d <= tol {
            rank = j;
            break;
        }
        if p != j {
            for k in 0..n {
                w.swap(j * n + k, p * n + k);
            }
            for k in 0..n {
                w.swap(k * n + j, k * n + p);
            }
            piv.swap(j, p);
        }
        let d = libm::sqrt(w[j * n + j]);
        w[j * n + j] = d;
        for i in j + 1..n {
            w[i * n + j] /= d;
        }
        for k in j + 1..n {
            for i in k..n {
                w[i * n + k] -= w[i * n + j] * w[k * n + j];
            }
        }
    }
    let mut z: Vec<f64> = piv.iter().map(|&p| b[p]).collect();
    for i in 0..rank {
        let mut s = z[i];
        for k in 0..i {
            s -= w[i * n + k] * z[k];
        }
        z[i] = s / w[i * n + i];
    }
    for i in (0..rank).rev() {
        let mut s = z[i];
        for k in i + 1..rank {
            s -= w[k * n + i] * z[k];
        }
        z[i] = s / w[i * n + i];
    }
    let mut y = vec![0.0; n];
    for i in 0..rank {
        y[piv[i]] = z[i];
    }
    y
}

/// Factorization of the reduced Newton system for one diagonal `D = H + diag(d)`.
struct Newton<'a> {
    p: &'a Reduced,
    /// Per free row: Cholesky factor of its block of `D`.
    blocks: Vec<Vec<f64>>,
    schur: Vec<f64>,
}

impl<'a> Newton<'a> {
    fn new(p: &'a Reduced, diag: &[f64]) -> Self {
        let kc = p.kc();
        let m = p.m();
        let mut blocks = Vec::with_capacity(p.rows.len());
        let mut schur = vec![0.0; m * m];
        let mut col = vec![0.0; kc];
        for (r, h) in p.h.iter().enumerate() {
            let off = r * kc;
            let mut d = h.clone();
            for i in 0..kc {
                d[i * kc + i] += diag[off + i];
            }
            let l = robust_cholesky(&d, kc);
            // Explicit inverse of the block, column by column.
            for j in 0..kc {
                col.iter_mut().for_each(|v| *v = 0.0);
                col[j] = 1.0;
                cholesky_solve(&l, kc, &mut col);
                for i in 0..kc {
                    let v = col[i];
                    let (ia, ja) = (off + i, off + j);
                    for ci in [p.col_con[ia], p.row_con[ia]].into_iter().flatten() {
                        for cj in [p.col_con[ja], p.row_con[ja]].into_iter().flatten() {
                            schur[ci * m + cj] += v;
                        }
                    }
                }
            }
            blocks.push(l);
        }
        let schur = if m > 0 {
            robust_cholesky(&schur, m)
        } else {
            schur
        };
        Self { p, blocks, schur }
    }

    fn apply_dinv(&self, v: &mut [f64]) {
        let kc = self.p.kc();
        for (r, l) in self.blocks.iter().enumerate() {
            cholesky_solve(l, kc, &mut v[r * kc..(r + 1) * kc]);
        }
    }

    /// Solves `D dx - E' dy = rhs1`, `E dx = rhs2`.
    fn solve(&self, rhs1: &[f64], rhs2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut t = rhs1.to_vec();
        self.apply_dinv(&mut t);
        let et = self.p.e_mul(&t);
        let m = self.p.m();
        let mut dy: Vec<f64> = rhs2.iter().zip(&et).map(|(a, b)| a - b).collect();
        if m > 0 {
            cholesky_solve(&self.schur, m, &mut dy);
        }
        let mut dx: Vec<f64> = rhs1
            .iter()
            .zip(self.p.et_mul(&dy))
            .map(|(a, b)| a + b)
            .collect();
        self.apply_dinv(&mut dx);
        (dx, dy)
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(1.0, f64::min)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(libm::fabs(*b)))
}

struct IpmResult {
    x: Vec<f64>,
    z: Vec<f64>,
    iterations: usize,
    residual: f64,
}

fn interior_point(p: &Reduced, x0: Vec<f64>) -> IpmResult {
    let n = p.n();
    let m = p.m();
    let mut x = x0;
    let mut y = vec![0.0; m];
    let g0 = {
        let mut g = p.hess_mul(&x);
        g.iter_mut().zip(&p.c).for_each(|(g, c)| *g += c);
        g
    };
    let zscale = inf_norm(&g0).max(1.0);
    let mut z: Vec<f64> = g0
        .iter()
        .map(|g| libm::fabs(*g).max(1e-2 * zscale))
        .collect();
    let fnorm = 1.0 + inf_norm(&p.targets);
    let cnorm = 1.0 + inf_norm(&p.c);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        let hx = p.hess_mul(&x);
        let ety = p.et_mul(&y);
        let rd: Vec<f64> = (0..n).map(|i| hx[i] + p.c[i] - ety[i] - z[i]).collect();
        let ex = p.e_mul(&x);
        let rp: Vec<f64> = (0..m).map(|i| ex[i] - p.targets[i]).collect();
        let gap: f64 = x.iter().zip(&z).map(|(a, b)| a * b).sum();
        let obj = p.objective(&x);
        let pres = inf_norm(&rp) / fnorm;
        let dres = inf_norm(&rd) / cnorm;
        let gres = gap / (1.0 + libm::fabs(obj));
        residual = pres.max(dres).max(gres);
        if residual <= TOLERANCE {
            break;
        }
        iterations += 1;
        let mu = gap / n as f64;
        let diag: Vec<f64> = (0..n).map(|i| z[i] / x[i]).collect();
        let newton = Newton::new(p, &diag);
        let rhs2: Vec<f64> = rp.iter().map(|v| -v).collect();

        // Predictor.
        let rhs1: Vec<f64> = (0..n).map(|i| -rd[i] - z[i]).collect();
        let (dx_a, _) = newton.solve(&rhs1, &rhs2);
        let dz_a: Vec<f64> = (0..n).map(|i| -z[i] - diag[i] * dx_a[i]).collect();
        let ap = max_step(&x, &dx_a);
        let ad = max_step(&z, &dz_a);
        let mu_aff: f64 = (0..n)
            .map(|i| (x[i] + ap * dx_a[i]) * (z[i] + ad * dz_a[i]))
            .sum::<f64>()
            / n as f64;
        let sigma = libm::pow(mu_aff / mu, 3.0).min(1.0);

        // Corrector.
        let rc: Vec<f64> = (0..n)
            .map(|i| x[i] * z[i] + dx_a[i] * dz_a[i] - sigma * mu)
            .collect();
        let rhs1: Vec<f64> = (0..n).map(|i| -rd[i] - rc[i] / x[i]).collect();
        let (dx, dy) = newton.solve(&rhs1, &rhs2);
        let dz: Vec<f64> = (0..n).map(|i| (-rc[i] - z[i] * dx[i]) / x[i]).collect();
        let alpha = (0.995 * max_step(&x, &dx))
            .min(0.995 * max_step(&z, &dz))
            .min(1.0);
        for i in 0..n {
            x[i] += alpha * dx[i];
            z[i] += alpha * dz[i];
        }
        for i in 0..m {
            y[i] += alpha * dy[i];
        }
    }
    IpmResult {
        x,
        z,
        iterations,
        residual,
    }
}

/// Solves the equality-constrained problem with `active` variables fixed at
/// zero. Returns `None` when the support cannot satisfy the constraints.
fn polish(p: &Reduced, active: &[bool]) -> Option<(Vec<f64>, f64)> {
    let kc = p.kc();
    let m = p.m();
    let n = p.n();
    // Per-row factor of H restricted to free variables.
    let mut factors = Vec::with_capacity(p.rows.len());
    for (r, h) in p.h.iter().enumerate() {
        let free: Vec<usize> = (0..kc).filter(|&j| !active[r * kc + j]).collect();
        let f = free.len();
        let mut sub = vec![0.0; f * f];
        for (a, &ja) in free.iter().enumerate() {
            for (b, &jb) in free.iter().enumerate() {
                sub[a * f + b] = h[ja * kc + jb];
            }
        }
        let l = robust_cholesky(&sub, f);
        factors.push((free, l));
    }
    let hinv = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (r, (free, l)) in factors.iter().enumerate() {
            let mut b: Vec<f64> = free.iter().map(|&j| v[r * kc + j]).collect();
            cholesky_solve(l, free.len(), &mut b);
            for (bi, &j) in b.iter().zip(free) {
                out[r * kc + j] = *bi;
            }
        }
        out
    };
    // S = E_F H_FF^-1 E_F'
    let mut schur = vec![0.0; m * m];
    for j in 0..m {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        let mut col = p.et_mul(&e);
        col.iter_mut().zip(active).for_each(|(v, a)| {
            if *a {
                *v = 0.0
            }
        });
        let s = p.e_mul(&hinv(&col));
        for i in 0..m {
            schur[i * m + j] = s[i];
        }
    }
    let ehc = p.e_mul(&hinv(&p.c));
    let rhs: Vec<f64> = (0..m).map(|i| p.targets[i] + ehc[i]).collect();
    let y = if m > 0 {
        psd_solve(&schur, m, &rhs)
    } else {
        Vec::new()
    };
    let mut v = p.et_mul(&y);
    v.iter_mut().zip(&p.c).for_each(|(v, c)| *v -= c);
    v.iter_mut().zip(active).for_each(|(v, a)| {
        if *a {
            *v = 0.0
        }
    });
    let mut x = hinv(&v);
    let xscale = 1.0 + inf_norm(&x);
    if x.iter().any(|&xi| xi < -1e-9 * xscale) {
        return None;
    }
    x.iter_mut().for_each(|xi| *xi = xi.max(0.0));
    let ex = p.e_mul(&x);
    let pres = (0..m)
        .map(|i| libm::fabs(ex[i] - p.targets[i]))
        .fold(0.0, f64::max);
    if pres > 1e-9 * (1.0 + inf_norm(&p.targets)) {
        return None;
    }
    // Stationarity on the free set.
    let hx = p.hess_mul(&x);
    let ety = p.et_mul(&y);
    let dres = (0..n)
        .filter(|&i| !active[i])
        .map(|i| libm::fabs(hx[i] + p.c[i] - ety[i]))
        .fold(0.0, f64::max);
    let residual = (pres / (1.0 + inf_norm(&p.targets))).max(dres / (1.0 + inf_norm(&p.c)));
    Some((x, residual))
}

/// Solves the table QP.
pub fn solve(qp: &TableQp) -> Result<QpSolution> {
    qp.validate()?;
    let p = Reduced::build(qp);
    let mut x = vec![vec![0.0; qp.cols]; qp.rows];
    if p.n() == 0 {
        return Ok(QpSolution {
            objective: qp.objective(&x),
            x,
            iterations: 0,
            residual: 0.0,
            polished: false,
        });
    }
    let ipm = interior_point(&p, p.interior_start(qp));
    let ipm_obj = p.objective(&ipm.x);
    let active: Vec<bool> = ipm.x.iter().zip(&ipm.z).map(|(x, z)| x < z).collect();
    let (flat, residual, polished) = match polish(&p, &active) {
        Some((px, res)) if p.objective(&px) <= ipm_obj + 1e-9 * (1.0 + libm::fabs(ipm_obj)) => {
            (px, res, true)
        }
        _ => (
            ipm.x.iter().map(|v| v.max(0.0)).collect(),
            ipm.residual,
            false,
        ),
    };
    if !residual.is_finite() {
        return Err(Error::Consistency(
            "QP solver produced a non-finite residual".into(),
        ));
    }
    let kc = p.kc();
    for (i, &r) in p.rows.iter().enumerate() {
        for (j, &k) in p.cols.iter().enumerate() {
            x[r][k] = flat[i * kc + j];
        }
    }
    Ok(QpSolution {
        objective: qp.objective(&x),
        x,
        iterations: ipm.iterations,
        residual,
        polished,
    })
}
