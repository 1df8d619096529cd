//! Controlled rounding of a non-negative real table to integers.
//!
//! Each entry moves to its floor or its ceiling. Column sums are kept equal
//! to the parent vector and row sums to the row totals when those are given.
//! Units with larger fractional parts are rounded up first; ties are broken
//! by keys drawn from the caller's RNG.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{Error, Result};

const SNAP: f64 = 1e-7;
const SUM_TOLERANCE: f64 = 1e-6;
const NEGATIVE_TOLERANCE: f64 = 1e-6;

/// Rounds `real` (`rows x cols`) to integers.
///
/// `parent` fixes column sums and `row_totals` fixes row sums.
pub fn integerize<R: RngCore + ?Sized>(
    real: &[Vec<f64>],
    parent: Option<&[u64]>,
    row_totals: Option<&[u64]>,
    rng: &mut R,
) -> Result<Vec<Vec<u64>>> {
    let rows = real.len();
    let cols = real
        .first()
        .map_or(parent.map_or(0, |p| p.len()), |r| r.len());
    if real.iter().any(|r| r.len() != cols) {
        return Err(Error::Parameter("ragged table".into()));
    }
    if parent.is_some_and(|p| p.len() != cols) {
        return Err(Error::Parameter(
            "parent vector has the wrong length".into(),
        ));
    }
    if row_totals.is_some_and(|t| t.len() != rows) {
        return Err(Error::Parameter("row totals have the wrong length".into()));
    }
    let mut floors = vec![vec![0u64; cols]; rows];
    let mut fracs = vec![vec![0.0f64; cols]; rows];
    for r in 0..rows {
        for k in 0..cols {
            let v = real[r][k];
            if !v.is_finite() || v < -NEGATIVE_TOLERANCE {
                return Err(Error::Consistency(format!("cannot round entry {v}")));
            }
            let mut v = v.max(0.0);
            let near = libm::round(v);
            if libm::fabs(v - near) <= SNAP {
                v = near;
            }
            let f = libm::floor(v);
            floors[r][k] = f as u64;
            fracs[r][k] = v - f;
        }
    }
    // Keys are drawn for every entry so the stream position does not depend
    // on the data.
    let keys: Vec<Vec<u64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.next_u64()).collect())
        .collect();

    let col_deficit = parent
        .map(|p| {
            (0..cols)
                .map(|k| {
                    let real_sum: f64 = (0..rows).map(|r| real[r][k]).sum();
                    check_sum(real_sum, p[k], "column")?;
                    let floor_sum: u64 = (0..rows).map(|r| floors[r][k]).sum();
                    deficit(p[k], floor_sum, rows)
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let row_deficit = row_totals
        .map(|t| {
            (0..rows)
                .map(|r| {
                    let real_sum: f64 = real[r].iter().sum();
                    check_sum(real_sum, t[r], "row")?;
                    let floor_sum: u64 = floors[r].iter().sum();
                    deficit(t[r], floor_sum, cols)
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;

    let order = |a: (f64, u64), b: (f64, u64)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    let mut out = floors;
    match (col_deficit, row_deficit) {
        (None, None) => {
            for r in 0..rows {
                for k in 0..cols {
                    let f = fracs[r][k];
                    if f > 0.5 || (f == 0.5 && keys[r][k] & 1 == 1) {
                        out[r][k] += 1;
                    }
                }
            }
        }
        (Some(dk), None) => {
            for k in 0..cols {
                let mut idx: Vec<usize> = (0..rows).collect();
                idx.sort_by(|&a, &b| order((fracs[a][k], keys[a][k]), (fracs[b][k], keys[b][k])));
                for &r in idx.iter().take(dk[k]) {
                    out[r][k] += 1;
                }
            }
        }
        (None, Some(dr)) => {
            for r in 0..rows {
                let mut idx: Vec<usize> = (0..cols).collect();
                idx.sort_by(|&a, &b| order((fracs[r][a], keys[r][a]), (fracs[r][b], keys[r][b])));
                for &k in idx.iter().take(dr[r]) {
                    out[r][k] += 1;
                }
            }
        }
        (Some(dk), Some(dr)) => {
            let ups = transport_rounding(&fracs, &keys, &dr, &dk)?;
            for (r, k) in ups {
                out[r][k] += 1;
            }
        }
    }
    Ok(out)
}

fn check_sum(real_sum: f64, target: u64, what: &str) -> Result<()> {
    let t = target as f64;
    if libm::fabs(real_sum - t) > SUM_TOLERANCE * t.max(1.0) {
        return Err(Error::Consistency(format!(
            "{what} sums to {real_sum} but must equal {target}"
        )));
    }
    Ok(())
}

fn deficit(target: u64, floor_sum: u64, slots: usize) -> Result<usize> {
    let d = target
        .checked_sub(floor_sum)
        .ok_or_else(|| Error::Consistency(format!("floors exceed target {target}")))?;
    if d > slots as u64 {
        return Err(Error::Consistency(format!(
            "deficit {d} exceeds the {slots} available entries"
        )));
    }
    Ok(d as usize)
}

struct Edge {
    to: usize,
    cap: i64,
    cost: i64,
}

/// Min-cost flow on the bipartite row/column graph. Every unit of flow on a
/// row-to-column edge rounds that entry up.
fn transport_rounding(
    fracs: &[Vec<f64>],
    keys: &[Vec<u64>],
    row_deficit: &[usize],
    col_deficit: &[usize],
) -> Result<Vec<(usize, usize)>> {
    let rows = fracs.len();
    let cols = col_deficit.len();
    let need: usize = row_deficit.iter().sum();
    if need != col_deficit.iter().sum::<usize>() {
        return Err(Error::Consistency(
            "row and column deficits disagree".into(),
        ));
    }
    if need == 0 {
        return Ok(Vec::new());
    }
    // Rank all entries by fractional part; higher fractions are cheaper.
    let mut ranked: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |k| (r, k)))
        .collect();
    ranked.sort_by(|&(ra, ka), &(rb, kb)| {
        fracs[rb][kb]
            .total_cmp(&fracs[ra][ka])
            .then(keys[ra][ka].cmp(&keys[rb][kb]))
    });
    let penalty = (rows * cols) as i64 + 1;

    let source = 0;
    let sink = rows + cols + 1;
    let nodes = sink + 1;
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut add = |edges: &mut Vec<Edge>, from: usize, to: usize, cap: i64, cost: i64| -> usize {
        adj[from].push(edges.len());
        edges.push(Edge { to, cap, cost });
        adj[to].push(edges.len());
        edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
        });
        edges.len() - 2
    };
    for (r, &d) in row_deficit.iter().enumerate() {
        add(&mut edges, source, 1 + r, d as i64, 0);
    }
    for (k, &d) in col_deficit.iter().enumerate() {
        add(&mut edges, 1 + rows + k, sink, d as i64, 0);
    }
    let mut cell_edges = Vec::with_capacity(rows * cols);
    for (rank, &(r, k)) in ranked.iter().enumerate() {
        // Entries that are already integral may only move as a last resort.
        let cost = if fracs[r][k] > 0.0 {
            rank as i64
        } else {
            penalty * penalty + rank as i64
        };
        let e = add(&mut edges, 1 + r, 1 + rows + k, 1, cost);
        cell_edges.push((e, r, k));
    }

    let mut flow = 0usize;
    while flow < need {
        // Bellman-Ford on the residual graph.
        let mut dist = vec![i64::MAX; nodes];
        let mut prev = vec![usize::MAX; nodes];
        dist[source] = 0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u] == i64::MAX {
                    continue;
                }
                for &e in &adj[u] {
                    let edge = &edges[e];
                    if edge.cap > 0 && dist[u] + edge.cost < dist[edge.to] {
                        dist[edge.to] = dist[u] + edge.cost;
                        prev[edge.to] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink] == i64::MAX {
            return Err(Error::Consistency(
                "no integer table satisfies both margins".into(),
            ));
        }
        let mut push = i64::MAX;
        let mut v = sink;
        while v != source {
            let e = prev[v];
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while v != source {
            let e = prev[v];
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            v = edges[e ^ 1].to;
        }
        flow += push as usize;
    }
    Ok(cell_edges
        .into_iter()
        .filter(|(e, _, _)| edges[*e].cap == 0)
        .map(|(_, r, k)| (r, k))
        .collect())
}
