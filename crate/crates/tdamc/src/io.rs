//! File formats: CSV tables, schema JSON, and the row types behind them.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use tdamc_core::intervals::{CiRecord, CiType, MomentEstimates};
use tdamc_core::model::{GeoHierarchy, Histogram, Schema, Universe};
use tdamc_core::noise::NoisyMeasurement;
use tdamc_core::query::{Geography, Query};

use crate::error::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Like [`write_csv`], but writes the header even when there are no rows.
pub fn write_csv_with_header<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    r.deserialize()
        .map(|row| row.map_err(|e| Error::csv(path, e)))
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::json(path, e))
}

pub fn read_schema(path: &Path) -> Result<Schema> {
    read_json(path)
}

#[derive(Debug, Serialize, Deserialize)]
struct HierarchyRow {
    unit_id: String,
    level: String,
    parent_id: String,
}

pub fn write_hierarchy(path: &Path, h: &GeoHierarchy) -> Result<()> {
    write_csv(
        path,
        h.units().iter().map(|u| HierarchyRow {
            unit_id: u.id.clone(),
            level: h.levels()[u.level].clone(),
            parent_id: u.parent.map(|p| h.unit(p).id.clone()).unwrap_or_default(),
        }),
    )
}

/// Reads a hierarchy. Level order is taken from depth below the root.
pub fn read_hierarchy(path: &Path) -> Result<GeoHierarchy> {
    let rows: Vec<HierarchyRow> = read_csv(path)?;
    let parent: BTreeMap<&str, &str> = rows
        .iter()
        .map(|r| (r.unit_id.as_str(), r.parent_id.as_str()))
        .collect();
    if parent.len() != rows.len() {
        return Err(Error::format(path, "duplicate unit id"));
    }
    let mut levels: Vec<Option<String>> = Vec::new();
    let mut units = Vec::with_capacity(rows.len());
    for r in &rows {
        let d = depth(&parent, &r.unit_id).map_err(|m| Error::format(path, m))?;
        if levels.len() <= d {
            levels.resize(d + 1, None);
        }
        match &levels[d] {
            None => levels[d] = Some(r.level.clone()),
            Some(l) if *l != r.level => {
                return Err(Error::format(
                    path,
                    format!(
                        "unit `{}` is at depth {d} but labelled `{}`, not `{l}`",
                        r.unit_id, r.level
                    ),
                ))
            }
            Some(_) => {}
        }
        let p = (!r.parent_id.is_empty()).then(|| r.parent_id.clone());
        units.push((r.unit_id.clone(), d, p));
    }
    let levels = levels
        .into_iter()
        .map(|l| l.ok_or_else(|| Error::format(path, "missing level")))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeoHierarchy::from_units(levels, units)?)
}

/// Steps from `id` up to the root.
fn depth<'a>(
    parent: &BTreeMap<&'a str, &'a str>,
    mut id: &'a str,
) -> std::result::Result<usize, String> {
    let mut d = 0;
    loop {
        match parent.get(id) {
            Some(&"") => return Ok(d),
            Some(&p) => {
                id = p;
                d += 1;
                if d > parent.len() {
                    return Err("cycle in parent links".into());
                }
            }
            None => return Err(format!("unknown parent `{id}`")),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CountRow {
    #[serde(alias = "unit_id")]
    block_id: String,
    cell_index: usize,
    count: u64,
}

pub fn write_histogram(path: &Path, h: &Histogram) -> Result<()> {
    let hier = h.hierarchy();
    write_csv_with_header(
        path,
        &["block_id", "cell_index", "count"],
        h.nonzero().map(|(pos, cell, count)| CountRow {
            block_id: hier.unit(hier.blocks()[pos]).id.clone(),
            cell_index: cell,
            count,
        }),
    )
}

pub fn read_histogram(
    path: &Path,
    schema: &Arc<Schema>,
    hierarchy: &Arc<GeoHierarchy>,
) -> Result<Histogram> {
    let rows: Vec<CountRow> = read_csv(path)?;
    let mut h = Histogram::zeros(schema.clone(), hierarchy.clone());
    let mut seen = HashSet::new();
    for r in rows {
        let u = hierarchy
            .lookup(&r.block_id)
            .map_err(|_| Error::format(path, format!("unknown block `{}`", r.block_id)))?;
        let pos = hierarchy
            .block_position(u)
            .ok_or_else(|| Error::format(path, format!("`{}` is not a block", r.block_id)))?;
        if r.cell_index >= schema.cell_count() {
            return Err(Error::format(
                path,
                format!("cell {} out of range", r.cell_index),
            ));
        }
        if !seen.insert((pos, r.cell_index)) {
            return Err(Error::format(
                path,
                format!(
                    "duplicate entry for block `{}` cell {}",
                    r.block_id, r.cell_index
                ),
            ));
        }
        h.set_at(pos, r.cell_index, r.count)?;
    }
    Ok(h)
}

/// Cell vectors of the non-block units, as solved, keyed by unit index.
pub fn write_units(path: &Path, hierarchy: &GeoHierarchy, vectors: &[Vec<u64>]) -> Result<()> {
    let rows = hierarchy
        .units()
        .iter()
        .enumerate()
        .filter(|(i, _)| hierarchy.block_position(*i).is_none())
        .flat_map(|(i, u)| {
            vectors[i]
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(move |(cell, &count)| (u.id.clone(), cell, count))
        });
    write_csv_with_header(path, &["unit_id", "cell_index", "count"], rows)
}

/// Stored cell vectors of non-block units; missing units read as zero.
pub fn read_units(
    path: &Path,
    hierarchy: &GeoHierarchy,
    cells: usize,
) -> Result<Vec<Option<Vec<u64>>>> {
    #[derive(Deserialize)]
    struct Row {
        unit_id: String,
        cell_index: usize,
        count: u64,
    }
    let rows: Vec<Row> = read_csv(path)?;
    let mut out: Vec<Option<Vec<u64>>> = hierarchy
        .units()
        .iter()
        .enumerate()
        .map(|(i, _)| {
            hierarchy
                .block_position(i)
                .is_none()
                .then(|| vec![0; cells])
        })
        .collect();
    for r in rows {
        let u = hierarchy
            .lookup(&r.unit_id)
            .map_err(|_| Error::format(path, format!("unknown unit `{}`", r.unit_id)))?;
        let v = out[u]
            .as_mut()
            .ok_or_else(|| Error::format(path, format!("`{}` is a block", r.unit_id)))?;
        if r.cell_index >= cells {
            return Err(Error::format(
                path,
                format!("cell {} out of range", r.cell_index),
            ));
        }
        v[r.cell_index] = r.count;
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NmfRow {
    pub replicate: u64,
    pub level: String,
    pub unit_id: String,
    pub group: String,
    pub cell_index: usize,
    pub noisy_value: f64,
    pub variance: f64,
}

pub fn write_nmf(
    path: &Path,
    replicate: u64,
    hierarchy: &GeoHierarchy,
    ms: &[NoisyMeasurement],
) -> Result<()> {
    write_csv(
        path,
        ms.iter().flat_map(|m| {
            m.answers.iter().enumerate().map(move |(i, &v)| NmfRow {
                replicate,
                level: hierarchy.levels()[m.level].clone(),
                unit_id: m.unit.clone(),
                group: m.group.clone(),
                cell_index: i,
                noisy_value: v,
                variance: m.variance,
            })
        }),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct WorkloadRow {
    query_id: String,
    universe: String,
    cells: String,
    geo_kind: String,
    geo_ids: String,
}

/// `geo_kind` is `unit` for a hierarchy unit; anything else is the label of
/// a block union.
pub fn write_workload(path: &Path, queries: &[Query]) -> Result<()> {
    write_csv(
        path,
        queries.iter().map(|q| {
            let (kind, ids) = match &q.geography {
                Geography::Unit(id) => ("unit".to_string(), id.clone()),
                Geography::Blocks { label, ids } => (label.clone(), ids.join(";")),
            };
            WorkloadRow {
                query_id: q.id.clone(),
                universe: q.universe.as_str().into(),
                cells: q
                    .cells
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
                geo_kind: kind,
                geo_ids: ids,
            }
        }),
    )
}

pub fn read_workload(path: &Path) -> Result<Vec<Query>> {
    let rows: Vec<WorkloadRow> = read_csv(path)?;
    rows.into_iter()
        .map(|r| {
            let cells = r
                .cells
                .split(';')
                .map(|c| c.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::format(path, format!("bad cell list for `{}`", r.query_id)))?;
            let geography = if r.geo_kind == "unit" {
                Geography::Unit(r.geo_ids)
            } else {
                Geography::Blocks {
                    label: r.geo_kind,
                    ids: r.geo_ids.split(';').map(String::from).collect(),
                }
            };
            Ok(Query {
                id: r.query_id,
                universe: Universe::parse(&r.universe)?,
                cells,
                geography,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TabulationRow {
    query_id: String,
    replicate: u64,
    value: u64,
}

/// Query answers: `values[r][q]` is the answer to query `q` in replicate `r`.
pub fn write_tabulation(path: &Path, query_ids: &[String], values: &[Vec<u64>]) -> Result<()> {
    write_csv(
        path,
        query_ids.iter().enumerate().flat_map(|(q, id)| {
            values.iter().enumerate().map(move |(r, v)| TabulationRow {
                query_id: id.clone(),
                replicate: r as u64,
                value: v[q],
            })
        }),
    )
}

/// Reads a tabulation back into `[replicate][query]` order, checking it
/// covers exactly `query_ids`.
pub fn read_tabulation(path: &Path, query_ids: &[String]) -> Result<Vec<Vec<u64>>> {
    let rows: Vec<TabulationRow> = read_csv(path)?;
    let index: BTreeMap<&str, usize> = query_ids
        .iter()
        .enumerate()
        .map(|(i, q)| (q.as_str(), i))
        .collect();
    let reps = rows.iter().map(|r| r.replicate + 1).max().unwrap_or(0) as usize;
    let mut out = vec![vec![None; query_ids.len()]; reps];
    for r in &rows {
        let q = *index
            .get(r.query_id.as_str())
            .ok_or_else(|| Error::format(path, format!("unknown query `{}`", r.query_id)))?;
        out[r.replicate as usize][q] = Some(r.value);
    }
    out.into_iter()
        .enumerate()
        .map(|(rep, v)| {
            v.into_iter()
                .enumerate()
                .map(|(q, x)| {
                    x.ok_or_else(|| {
                        Error::format(
                            path,
                            format!("no value for `{}` in replicate {rep}", query_ids[q]),
                        )
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CiRow {
    pub query_id: String,
    pub ci_type: CiType,
    pub level: f64,
    pub point: u64,
    pub lower: u64,
    pub upper: u64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub median_bias: f64,
    pub sd: f64,
    pub n: usize,
}

impl From<&CiRecord> for CiRow {
    fn from(r: &CiRecord) -> Self {
        let m = &r.moments;
        Self {
            query_id: r.query_id.clone(),
            ci_type: r.ci_type,
            level: r.level,
            point: r.point,
            lower: r.lower,
            upper: r.upper,
            bias: m.bias,
            variance: m.variance,
            mse: m.mse,
            median_bias: m.median_bias,
            sd: m.sd,
            n: m.n,
        }
    }
}

impl From<CiRow> for CiRecord {
    fn from(r: CiRow) -> Self {
        Self {
            query_id: r.query_id,
            ci_type: r.ci_type,
            level: r.level,
            point: r.point,
            lower: r.lower,
            upper: r.upper,
            moments: MomentEstimates {
                bias: r.bias,
                variance: r.variance,
                mse: r.mse,
                median_bias: r.median_bias,
                sd: r.sd,
                n: r.n,
            },
        }
    }
}

pub fn write_ci(path: &Path, records: &[CiRecord]) -> Result<()> {
    write_csv(path, records.iter().map(CiRow::from))
}

pub fn read_ci(path: &Path) -> Result<Vec<CiRecord>> {
    Ok(read_csv::<CiRow>(path)?
        .into_iter()
        .map(CiRecord::from)
        .collect())
}
