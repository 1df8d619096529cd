//! Monte Carlo replicate sets: repeated runs on the confidential input (MC)
//! or on one published realization (AMC).

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Histogram;
use crate::rng::SeedStream;
use crate::topdown::{NoClock, Tda, TdaParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplicateKind {
    Mc,
    Amc,
}

impl ReplicateKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReplicateKind::Mc => "mc",
            ReplicateKind::Amc => "amc",
        }
    }
}

/// Replicate outputs together with the histogram they are compared against.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateSet {
    pub kind: ReplicateKind,
    pub reference: Histogram,
    pub replicates: Vec<Histogram>,
    /// Seed of each replicate's stream.
    pub seeds: Vec<u64>,
}

impl ReplicateSet {
    pub fn len(&self) -> usize {
        self.replicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicates.is_empty()
    }
}

/// Stream of replicate `index` of `kind` under `master_seed`.
pub fn replicate_stream(master_seed: u64, kind: ReplicateKind, index: u64) -> SeedStream {
    SeedStream::new(master_seed)
        .label(kind.as_str())
        .index(index)
}

fn run(
    input: &Histogram,
    params: &TdaParams,
    kind: ReplicateKind,
    n: usize,
    master_seed: u64,
) -> Result<ReplicateSet> {
    if n < 2 {
        return Err(Error::InsufficientReplicates { needed: 2, got: n });
    }
    let tda = Tda::new(params, input.schema(), input.hierarchy())?;
    let mut replicates = Vec::with_capacity(n);
    let mut seeds = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let stream = replicate_stream(master_seed, kind, i);
        seeds.push(stream.seed());
        replicates.push(tda.run(input, &stream, &NoClock)?.0);
    }
    Ok(ReplicateSet {
        kind,
        reference: input.clone(),
        replicates,
        seeds,
    })
}

/// `m` independent runs on the confidential histogram.
pub fn run_mc(
    cef: &Histogram,
    params: &TdaParams,
    m: usize,
    master_seed: u64,
) -> Result<ReplicateSet> {
    run(cef, params, ReplicateKind::Mc, m, master_seed)
}

/// `s` independent runs with the published realization `ppmf0` as input.
pub fn run_amc(
    ppmf0: &Histogram,
    params: &TdaParams,
    s: usize,
    master_seed: u64,
) -> Result<ReplicateSet> {
    run(ppmf0, params, ReplicateKind::Amc, s, master_seed)
}

/// `n` of `total` indices drawn uniformly without replacement, ascending.
/// Selecting all indices returns them in order.
pub fn subset_indices(total: usize, n: usize, stream: &SeedStream) -> Result<Vec<usize>> {
    if n < 2 || n > total {
        return Err(Error::Parameter(format!(
            "subset size {n} must be between 2 and {total}"
        )));
    }
    if n == total {
        return Ok((0..total).collect());
    }
    let mut idx = index::sample(&mut stream.rng(), total, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Random subset of stored replicates; the reference is unchanged.
pub fn subset(rs: &ReplicateSet, n: usize, stream: &SeedStream) -> Result<ReplicateSet> {
    let idx = subset_indices(rs.len(), n, stream)?;
    Ok(ReplicateSet {
        kind: rs.kind,
        reference: rs.reference.clone(),
        replicates: idx.iter().map(|&i| rs.replicates[i].clone()).collect(),
        seeds: idx.iter().map(|&i| rs.seeds[i]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synth_cef, CountModel, Schema, SynthConfig, Universe};
    use crate::noise::{BudgetAllocation, QueryGroup};
    use alloc::vec;

    fn setup(rho: f64) -> (Histogram, TdaParams) {
        let schema = Schema::from_pairs(Universe::Person, &[("a", 2), ("b", 2)]).unwrap();
        let cfg = SynthConfig {
            schema,
            levels: vec!["root".into(), "state".into(), "block".into()],
            fanouts: vec![2, 2],
            counts: CountModel::default(),
        };
        let h = synth_cef(&cfg, 7).unwrap();
        let alloc = BudgetAllocation::uniform(
            rho,
            h.hierarchy().levels(),
            &[QueryGroup::detailed(h.schema())],
        );
        (
            h,
            TdaParams {
                allocation: alloc,
                invariants: Default::default(),
            },
        )
    }

    #[test]
    fn noiseless_replicates_equal_input() {
        let (h, p) = setup(1e9);
        let rs = run_mc(&h, &p, 2, 1).unwrap();
        assert!(rs.replicates.iter().all(|r| *r == h));
        assert_ne!(rs.seeds[0], rs.seeds[1]);
    }

    #[test]
    fn needs_two_replicates() {
        let (h, p) = setup(1.0);
        assert!(matches!(
            run_amc(&h, &p, 1, 1),
            Err(Error::InsufficientReplicates { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn full_subset_keeps_order() {
        let (h, p) = setup(0.5);
        let rs = run_amc(&h, &p, 4, 3).unwrap();
        assert_eq!(subset(&rs, 4, &SeedStream::new(9)).unwrap(), rs);
        let half = subset(&rs, 2, &SeedStream::new(9)).unwrap();
        assert_eq!(half.len(), 2);
        assert!(subset(&rs, 5, &SeedStream::new(9)).is_err());
    }
}
