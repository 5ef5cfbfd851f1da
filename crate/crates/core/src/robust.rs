//! The robust index: `k` independent base structures, a per-query sample of
//! `m` of them drawn with fresh randomness, and a distance-oracle pass over
//! the union of their candidates.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{query_base, BaseIndex, ProjectionMatrix};
use crate::dataset::{Dataset, DatasetStats};
use crate::error::{AfnError, Result};
use crate::oracle::DistanceOracle;
use crate::params::Params;
use crate::rng::RngStream;
use crate::vector::dist;

#[derive(Debug, Clone, PartialEq)]
pub struct RobustIndex {
    data: Arc<Dataset>,
    params: Params,
    stats: DatasetStats,
    bases: Vec<BaseIndex>,
    /// Sorted ids retained by any base.
    p_hat: Vec<u32>,
    master_seed: u64,
    shortcut: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAnswer {
    pub point_id: u32,
    pub reported_distance: f64,
    pub trivial: bool,
    /// Base indices drawn for this query, with repetition.
    pub sampled_indices: Vec<usize>,
    pub oracle_eps: f64,
    /// Candidate pairs gathered across the sampled bases before deduplication.
    pub pairs_considered: usize,
    /// Distinct candidate points handed to the oracle.
    pub candidates: usize,
}

/// Norm cap for projection vectors. The analysis caps norms at `n`; for tiny
/// `n` in high dimension that cap is essentially never met by a Gaussian
/// vector, so it is raised to `sqrt(d) + 8`, eleven standard deviations above
/// the typical norm.
pub fn norm_cap(n: usize, d: usize) -> usize {
    n.max((d as f64).sqrt().ceil() as usize + 8)
}

/// Builds `k` bases from streams `(master_seed, 0..k)`.
pub fn build_robust(data: Arc<Dataset>, params: Params, master_seed: u64) -> Result<RobustIndex> {
    params.validate()?;
    if data.len() < 2 {
        return Err(AfnError::Input("the robust index needs at least two points".into()));
    }
    let stats = DatasetStats::box_only(&data, params.c)?;
    let cap = norm_cap(data.len(), data.dim());
    let per_base = params.candidates_per_base();
    let bases = (0..params.k)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(master_seed, i as u64).rng();
            let matrix = ProjectionMatrix::gaussian(data.dim(), params.n_proj, cap, &mut rng);
            BaseIndex::build(&data, matrix, per_base)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RobustIndex::assemble(data, params, stats, bases, master_seed, true))
}

/// `true` iff `||q - ct|| >= R`.
pub fn trivial_check(stats: &DatasetStats, q: &[f64]) -> bool {
    dist(q, &stats.ct) >= stats.radius
}

/// Bytes the index will occupy, excluding the dataset itself.
pub fn estimate_memory(n: usize, d: usize, params: &Params) -> usize {
    let per_list = params.candidates_per_base().min(n) * (8 + 4);
    let per_base = params.n_proj * (d * 8 + per_list);
    params.k * per_base + n.min(params.k * params.n_proj * params.candidates_per_base()) * 4
}

impl RobustIndex {
    pub(crate) fn assemble(
        data: Arc<Dataset>,
        params: Params,
        stats: DatasetStats,
        bases: Vec<BaseIndex>,
        master_seed: u64,
        shortcut: bool,
    ) -> Self {
        let mut p_hat: Vec<u32> = bases.iter().flat_map(|b| b.retained().iter().copied()).collect();
        p_hat.sort_unstable();
        p_hat.dedup();
        RobustIndex { data, params, stats, bases, p_hat, master_seed, shortcut }
    }

    /// Enables or disables the far-query shortcut (enabled by default).
    pub fn with_shortcut(mut self, enabled: bool) -> Self {
        self.shortcut = enabled;
        self
    }

    pub fn shortcut(&self) -> bool {
        self.shortcut
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn stats(&self) -> &DatasetStats {
        &self.stats
    }

    pub fn bases(&self) -> &[BaseIndex] {
        &self.bases
    }

    pub fn p_hat(&self) -> &[u32] {
        &self.p_hat
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Read-only view of every projection matrix, for white-box adversaries.
    pub fn matrices(&self) -> impl Iterator<Item = &ProjectionMatrix> {
        self.bases.iter().map(|b| b.matrix())
    }

    pub fn memory_bytes(&self) -> usize {
        let lists: usize = self
            .bases
            .iter()
            .map(|b| b.matrix().as_flat().len() * 8 + b.lists().iter().map(|l| l.len() * 12).sum::<usize>())
            .sum();
        lists + self.p_hat.len() * 4
    }
}

/// Answers `q` using the randomness of `stream`, which must not be reused
/// across queries.
pub fn query<O: DistanceOracle + ?Sized>(
    idx: &RobustIndex,
    q: &[f64],
    stream: RngStream,
    oracle: &O,
) -> Result<QueryAnswer> {
    idx.data.check_query(q)?;
    if idx.shortcut && trivial_check(&idx.stats, q) {
        let id = idx.p_hat[0];
        return Ok(QueryAnswer {
            point_id: id,
            reported_distance: oracle.estimate(q, idx.data.point(id as usize), id),
            trivial: true,
            sampled_indices: Vec::new(),
            oracle_eps: oracle.eps(),
            pairs_considered: 0,
            candidates: 1,
        });
    }

    let sampled = sample_indices(stream, idx.bases.len(), idx.params.m);

    let mut distinct_bases = sampled.clone();
    distinct_bases.sort_unstable();
    distinct_bases.dedup();
    let mut cands: Vec<u32> = Vec::new();
    let mut pairs_considered = 0;
    for &i in &distinct_bases {
        let multiplicity = sampled.iter().filter(|&&s| s == i).count();
        let base = &idx.bases[i];
        pairs_considered += multiplicity * base.candidates_per_query().min(total_entries(base));
        cands.extend(query_base(base, q)?);
    }
    cands.sort_unstable();
    cands.dedup();

    let (point_id, reported_distance) =
        select_max(&idx.data, q, &cands, oracle).ok_or_else(|| AfnError::Input("no candidates gathered".into()))?;
    Ok(QueryAnswer {
        point_id,
        reported_distance,
        trivial: false,
        sampled_indices: sampled,
        oracle_eps: oracle.eps(),
        pairs_considered,
        candidates: cands.len(),
    })
}

/// `m` indices drawn uniformly from `0..k` with repetition.
pub fn sample_indices(stream: RngStream, k: usize, m: usize) -> Vec<usize> {
    let mut rng = stream.rng();
    (0..m).map(|_| rng.random_range(0..k)).collect()
}

fn total_entries(base: &BaseIndex) -> usize {
    base.lists().iter().map(|l| l.len()).sum()
}

/// Oracle argmax over ascending candidate ids; ties keep the smallest id.
pub fn select_max<O: DistanceOracle + ?Sized>(
    data: &Dataset,
    q: &[f64],
    ids_ascending: &[u32],
    oracle: &O,
) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for &id in ids_ascending {
        let e = oracle.estimate(q, data.point(id as usize), id);
        if best.is_none_or(|(_, b)| e > b) {
            best = Some((id, e));
        }
    }
    best
}
