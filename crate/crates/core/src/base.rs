//! The oblivious base structure: one Gaussian projection matrix, one sorted
//! list of projections per vector, and a heap merge that pulls the
//! `8N + 1` largest `a_j . p - a_j . q` pairs at query time.
//!
//! Ordering everywhere is value descending, then point id ascending, then
//! projection index ascending.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{exact_furthest, Dataset};
use crate::error::{AfnError, Result};
use crate::params::OUTLIER_FACTOR;
use crate::rng::gaussian_vector;
use crate::vector::{dist, dot, norm, Point};

/// `N` projection vectors of dimension `d`, stored row-major (row `j` is `a_j`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    d: usize,
    rows: Vec<f64>,
}

impl ProjectionMatrix {
    pub fn from_vectors(vectors: &[Point]) -> Result<Self> {
        let first =
            vectors.first().ok_or_else(|| AfnError::Input("a projection matrix needs at least one vector".into()))?;
        let d = first.dim();
        let mut rows = Vec::with_capacity(vectors.len() * d);
        for v in vectors {
            AfnError::check_dim(d, v.dim())?;
            rows.extend_from_slice(v);
        }
        Ok(ProjectionMatrix { d, rows })
    }

    pub fn from_flat(d: usize, rows: Vec<f64>) -> Result<Self> {
        if d == 0 || rows.is_empty() || !rows.len().is_multiple_of(d) {
            return Err(AfnError::Input("malformed projection matrix buffer".into()));
        }
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(AfnError::Input("projection matrix has non-finite entries".into()));
        }
        Ok(ProjectionMatrix { d, rows })
    }

    /// `count` Gaussian vectors with norms below `n_cap`.
    pub fn gaussian<R: Rng + ?Sized>(d: usize, count: usize, n_cap: usize, rng: &mut R) -> Self {
        let mut rows = Vec::with_capacity(d * count);
        for _ in 0..count {
            rows.extend(gaussian_vector(d, n_cap, rng).into_vec());
        }
        ProjectionMatrix { d, rows }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.rows[j * self.d..(j + 1) * self.d]
    }

    pub fn vectors(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.rows.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.rows
    }

    pub fn max_norm(&self) -> f64 {
        self.vectors().map(norm).fold(0.0, f64::max)
    }

    /// `a_j . q` for every row.
    pub fn project(&self, q: &[f64]) -> Vec<f64> {
        self.vectors().map(|a| dot(a, q)).collect()
    }
}

/// One projection vector's `(a . p, point id)` pairs, largest first,
/// truncated to the list capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionList {
    entries: Vec<(f64, u32)>,
}

impl ProjectionList {
    pub fn entries(&self) -> &[(f64, u32)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rebuilds a list from persisted entries, checking the sort order.
    pub fn from_entries(entries: Vec<(f64, u32)>) -> Result<Self> {
        let sorted = entries.windows(2).all(|w| cmp_entry(&w[0], &w[1]) != Ordering::Greater);
        if !sorted || entries.iter().any(|(v, _)| !v.is_finite()) {
            return Err(AfnError::Input("projection list is not sorted by value descending".into()));
        }
        Ok(ProjectionList { entries })
    }
}

fn cmp_entry(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// The base data structure: a projection matrix plus its truncated lists.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseIndex {
    matrix: ProjectionMatrix,
    lists: Vec<ProjectionList>,
    /// Sorted, deduplicated ids appearing in any list.
    retained: Vec<u32>,
    /// Pairs popped per query; `8N + 1` by default.
    candidates: usize,
}

/// Builds the base structure with the default `8N + 1` list capacity.
pub fn build_base(p: &Dataset, matrix: ProjectionMatrix) -> Result<BaseIndex> {
    let cap = OUTLIER_FACTOR * matrix.len() + 1;
    BaseIndex::build(p, matrix, cap)
}

impl BaseIndex {
    /// Builds lists keeping the `cap` largest projections each; queries pop
    /// `cap` pairs.
    pub fn build(p: &Dataset, matrix: ProjectionMatrix, cap: usize) -> Result<Self> {
        AfnError::check_dim(p.dim(), matrix.dim())?;
        if cap == 0 {
            return Err(AfnError::Parameter("list capacity must be positive".into()));
        }
        let keep = cap.min(p.len());
        let mut scratch: Vec<(f64, u32)> = Vec::with_capacity(p.len());
        let mut lists = Vec::with_capacity(matrix.len());
        for a in matrix.vectors() {
            scratch.clear();
            scratch.extend(p.iter().enumerate().map(|(id, x)| (dot(a, x), id as u32)));
            if keep < scratch.len() {
                scratch.select_nth_unstable_by(keep - 1, cmp_entry);
                scratch.truncate(keep);
            }
            scratch.sort_unstable_by(cmp_entry);
            lists.push(ProjectionList { entries: scratch.clone() });
        }
        Ok(Self::from_parts(matrix, lists, cap))
    }

    pub(crate) fn from_parts(matrix: ProjectionMatrix, lists: Vec<ProjectionList>, candidates: usize) -> Self {
        let mut retained: Vec<u32> = lists.iter().flat_map(|l| l.entries.iter().map(|e| e.1)).collect();
        retained.sort_unstable();
        retained.dedup();
        BaseIndex { matrix, lists, retained, candidates }
    }

    pub fn matrix(&self) -> &ProjectionMatrix {
        &self.matrix
    }

    pub fn lists(&self) -> &[ProjectionList] {
        &self.lists
    }

    pub fn retained(&self) -> &[u32] {
        &self.retained
    }

    pub fn candidates_per_query(&self) -> usize {
        self.candidates
    }

    /// The selected pairs `(key, point id, list index)` in pop order, where
    /// `key = a_j . p - a_j . q`.
    pub fn query_pairs(&self, q: &[f64]) -> Result<Vec<(f64, u32, u32)>> {
        AfnError::check_dim(self.matrix.dim(), q.len())?;
        let shift = self.matrix.project(q);
        let mut heap = BinaryHeap::with_capacity(self.lists.len());
        for (j, list) in self.lists.iter().enumerate() {
            if let Some(&(v, id)) = list.entries.first() {
                heap.push(HeapEntry { key: v - shift[j], id, list: j as u32, cursor: 0 });
            }
        }
        let mut out = Vec::with_capacity(self.candidates);
        while out.len() < self.candidates {
            let Some(top) = heap.pop() else { break };
            out.push((top.key, top.id, top.list));
            let j = top.list as usize;
            let next = top.cursor + 1;
            if let Some(&(v, id)) = self.lists[j].entries.get(next as usize) {
                heap.push(HeapEntry { key: v - shift[j], id, list: top.list, cursor: next });
            }
        }
        Ok(out)
    }
}

/// Candidate ids for `q`: the point ids of the `8N + 1` largest pairs, in
/// selection order with duplicates removed.
pub fn query_base(idx: &BaseIndex, q: &[f64]) -> Result<Vec<u32>> {
    let pairs = idx.query_pairs(q)?;
    let mut seen = std::collections::HashSet::with_capacity(pairs.len());
    Ok(pairs.into_iter().filter_map(|(_, id, _)| seen.insert(id).then_some(id)).collect())
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    key: f64,
    id: u32,
    list: u32,
    cursor: u32,
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: larger key wins, then smaller id, then
        // smaller list index.
        self.key.total_cmp(&other.key).then_with(|| other.id.cmp(&self.id)).then_with(|| other.list.cmp(&self.list))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodnessReport {
    pub is_good: bool,
    /// First projection (by index) clearing the good-projection threshold,
    /// with its value `a . p* - a . q`.
    pub good_witness: Option<(usize, f64)>,
    pub outlier_count: usize,
    pub p_star: u32,
    pub p_star_dist: f64,
}

/// Precomputed `a_j . p` table for evaluating goodness of many queries
/// against one `(P, A)` pair in `O(nN)` each.
pub struct GoodnessEvaluator<'a> {
    data: &'a Dataset,
    matrix: &'a ProjectionMatrix,
    /// `proj[i * N + j] = a_j . p_i`
    proj: Vec<f64>,
}

impl<'a> GoodnessEvaluator<'a> {
    pub fn new(data: &'a Dataset, matrix: &'a ProjectionMatrix) -> Result<Self> {
        AfnError::check_dim(data.dim(), matrix.dim())?;
        let mut proj = Vec::with_capacity(data.len() * matrix.len());
        for x in data.iter() {
            proj.extend(matrix.vectors().map(|a| dot(a, x)));
        }
        Ok(GoodnessEvaluator { data, matrix, proj })
    }

    /// `(c, delta)`-goodness of `q` with threshold `t`.
    pub fn evaluate(&self, q: &[f64], c: f64, delta: f64, t: f64) -> Result<GoodnessReport> {
        check_goodness_args(c, delta, t)?;
        let (p_star, p_star_dist) = exact_furthest(self.data, q)?;
        let n_proj = self.matrix.len();
        let aq = self.matrix.project(q);
        let row = |i: usize| &self.proj[i * n_proj..(i + 1) * n_proj];

        let good_threshold = t * p_star_dist * (1.0 + delta) / c;
        let good_witness = row(p_star as usize)
            .iter()
            .zip(&aq)
            .map(|(ap, aq)| ap - aq)
            .enumerate()
            .find(|&(_, v)| v >= good_threshold);

        let mut outlier_count = 0;
        if p_star_dist > 0.0 {
            let near_radius = p_star_dist * (1.0 + delta) / c;
            let outlier_threshold = t * p_star_dist * (1.0 - delta) / c;
            for (i, x) in self.data.iter().enumerate() {
                if dist(x, q) < near_radius {
                    outlier_count += row(i).iter().zip(&aq).filter(|(ap, aq)| *ap - *aq >= outlier_threshold).count();
                }
            }
        }
        Ok(GoodnessReport {
            is_good: good_witness.is_some() && outlier_count <= OUTLIER_FACTOR * n_proj,
            good_witness,
            outlier_count,
            p_star,
            p_star_dist,
        })
    }
}

fn check_goodness_args(c: f64, delta: f64, t: f64) -> Result<()> {
    if c.is_nan() || c <= 1.0 {
        return Err(AfnError::Parameter(format!("c must exceed 1, got {c}")));
    }
    if !(0.0..=0.5).contains(&delta) {
        return Err(AfnError::Parameter(format!("delta must lie in [0, 1/2], got {delta}")));
    }
    if t.is_nan() || t < 1.0 {
        return Err(AfnError::Parameter(format!("t must be >= 1, got {t}")));
    }
    Ok(())
}

/// Whether `q` is `(c, delta)`-good for `A`: some projection separates the
/// furthest neighbor `p*` by at least `t ||p* - q|| (1 + delta) / c`, and at
/// most `8N` pairs `(p', a)` with `p'` closer than `||p* - q|| (1 + delta) / c`
/// project above `t ||p* - q|| (1 - delta) / c`.
///
/// When every point coincides with `q` the threshold is zero and the report
/// is trivially good.
pub fn is_good(p: &Dataset, q: &[f64], a: &ProjectionMatrix, c: f64, delta: f64, t: f64) -> Result<GoodnessReport> {
    GoodnessEvaluator::new(p, a)?.evaluate(q, c, delta, t)
}
