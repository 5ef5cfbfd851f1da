//! The classical oblivious furthest-neighbor baseline: rank every
//! `(vector, point)` pair by `|a_i . (q - p)|`, keep the top `c_N * N`, and
//! return the furthest of their points.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::base::ProjectionMatrix;
use crate::dataset::Dataset;
use crate::error::{AfnError, Result};
use crate::rng::{standard_normal_vec, RngStream};
use crate::vector::{dist, dot};

/// How pairs are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    /// `|a_i . q - a_i . p|`
    #[default]
    Absolute,
    /// `a_i . p - a_i . q`, as in the base index.
    Signed,
}

#[derive(Debug, Clone)]
pub struct ObliviousIndex {
    data: Arc<Dataset>,
    vectors: ProjectionMatrix,
    c_n: usize,
    ranking: Ranking,
}

/// Draws `n_proj` plain `N(0, I_d)` vectors (no norm cap).
pub fn build_oblivious(data: Arc<Dataset>, n_proj: usize, c_n: usize, stream: RngStream) -> Result<ObliviousIndex> {
    if n_proj == 0 || c_n == 0 {
        return Err(AfnError::Parameter("N and c_N must be at least 1".into()));
    }
    let mut rng = stream.rng();
    let d = data.dim();
    let mut rows = Vec::with_capacity(n_proj * d);
    for _ in 0..n_proj {
        rows.extend(standard_normal_vec(d, &mut rng));
    }
    let vectors = ProjectionMatrix::from_flat(d, rows)?;
    ObliviousIndex::from_vectors(data, vectors, c_n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObliviousAnswer {
    pub point_id: u32,
    pub distance: f64,
    /// Distinct ids of the selected pairs, ascending.
    pub selected: Vec<u32>,
    /// Selected `(score, point id, vector index)` pairs, best first.
    pub pairs: Vec<(f64, u32, u32)>,
}

impl ObliviousIndex {
    /// Injection hook: use the given vectors instead of sampling.
    pub fn from_vectors(data: Arc<Dataset>, vectors: ProjectionMatrix, c_n: usize) -> Result<Self> {
        AfnError::check_dim(data.dim(), vectors.dim())?;
        if c_n == 0 {
            return Err(AfnError::Parameter("c_N must be at least 1".into()));
        }
        Ok(ObliviousIndex { data, vectors, c_n, ranking: Ranking::Absolute })
    }

    pub fn with_ranking(mut self, ranking: Ranking) -> Self {
        self.ranking = ranking;
        self
    }

    pub fn ranking(&self) -> Ranking {
        self.ranking
    }

    pub fn vectors(&self) -> &ProjectionMatrix {
        &self.vectors
    }

    pub fn c_n(&self) -> usize {
        self.c_n
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    /// Number of pairs kept per query, `c_N * N`.
    pub fn budget(&self) -> usize {
        self.c_n * self.vectors.len()
    }

    pub fn query_detailed(&self, q: &[f64]) -> Result<ObliviousAnswer> {
        self.data.check_query(q)?;
        let aq = self.vectors.project(q);
        let n_proj = self.vectors.len();
        let mut pairs: Vec<(f64, u32, u32)> = Vec::with_capacity(self.data.len() * n_proj);
        for (id, p) in self.data.iter().enumerate() {
            for (i, a) in self.vectors.vectors().enumerate() {
                let ap = dot(a, p);
                let score = match self.ranking {
                    Ranking::Absolute => (aq[i] - ap).abs(),
                    Ranking::Signed => ap - aq[i],
                };
                pairs.push((score, id as u32, i as u32));
            }
        }
        let keep = self.budget().min(pairs.len());
        if keep < pairs.len() {
            pairs.select_nth_unstable_by(keep - 1, cmp_pair);
            pairs.truncate(keep);
        }
        pairs.sort_unstable_by(cmp_pair);

        let mut selected: Vec<u32> = pairs.iter().map(|p| p.1).collect();
        selected.sort_unstable();
        selected.dedup();
        let (point_id, distance) = selected
            .iter()
            .map(|&id| (id, dist(q, self.data.point(id as usize))))
            .fold(None, |best: Option<(u32, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
            .expect("at least one pair is selected");
        Ok(ObliviousAnswer { point_id, distance, selected, pairs })
    }
}

pub(crate) fn cmp_pair(a: &(f64, u32, u32), b: &(f64, u32, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// `(point id, exact distance)` of the oblivious answer.
pub fn query_oblivious(idx: &ObliviousIndex, q: &[f64]) -> Result<(u32, f64)> {
    let ans = idx.query_detailed(q)?;
    Ok((ans.point_id, ans.distance))
}
