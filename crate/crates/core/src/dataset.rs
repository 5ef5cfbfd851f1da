//! Point sets, their bounding-box statistics, and the exact furthest-neighbor
//! scan used as ground truth everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{AfnError, Result};
use crate::vector::{sq_dist, Point};

/// `n >= 1` points of a common dimension `d`, stored row-major. Point ids are
/// row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    coords: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from a flat row-major buffer of `n * d` coordinates.
    pub fn from_flat(d: usize, coords: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(AfnError::Input("dimension must be at least 1".into()));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(d) {
            return Err(AfnError::Input(format!(
                "buffer of {} values is not a positive multiple of d = {d}",
                coords.len()
            )));
        }
        if coords.len() / d > u32::MAX as usize {
            return Err(AfnError::Input("point ids must fit in 32 bits".into()));
        }
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(AfnError::NonFinite { point: i / d, coord: i % d });
        }
        Ok(Dataset { d, coords })
    }

    pub fn from_points(points: &[Point]) -> Result<Self> {
        let first = points.first().ok_or_else(|| AfnError::Input("dataset needs at least one point".into()))?;
        let d = first.dim();
        let mut coords = Vec::with_capacity(points.len() * d);
        for p in points {
            AfnError::check_dim(d, p.dim())?;
            coords.extend_from_slice(p);
        }
        Dataset::from_flat(d, coords)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, id: usize) -> &[f64] {
        &self.coords[id * self.d..(id + 1) * self.d]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn check_query(&self, q: &[f64]) -> Result<()> {
        AfnError::check_dim(self.d, q.len())?;
        if let Some(coord) = q.iter().position(|x| !x.is_finite()) {
            return Err(AfnError::NonFinite { point: 0, coord });
        }
        Ok(())
    }
}

/// Bounding-box statistics of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Box width: the largest per-coordinate extent.
    pub bw: f64,
    /// Per-coordinate midpoint of the bounding box.
    pub ct: Point,
    /// Exact diameter. `None` when the stats were computed without the
    /// quadratic pairwise scan (index builds never need it).
    pub diameter: Option<f64>,
    /// Radius beyond which every point is a valid `c`-approximate answer:
    /// `(1 + c) sqrt(d) bw / (2 (c - 1))`.
    pub radius: f64,
    pub c: f64,
}

impl DatasetStats {
    /// Box width, center and trivial-query radius only; `O(nd)`.
    pub fn box_only(p: &Dataset, c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 1.0 {
            return Err(AfnError::Parameter(format!("approximation factor must exceed 1, got {c}")));
        }
        let d = p.dim();
        let mut lo = p.point(0).to_vec();
        let mut hi = lo.clone();
        for x in p.iter() {
            for i in 0..d {
                lo[i] = lo[i].min(x[i]);
                hi[i] = hi[i].max(x[i]);
            }
        }
        let bw = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
        let ct: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h + l)).collect();
        Ok(DatasetStats { bw, ct: Point::from_vec_unchecked(ct), diameter: None, radius: trivial_radius(c, d, bw), c })
    }

    /// Exact diameter; panics if these stats were built without it.
    pub fn diameter(&self) -> f64 {
        self.diameter.expect("stats computed without the diameter scan")
    }
}

pub fn trivial_radius(c: f64, d: usize, bw: f64) -> f64 {
    (1.0 + c) * (d as f64).sqrt() * bw / (2.0 * (c - 1.0))
}

/// Box width, center, exact diameter and trivial-query radius.
pub fn compute_stats(p: &Dataset, c: f64) -> Result<DatasetStats> {
    let mut stats = DatasetStats::box_only(p, c)?;
    stats.diameter = Some(exact_diameter(p));
    Ok(stats)
}

/// Exact `max_{p, p'} ||p - p'||` by the `O(n^2 d)` pairwise scan.
pub fn exact_diameter(p: &Dataset) -> f64 {
    let n = p.len();
    let mut best = 0.0f64;
    for i in 0..n {
        let a = p.point(i);
        for j in i + 1..n {
            best = best.max(sq_dist(a, p.point(j)));
        }
    }
    best.sqrt()
}

/// Exact furthest neighbor of `q`: `(id, distance)` with ties broken towards
/// the smallest id.
pub fn exact_furthest(p: &Dataset, q: &[f64]) -> Result<(u32, f64)> {
    p.check_query(q)?;
    let mut best = (0u32, f64::NEG_INFINITY);
    for (id, x) in p.iter().enumerate() {
        let s = sq_dist(x, q);
        if s > best.1 {
            best = (id as u32, s);
        }
    }
    Ok((best.0, best.1.sqrt()))
}

/// Exact nearest distance, used by the trivial-query checks.
pub fn exact_nearest_dist(p: &Dataset, q: &[f64]) -> f64 {
    p.iter().map(|x| sq_dist(x, q)).fold(f64::INFINITY, f64::min).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[&[f64]]) -> Dataset {
        let pts: Vec<Point> = rows.iter().map(|r| Point::new(r.to_vec()).unwrap()).collect();
        Dataset::from_points(&pts).unwrap()
    }

    #[test]
    fn box_width_and_center() {
        let p = ds(&[&[0.0, 0.0], &[2.0, 4.0], &[1.0, 1.0]]);
        let s = compute_stats(&p, 2.0).unwrap();
        assert_eq!(s.bw, 4.0);
        assert_eq!(s.ct.as_slice(), &[1.0, 2.0]);
        assert_eq!(s.diameter(), 20f64.sqrt());
    }

    #[test]
    fn singleton_is_degenerate() {
        let p = ds(&[&[5.0, 5.0]]);
        let s = compute_stats(&p, 2.0).unwrap();
        assert_eq!((s.bw, s.diameter(), s.radius), (0.0, 0.0, 0.0));
    }

    #[test]
    fn radius_formula() {
        // (1 + 3) * sqrt(2) * 2 / (2 * 2) = 2 sqrt(2)
        let p = ds(&[&[-1.0, 0.0], &[1.0, 0.0]]);
        let s = compute_stats(&p, 3.0).unwrap();
        assert_eq!(s.bw, 2.0);
        assert_eq!(s.ct.as_slice(), &[0.0, 0.0]);
        let hand = 4.0 * 2f64.sqrt() * 2.0 / (2.0 * 2.0);
        assert!((s.radius - hand).abs() < 1e-15);
        assert!((s.radius - 2.0 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn stats_reject_bad_c() {
        let p = ds(&[&[0.0]]);
        assert!(compute_stats(&p, 1.0).is_err());
        assert!(compute_stats(&p, f64::NAN).is_err());
    }

    #[test]
    fn stats_are_reproducible() {
        let p = ds(&[&[0.3, -1.7], &[2.25, 4.0], &[1.0, 1e-3]]);
        let a = compute_stats(&p, 1.5).unwrap();
        let b = compute_stats(&p, 1.5).unwrap();
        assert_eq!(a.bw.to_bits(), b.bw.to_bits());
        assert_eq!(a.radius.to_bits(), b.radius.to_bits());
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            Dataset::from_flat(2, vec![0.0, 1.0, f64::NAN, 0.0]),
            Err(AfnError::NonFinite { point: 1, coord: 0 })
        ));
        assert!(Dataset::from_flat(2, vec![0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn furthest_examples() {
        let p = ds(&[&[0.0], &[10.0]]);
        assert_eq!(exact_furthest(&p, &[0.0]).unwrap(), (1, 10.0));

        let p = ds(&[&[1.0, 1.0]]);
        assert_eq!(exact_furthest(&p, &[1.0, 1.0]).unwrap(), (0, 0.0));

        let p = ds(&[&[-1.0; 4], &[1.0; 4]]);
        assert_eq!(exact_furthest(&p, &[-1.0; 4]).unwrap(), (1, 4.0));

        assert!(matches!(exact_furthest(&p, &[0.0; 3]), Err(AfnError::DimensionMismatch { expected: 4, got: 3 })));
    }

    #[test]
    fn furthest_ties_prefer_smallest_id() {
        let p = ds(&[&[1.0], &[-1.0], &[1.0]]);
        assert_eq!(exact_furthest(&p, &[0.0]).unwrap().0, 0);
    }
}
