#![allow(dead_code)]

use afn_core::base::ProjectionMatrix;
use afn_core::dataset::Dataset;
use afn_core::rng::{standard_normal_vec, RngStream};
use afn_core::vector::{dist, dot};

pub fn gaussian_data(n: usize, d: usize, stream: RngStream) -> Dataset {
    let mut rng = stream.rng();
    Dataset::from_flat(d, standard_normal_vec(n * d, &mut rng)).unwrap()
}

/// Every `(a_j . p - a_j . q, id, j)` pair, ranked by value descending, then id,
/// then projection index, and cut to the first `take`.
pub fn brute_top_pairs(p: &Dataset, a: &ProjectionMatrix, q: &[f64], take: usize) -> Vec<(f64, u32, u32)> {
    let mut all = Vec::new();
    for (j, v) in a.vectors().enumerate() {
        let vq = dot(v, q);
        for (id, x) in p.iter().enumerate() {
            all.push((dot(v, x) - vq, id as u32, j as u32));
        }
    }
    all.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    all.truncate(take);
    all
}

pub struct NaiveGoodness {
    pub good_projection: bool,
    pub outliers: usize,
    pub is_good: bool,
}

/// Goodness written as a plain double loop over points and vectors.
pub fn naive_goodness(p: &Dataset, q: &[f64], a: &ProjectionMatrix, c: f64, delta: f64, t: f64) -> NaiveGoodness {
    let mut far = 0;
    for i in 0..p.len() {
        if dist(p.point(i), q) > dist(p.point(far), q) {
            far = i;
        }
    }
    let r = dist(p.point(far), q);
    let mut good_projection = false;
    let mut outliers = 0;
    for j in 0..a.len() {
        let v = a.vector(j);
        if dot(v, p.point(far)) - dot(v, q) >= t * r * (1.0 + delta) / c {
            good_projection = true;
        }
        if r == 0.0 {
            continue;
        }
        for i in 0..p.len() {
            let x = p.point(i);
            if dist(x, q) / r < (1.0 + delta) / c && dot(v, x) - dot(v, q) >= t * r * (1.0 - delta) / c {
                outliers += 1;
            }
        }
    }
    NaiveGoodness { good_projection, outliers, is_good: good_projection && outliers <= 8 * a.len() }
}
