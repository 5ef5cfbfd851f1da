//! Distance oracles for the final candidate-selection stage.

use crate::rng::splitmix64;
use crate::vector::dist;

/// Returns distance estimates `d~` with `(1 - eps) ||q - x|| <= d~ <= (1 + eps) ||q - x||`.
pub trait DistanceOracle: Sync {
    fn eps(&self) -> f64;

    /// Estimate of `||q - x||`; `id` is the dataset id of `x`.
    fn estimate(&self, q: &[f64], x: &[f64], id: u32) -> f64;
}

/// Exact Euclidean distances (`eps = 0`).
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactOracle;

pub fn exact_oracle() -> ExactOracle {
    ExactOracle
}

impl DistanceOracle for ExactOracle {
    fn eps(&self) -> f64 {
        0.0
    }

    fn estimate(&self, q: &[f64], x: &[f64], _id: u32) -> f64 {
        dist(q, x)
    }
}

/// Test double that scales each exact distance by a factor in
/// `[1 - eps, 1 + eps]`. The factor is a deterministic hash of
/// `(seed, id, q)`, so repeated calls agree.
#[derive(Debug, Clone, Copy)]
pub struct NoisyOracle {
    pub eps: f64,
    pub seed: u64,
}

impl NoisyOracle {
    pub fn new(eps: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&eps), "eps must lie in [0, 1)");
        NoisyOracle { eps, seed }
    }

    fn factor(&self, q: &[f64], id: u32) -> f64 {
        let mut h = splitmix64(self.seed ^ u64::from(id).rotate_left(32));
        for x in q {
            h = splitmix64(h ^ x.to_bits());
        }
        // 53 high bits -> uniform in [0, 1)
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        1.0 + self.eps * (2.0 * u - 1.0)
    }
}

impl DistanceOracle for NoisyOracle {
    fn eps(&self) -> f64 {
        self.eps
    }

    fn estimate(&self, q: &[f64], x: &[f64], id: u32) -> f64 {
        dist(q, x) * self.factor(q, id)
    }
}
