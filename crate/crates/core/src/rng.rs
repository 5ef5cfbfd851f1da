//! Seeded randomness.
//!
//! Every random choice in the crate is drawn from an [`RngStream`], a
//! `(master_seed, stream_id)` pair that maps to a ChaCha20 keystream. The seed
//! selects the key and the stream id selects one of 2^64 independent streams
//! under that key, so identical pairs replay bit-exactly and distinct pairs
//! do not overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::vector::{norm, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub const fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream { master_seed, stream_id }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream under the same master seed, keyed by `tag`.
    pub fn derive(&self, tag: u64) -> RngStream {
        RngStream {
            master_seed: self.master_seed,
            stream_id: splitmix64(splitmix64(self.stream_id) ^ tag.wrapping_mul(0xA24B_AED4_963E_E407)),
        }
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A standard Gaussian vector in `R^d`, resampled until its norm is below
/// `n_cap`.
pub fn gaussian_vector<R: Rng + ?Sized>(d: usize, n_cap: usize, rng: &mut R) -> Point {
    assert!(d >= 1, "dimension must be positive");
    assert!(n_cap >= 2, "norm cap must be at least 2");
    loop {
        let v = standard_normal_vec(d, rng);
        if norm(&v) < n_cap as f64 {
            return Point::from_vec_unchecked(v);
        }
    }
}

/// i.i.d. `N(0, 1)` coordinates with no norm cap.
pub fn standard_normal_vec<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Uniform draw from the Euclidean ball `B(center, radius)`.
pub fn uniform_in_ball<R: Rng + ?Sized>(center: &[f64], radius: f64, rng: &mut R) -> Vec<f64> {
    let d = center.len();
    let dir = loop {
        let g = standard_normal_vec(d, rng);
        let len = norm(&g);
        if len > 0.0 {
            break g.into_iter().map(|x| x / len).collect::<Vec<_>>();
        }
    };
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / d as f64);
    center.iter().zip(&dir).map(|(c, x)| c + r * x).collect()
}
