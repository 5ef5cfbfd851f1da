//! Algorithm parameters and how they are derived from `(n, d, c)`.

use serde::{Deserialize, Serialize};

use crate::error::{AfnError, Result};

pub const DEFAULT_CONST_N: f64 = 4.0;
pub const DEFAULT_CONST_K: f64 = 1.0;
pub const DEFAULT_CONST_M: f64 = 2.0;
pub const DEFAULT_C_N: usize = 8;
/// Outlier budget per projection vector; each base returns
/// `OUTLIER_FACTOR * N + 1` candidate pairs.
pub const OUTLIER_FACTOR: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Approximation factor, `> 1`.
    pub c: f64,
    /// Relative error of the distance oracle.
    pub eps: f64,
    /// Slack of the goodness definition, in `[0, 1/2]` (`1/n`, so `n = 2`
    /// sits on the closed end).
    pub delta: f64,
    /// Projection threshold, the root of `e^{t^2 (1-delta)^2 / (2 (1+delta)^2)} / t = 2n`.
    pub t: f64,
    /// Projection vectors per base structure.
    pub n_proj: usize,
    /// Number of base structures.
    pub k: usize,
    /// Bases sampled per query.
    pub m: usize,
    pub const_n: f64,
    pub const_k: f64,
    pub const_m: f64,
    /// Candidate-pair constant of the oblivious baseline.
    pub c_n: usize,
    /// Outlier budget factor; lists keep `outlier_factor * N + 1` entries.
    pub outlier_factor: usize,
}

impl Params {
    /// Entries kept per sorted list and pairs popped per base query.
    pub fn candidates_per_base(&self) -> usize {
        self.outlier_factor * self.n_proj + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AfnError::Parameter(msg));
        if !(self.c > 1.0 && self.c.is_finite()) {
            return bad(format!("c must be a finite value > 1, got {}", self.c));
        }
        if !(self.eps >= 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in [0, 1), got {}", self.eps));
        }
        if !(0.0..=0.5).contains(&self.delta) {
            return bad(format!("delta must lie in [0, 1/2], got {}", self.delta));
        }
        if !(self.t >= 1.0 && self.t.is_finite()) {
            return bad(format!("t must be >= 1, got {}", self.t));
        }
        if self.n_proj == 0 || self.k == 0 || self.m == 0 || self.c_n == 0 || self.outlier_factor == 0 {
            return bad("N, k, m, c_N and the outlier factor must all be >= 1".into());
        }
        if self.m > self.k {
            return bad(format!("m = {} exceeds k = {}", self.m, self.k));
        }
        for (name, v) in [("const_N", self.const_n), ("const_k", self.const_k), ("const_m", self.const_m)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Optional replacements for derived values, applied by [`derive_params`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamOverrides {
    pub delta: Option<f64>,
    pub t: Option<f64>,
    pub n_proj: Option<usize>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub const_n: Option<f64>,
    pub const_k: Option<f64>,
    pub const_m: Option<f64>,
    pub c_n: Option<usize>,
    pub outlier_factor: Option<usize>,
}

/// Log-space form of the threshold equation: `g(t) = t^2 r / 2 - ln t - ln(2n)`
/// with `r = ((1 - delta) / (1 + delta))^2`.
fn log_residual(t: f64, r: f64, log_target: f64) -> f64 {
    0.5 * t * t * r - t.ln() - log_target
}

/// Solves `e^{t^2 (1-delta)^2 / (2 (1+delta)^2)} / t = 2n` on the increasing
/// branch `t >= (1 + delta) / (1 - delta)`.
///
/// The left-hand side is minimised at the branch point with value
/// `sqrt(e) (1 - delta) / (1 + delta) < 2 <= 2n`, so the root exists for
/// every `delta` in `[0, 1)`.
pub fn solve_t(n: u64, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(AfnError::Parameter("n must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(AfnError::Parameter(format!("delta must lie in [0, 1), got {delta}")));
    }
    let ratio = (1.0 - delta) / (1.0 + delta);
    let r = ratio * ratio;
    let log_target = (2.0 * n as f64).ln();
    let mut lo = 1.0 / ratio;
    let mut hi = 2.0 * lo;
    while log_residual(hi, r, log_target) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if log_residual(mid, r, log_target) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Both ends bracket the root to the last ulp; pick the smaller residual.
    if log_residual(lo, r, log_target).abs() < log_residual(hi, r, log_target).abs() {
        Ok(lo)
    } else {
        Ok(hi)
    }
}

/// Fills in every parameter from `(n, d, c, eps)`.
///
/// * `delta = 1/n`, `t = solve_t(n, delta)`
/// * `N = ceil(const_N * n^{1/c^2} * sqrt(ln n))`
/// * `k = ceil(const_k * d * ln(d n / (c - 1)))`
/// * `m = ceil(const_m * log2 n)`, clamped to `k` unless set explicitly
pub fn derive_params(n: usize, d: usize, c: f64, eps: f64, ov: &ParamOverrides) -> Result<Params> {
    if n < 2 {
        return Err(AfnError::Parameter(format!("derive_params needs n >= 2, got {n}")));
    }
    if d == 0 {
        return Err(AfnError::Parameter("d must be at least 1".into()));
    }
    if !(c > 1.0 && c.is_finite()) {
        return Err(AfnError::Parameter(format!("c must be a finite value > 1, got {c}")));
    }
    let nf = n as f64;
    let const_n = ov.const_n.unwrap_or(DEFAULT_CONST_N);
    let const_k = ov.const_k.unwrap_or(DEFAULT_CONST_K);
    let const_m = ov.const_m.unwrap_or(DEFAULT_CONST_M);

    let delta = ov.delta.unwrap_or(1.0 / nf);
    let t = match ov.t {
        Some(t) => t,
        None => solve_t(n as u64, delta)?,
    };
    let n_proj = ov.n_proj.unwrap_or_else(|| ceil_count(const_n * nf.powf(1.0 / (c * c)) * nf.ln().sqrt()));
    let k = ov.k.unwrap_or_else(|| ceil_count(const_k * d as f64 * (d as f64 * nf / (c - 1.0)).ln()));
    let m = match ov.m {
        Some(m) => m,
        None => ceil_count(const_m * nf.log2()).min(k),
    };
    let params = Params {
        c,
        eps,
        delta,
        t,
        n_proj,
        k,
        m,
        const_n,
        const_k,
        const_m,
        c_n: ov.c_n.unwrap_or(DEFAULT_C_N),
        outlier_factor: ov.outlier_factor.unwrap_or(OUTLIER_FACTOR),
    };
    params.validate()?;
    Ok(params)
}

fn ceil_count(x: f64) -> usize {
    // Guard against values like 20.000000000000004 from log2 of exact powers.
    let r = x.round();
    let v = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    (v as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual_rel(t: f64, n: u64, delta: f64) -> f64 {
        let r = ((1.0 - delta) / (1.0 + delta)).powi(2);
        let f = (t * t * r / 2.0).exp() / t;
        (f - 2.0 * n as f64).abs() / (2.0 * n as f64)
    }

    #[test]
    fn t_examples() {
        let t = solve_t(1, 0.0).unwrap();
        assert!((t - 1.468).abs() < 1e-3, "{t}");
        let t = solve_t(1_000_000, 1e-6).unwrap();
        assert!((t - 5.70).abs() < 5e-3, "{t}");
    }

    #[test]
    fn t_residual_and_branch() {
        for n in [1u64, 2, 3, 17, 256, 1000, 1 << 20, 1_000_000_000] {
            for delta in [0.0, 1.0 / n as f64 * 0.999, 0.25, 0.5, 0.9] {
                let t = solve_t(n, delta).unwrap();
                assert!(t >= (1.0 + delta) / (1.0 - delta));
                assert!(residual_rel(t, n, delta) <= 1e-9, "n={n} delta={delta}");
            }
        }
    }

    #[test]
    fn t_monotone_in_n() {
        let mut prev = 0.0;
        for n in [1u64, 2, 4, 10, 100, 10_000, 1 << 30] {
            let t = solve_t(n, 0.01).unwrap();
            assert!(t > prev);
            prev = t;
        }
    }

    #[test]
    fn t_rejects_bad_inputs() {
        assert!(solve_t(0, 0.0).is_err());
        assert!(solve_t(10, 1.0).is_err());
        assert!(solve_t(10, -0.1).is_err());
    }

    #[test]
    fn derived_values() {
        let p = derive_params(256, 32, 2.0, 0.0, &ParamOverrides::default()).unwrap();
        // ceil(4 * 256^{1/4} * sqrt(ln 256)) = ceil(4 * 4 * 2.3548) = 38
        assert_eq!(p.n_proj, 38);
        assert_eq!(p.delta, 1.0 / 256.0);
        assert_eq!(p.candidates_per_base(), 8 * 38 + 1);

        let p = derive_params(1024, 8, 2.0, 0.0, &ParamOverrides::default()).unwrap();
        assert_eq!(p.m, 20);
        // k = ceil(8 * ln(8192)) = ceil(72.09)
        assert_eq!(p.k, 73);
    }

    #[test]
    fn overrides_apply() {
        let ov = ParamOverrides {
            n_proj: Some(3),
            k: Some(5),
            m: Some(2),
            c_n: Some(4),
            delta: Some(0.1),
            ..Default::default()
        };
        let p = derive_params(100, 4, 1.5, 0.1, &ov).unwrap();
        assert_eq!((p.n_proj, p.k, p.m, p.c_n), (3, 5, 2, 4));
        assert_eq!(p.t, solve_t(100, 0.1).unwrap());
    }

    #[test]
    fn m_is_clamped_to_k() {
        let ov = ParamOverrides { k: Some(3), ..Default::default() };
        assert_eq!(derive_params(1024, 4, 2.0, 0.0, &ov).unwrap().m, 3);
        let ov = ParamOverrides { k: Some(3), m: Some(4), ..Default::default() };
        assert!(derive_params(1024, 4, 2.0, 0.0, &ov).is_err());
    }

    #[test]
    fn rejects_bad_c() {
        assert!(matches!(derive_params(10, 2, 1.0, 0.0, &ParamOverrides::default()), Err(AfnError::Parameter(_))));
        assert!(derive_params(1, 2, 2.0, 0.0, &ParamOverrides::default()).is_err());
    }
}
