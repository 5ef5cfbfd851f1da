//! White-box query construction against a projection-based index.
//!
//! The dataset holds `n/2` copies of `p- = -1` and `n/2` copies of `p+ = +1`.
//! Given the realized projection vectors, the query
//!
//! ```text
//! q = p- + x * y * v,   v = a_1 / ||a_1||,   y = sgn(<a_1, p+ - p->)
//! ```
//!
//! sits at distance `x` from `p-` and roughly `2 sqrt(d)` from `p+`, yet every
//! copy of `p-` paired with `a_1` scores `x ||a_1||`, which beats every pair
//! involving `p+` once `x` is large enough. The oblivious baseline then fills
//! all of its candidate slots with copies of `p-`.

use serde::{Deserialize, Serialize};

use crate::base::ProjectionMatrix;
use crate::dataset::{exact_furthest, Dataset};
use crate::error::{AfnError, Result};
use crate::vector::{axpy, dist, dot, norm, sub, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XMode {
    /// `x = d^{0.01}` (scaled by `||p+ - p-|| / (2 sqrt(d))` for general pairs).
    Paper,
    /// Smallest `x` found by a doubling-then-bisection search for which the
    /// realized vectors satisfy the attack conditions.
    Certified,
}

/// Which of the attack's sufficient conditions hold on the realized vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `||a_1|| >= sqrt(d) / 2`
    pub norm_a1_ok: bool,
    /// `x > |<p+ - p-, v>| / 2`
    pub x_gt_half_inner: bool,
    /// `x ||a_1|| > |<q - p+, a_i>|` for every `i`, including `i = 1`.
    pub a1_dominates_all: bool,
    /// `x < ||p+ - p-|| / 2` (`= sqrt(d)` on the attack dataset).
    pub x_lt_half_gap: bool,
    /// `n >= 2 c_N N`; filled in once the dataset size is known.
    pub n_ge_2cn_n: Option<bool>,
}

impl Certificate {
    /// All realized-vector conditions hold (the size condition is checked
    /// separately when present).
    pub fn holds(&self) -> bool {
        self.x_gt_half_inner && self.a1_dominates_all && self.x_lt_half_gap && self.n_ge_2cn_n.unwrap_or(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackInstance {
    pub p_minus: Point,
    pub p_plus: Point,
    /// Unit vector along the targeted projection vector.
    pub v: Point,
    pub y: f64,
    pub x: f64,
    pub q: Point,
    /// Row of the matrix playing the role of `a_1`.
    pub target: usize,
    pub mode: XMode,
    pub certificate: Certificate,
}

impl AttackInstance {
    pub fn certify_size(&mut self, n: usize, c_n: usize, n_proj: usize) {
        self.certificate.n_ge_2cn_n = Some(attack_size_ok(n, c_n, n_proj));
    }
}

/// `n >= 2 c_N N`: enough copies of `p-` to fill every candidate slot.
pub fn attack_size_ok(n: usize, c_n: usize, n_proj: usize) -> bool {
    n >= 2 * c_n * n_proj
}

/// `n/2` copies of `-1` (ids `0..n/2`) followed by `n/2` copies of `+1`.
pub fn build_attack_dataset(n: usize, d: usize) -> Result<Dataset> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(AfnError::Input(format!("attack dataset needs an even n >= 2, got {n}")));
    }
    if d == 0 {
        return Err(AfnError::Input("d must be at least 1".into()));
    }
    let mut coords = vec![-1.0; n / 2 * d];
    coords.extend(std::iter::repeat_n(1.0, n / 2 * d));
    Dataset::from_flat(d, coords)
}

/// `sgn` with `sgn(0) = +1`.
fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Crafts the attack query against `a_all` on the `+-1` dataset, with row 0
/// as `a_1`.
pub fn craft_attack_query(a_all: &ProjectionMatrix, mode: XMode, x_override: Option<f64>) -> Result<AttackInstance> {
    let d = a_all.dim();
    let p_minus = Point::filled(d, -1.0)?;
    let p_plus = Point::filled(d, 1.0)?;
    craft_query_against(&p_minus, &p_plus, a_all, 0, mode, x_override)
}

/// Precomputed pieces of `<q(x) - p+, a_i> = <p- - p+, a_i> + x y <v, a_i>`.
struct Geometry {
    a1_norm: f64,
    half_inner: f64,
    /// `(<p- - p+, a_i>, y <v, a_i>)` for `i != target`
    others: Vec<(f64, f64)>,
    half_gap: f64,
}

impl Geometry {
    fn max_other(&self, x: f64) -> f64 {
        self.others.iter().map(|(b, s)| (b + x * s).abs()).fold(0.0, f64::max)
    }

    fn passes(&self, x: f64) -> bool {
        x > self.half_inner && x * self.a1_norm > self.max_other(x) && x < self.half_gap
    }
}

/// General form: target row `target` of `a_all`, push `q` from `p_minus`
/// towards `p_plus` along that row.
pub fn craft_query_against(
    p_minus: &[f64],
    p_plus: &[f64],
    a_all: &ProjectionMatrix,
    target: usize,
    mode: XMode,
    x_override: Option<f64>,
) -> Result<AttackInstance> {
    let d = a_all.dim();
    AfnError::check_dim(d, p_minus.len())?;
    AfnError::check_dim(d, p_plus.len())?;
    if target >= a_all.len() {
        return Err(AfnError::Input(format!("target row {target} out of range")));
    }
    let a1 = a_all.vector(target);
    let a1_norm = norm(a1);
    if a1_norm == 0.0 {
        return Err(AfnError::Input("targeted projection vector is zero".into()));
    }
    let v: Vec<f64> = a1.iter().map(|x| x / a1_norm).collect();
    let gap = sub(p_plus, p_minus);
    let gap_norm = norm(&gap);
    if gap_norm == 0.0 {
        return Err(AfnError::Input("p- and p+ coincide".into()));
    }
    let y = sign(dot(a1, &gap));
    let sqrt_d = (d as f64).sqrt();
    let geo = Geometry {
        a1_norm,
        half_inner: 0.5 * dot(&gap, &v).abs(),
        others: a_all
            .vectors()
            .enumerate()
            .filter(|&(i, _)| i != target)
            .map(|(_, a)| (-dot(&gap, a), y * dot(&v, a)))
            .collect(),
        half_gap: 0.5 * gap_norm,
    };
    // Lengths are measured in units where the +-1 dataset has gap 2 sqrt(d).
    let unit = gap_norm / (2.0 * sqrt_d);

    let x = match (x_override, mode) {
        (Some(x), _) => {
            if !(x > 0.0 && x.is_finite()) {
                return Err(AfnError::Input(format!("x must be positive, got {x}")));
            }
            x
        }
        (None, XMode::Paper) => (d as f64).powf(0.01) * unit,
        (None, XMode::Certified) => certified_x(&geo, unit, sqrt_d).ok_or_else(|| {
            let upper = 2.0 * sqrt_d * unit;
            AfnError::AttackInfeasible(format!(
                "no certified x in [{unit:.4}, {upper:.4}]: ||a_1|| = {:.4}, |<p+ - p-, v>| / 2 = {:.4}, \
                 max_(i != 1) |<q - p+, a_i>| at x = sqrt(d) is {:.4}, half gap {:.4}",
                geo.a1_norm,
                geo.half_inner,
                geo.max_other(sqrt_d * unit),
                geo.half_gap,
            ))
        })?,
    };

    let q = axpy(p_minus, x * y, &v);
    let certificate = certify(p_minus, p_plus, &q, a_all, target, x, &v);
    Ok(AttackInstance {
        p_minus: Point::new(p_minus.to_vec())?,
        p_plus: Point::new(p_plus.to_vec())?,
        v: Point::new(v)?,
        y,
        x,
        q: Point::new(q)?,
        target,
        mode,
        certificate,
    })
}

fn certified_x(geo: &Geometry, unit: f64, sqrt_d: f64) -> Option<f64> {
    let upper = 2.0 * sqrt_d * unit;
    let mut lo = None;
    let mut x = unit;
    let hi = loop {
        if x > upper {
            return None;
        }
        if geo.passes(x) {
            break x;
        }
        lo = Some(x);
        x *= 2.0;
    };
    let Some(mut lo) = lo else { return Some(hi) };
    let mut hi = hi;
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if geo.passes(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Step a hair past the boundary so the strict inequalities survive the
    // rounding in forming q.
    let nudged = hi * (1.0 + 1e-9);
    Some(if geo.passes(nudged) { nudged } else { hi })
}

fn certify(
    p_minus: &[f64],
    p_plus: &[f64],
    q: &[f64],
    a_all: &ProjectionMatrix,
    target: usize,
    x: f64,
    v: &[f64],
) -> Certificate {
    let a1 = a_all.vector(target);
    let a1_norm = norm(a1);
    let d = a_all.dim() as f64;
    let gap = sub(p_plus, p_minus);
    let q_plus = sub(q, p_plus);
    let lead = x * a1_norm;
    Certificate {
        norm_a1_ok: a1_norm >= d.sqrt() / 2.0,
        x_gt_half_inner: x > 0.5 * dot(&gap, v).abs(),
        a1_dominates_all: a_all.vectors().all(|a| lead > dot(&q_plus, a).abs()),
        x_lt_half_gap: x < 0.5 * norm(&gap),
        n_ge_2cn_n: None,
    }
}

/// Diagnostic evaluation of every quantity the attack's analysis bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub d: usize,
    pub x: f64,
    pub norm_a1: f64,
    /// `||a_1|| > sqrt(d) / 2`
    pub norm_a1_above_half_sqrt_d: bool,
    pub dist_q_minus: f64,
    pub dist_q_plus: f64,
    /// `||q - p+|| / ||q - p-||`
    pub ratio: f64,
    /// Hypothesis `x < sqrt(d)` and conclusion `||q - p+|| > sqrt(d)`.
    pub far_hypothesis: bool,
    pub far_conclusion: bool,
    /// `|<p+ - p-, v>|`
    pub inner_gap_v: f64,
    /// Hypothesis `x > |<p+ - p-, v>| / 2` and conclusion
    /// `|<q - p+, a_1>| < |<q - p-, a_1>|`.
    pub comparison_hypothesis: bool,
    pub comparison_conclusion: bool,
    pub proj_plus_a1: f64,
    pub proj_minus_a1: f64,
    /// `|<p+ - p-, v>| <= d^{0.01}`
    pub inner_gap_within_d001: bool,
    /// `max_{i != 1} |<q - p+, a_i>|`
    pub max_other_proj: f64,
    /// Realized tail multiplier `max_other / (2 sqrt(d) + x)` and its ratio to
    /// `sqrt(ln N)`.
    pub tail_t: f64,
    pub tail_t_over_sqrt_log_n: f64,
    /// `|<q - p-, a_1>| = x ||a_1||` to `1e-9` relative.
    pub inner_identity_holds: bool,
    pub truth_id: u32,
    pub truth_is_p_plus: bool,
}

/// Evaluates the attack's analysis on a crafted instance.
pub fn verify_attack(p: &Dataset, inst: &AttackInstance, a_all: &ProjectionMatrix) -> Result<AttackReport> {
    let d = a_all.dim();
    let sqrt_d = (d as f64).sqrt();
    let a1 = a_all.vector(inst.target);
    let norm_a1 = norm(a1);
    let q = &inst.q;
    let dist_q_minus = dist(q, &inst.p_minus);
    let dist_q_plus = dist(q, &inst.p_plus);
    let gap = sub(&inst.p_plus, &inst.p_minus);
    let inner_gap_v = dot(&gap, &inst.v).abs();
    let q_plus = sub(q, &inst.p_plus);
    let q_minus = sub(q, &inst.p_minus);
    let proj_plus_a1 = dot(&q_plus, a1).abs();
    let proj_minus_a1 = dot(&q_minus, a1).abs();
    let max_other_proj = a_all
        .vectors()
        .enumerate()
        .filter(|&(i, _)| i != inst.target)
        .map(|(_, a)| dot(&q_plus, a).abs())
        .fold(0.0, f64::max);
    let tail_t = max_other_proj / (2.0 * sqrt_d + inst.x);
    let n_proj = a_all.len() as f64;
    let (truth_id, truth_dist) = exact_furthest(p, q)?;
    let rhs = inst.x * norm_a1;
    Ok(AttackReport {
        d,
        x: inst.x,
        norm_a1,
        norm_a1_above_half_sqrt_d: norm_a1 > sqrt_d / 2.0,
        dist_q_minus,
        dist_q_plus,
        ratio: dist_q_plus / dist_q_minus,
        far_hypothesis: inst.x < sqrt_d,
        far_conclusion: dist_q_plus > sqrt_d,
        inner_gap_v,
        comparison_hypothesis: inst.x > 0.5 * inner_gap_v,
        comparison_conclusion: proj_plus_a1 < proj_minus_a1,
        proj_plus_a1,
        proj_minus_a1,
        inner_gap_within_d001: inner_gap_v <= (d as f64).powf(0.01),
        max_other_proj,
        tail_t,
        tail_t_over_sqrt_log_n: if n_proj > 1.0 { tail_t / n_proj.ln().sqrt() } else { f64::NAN },
        inner_identity_holds: (proj_minus_a1 - rhs).abs() <= 1e-9 * rhs,
        truth_id,
        truth_is_p_plus: dist(p.point(truth_id as usize), &inst.p_plus) == 0.0 && truth_dist > 0.0,
    })
}
