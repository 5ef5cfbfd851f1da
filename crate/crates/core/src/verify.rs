//! Executable versions of the analysis devices: grid coverings of the query
//! ball, goodness transfer to nearby queries, concentration of goodness over
//! `k` independent matrices, base-sampling coverage and Gaussian tails.
//!
//! None of this is on the query path. Costs are `O(nNd)` per call or worse.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{GoodnessEvaluator, GoodnessReport, ProjectionMatrix};
use crate::dataset::{exact_diameter, Dataset};
use crate::error::{AfnError, Result};
use crate::rng::RngStream;
use crate::robust::sample_indices;
use crate::vector::{dist, norm, Point};

/// Grid `eta * Z^d` restricted to `B(0, radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub eta: f64,
    pub radius: f64,
    pub d: usize,
}

impl GridSpec {
    pub fn new(eta: f64, radius: f64, d: usize) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) || !(radius > 0.0 && radius.is_finite()) || d == 0 {
            return Err(AfnError::Parameter(format!("invalid grid eta={eta} radius={radius} d={d}")));
        }
        Ok(GridSpec { eta, radius, d })
    }

    /// Spacing `bw / (sqrt(d) n^3)` used to cover the query ball.
    pub fn analysis_spacing(bw: f64, d: usize, n: usize) -> f64 {
        bw / ((d as f64).sqrt() * (n as f64).powi(3))
    }
}

/// Rounds each coordinate of `q / eta` towards zero and scales back, so
/// `||g|| <= ||q||` and `||g - q|| <= sqrt(d) eta`.
pub fn grid_snap(q: &[f64], eta: f64) -> Result<Point> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(AfnError::Parameter(format!("eta must be positive, got {eta}")));
    }
    let g = q
        .iter()
        .map(|&x| {
            let s = x / eta;
            let k = if x >= 0.0 { s.floor() } else { s.ceil() };
            // -0.0 from ceil of a small negative ratio
            eta * k + 0.0
        })
        .collect();
    Point::new(g)
}

/// `ceil((2 r / eta + 1)^d)`, or `None` when it does not fit in a `u64`.
pub fn grid_cardinality_bound(r: f64, eta: f64, d: usize) -> Option<u64> {
    if !(r >= 0.0 && eta > 0.0) {
        return None;
    }
    let v = (2.0 * r / eta + 1.0).powf(d as f64).ceil();
    if v.is_finite() && v < u64::MAX as f64 {
        Some(v as u64)
    } else {
        None
    }
}

/// Every point of the grid, for `d <= 3`.
pub fn enumerate_grid(spec: &GridSpec) -> Result<Vec<Point>> {
    if spec.d > 3 {
        return Err(AfnError::Parameter(format!("grid enumeration is limited to d <= 3, got {}", spec.d)));
    }
    let m = (spec.radius / spec.eta).floor() as i64;
    if grid_cardinality_bound(spec.radius, spec.eta, spec.d).is_none_or(|b| b > 50_000_000) {
        return Err(AfnError::Parameter("grid too large to enumerate".into()));
    }
    let mut out = Vec::new();
    let mut idx = vec![-m; spec.d];
    loop {
        let g: Vec<f64> = idx.iter().map(|&i| spec.eta * i as f64).collect();
        if norm(&g) <= spec.radius {
            out.push(Point::new(g)?);
        }
        let mut j = 0;
        loop {
            if j == spec.d {
                return Ok(out);
            }
            idx[j] += 1;
            if idx[j] <= m {
                break;
            }
            idx[j] = -m;
            j += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// `||q - q'|| <= diameter / n^3`
    pub close_enough: bool,
    /// `delta >= 1/n`
    pub slack_ok: bool,
    /// Every projection vector has norm at most `n`.
    pub norms_ok: bool,
    pub hypotheses_met: bool,
    pub distance: f64,
    pub diameter: f64,
    pub q_report: GoodnessReport,
    /// `(c, 0)`-goodness of `q'`; evaluated whenever `q` is `(c, delta)`-good.
    pub q_prime_report: Option<GoodnessReport>,
    /// `Some(false)` is a counterexample: hypotheses met, `q` good, `q'` not.
    pub holds: Option<bool>,
}

/// Checks that `(c, delta)`-goodness of `q` carries over as
/// `(c, 0)`-goodness to a nearby `q'`.
pub fn goodness_transfer_check(
    p: &Dataset,
    q: &[f64],
    q_prime: &[f64],
    a: &ProjectionMatrix,
    c: f64,
    delta: f64,
    t: f64,
) -> Result<TransferReport> {
    let diameter = exact_diameter(p);
    transfer_with_diameter(p, diameter, q, q_prime, a, c, delta, t)
}

/// Same as [`goodness_transfer_check`] with a precomputed diameter.
#[allow(clippy::too_many_arguments)]
pub fn transfer_with_diameter(
    p: &Dataset,
    diameter: f64,
    q: &[f64],
    q_prime: &[f64],
    a: &ProjectionMatrix,
    c: f64,
    delta: f64,
    t: f64,
) -> Result<TransferReport> {
    let n = p.len() as f64;
    let distance = dist(q, q_prime);
    let close_enough = distance <= diameter / n.powi(3);
    let slack_ok = delta >= 1.0 / n;
    let norms_ok = a.max_norm() <= n;
    let hypotheses_met = close_enough && slack_ok && norms_ok;

    let eval = GoodnessEvaluator::new(p, a)?;
    let q_report = eval.evaluate(q, c, delta, t)?;
    let q_prime_report = if q_report.is_good { Some(eval.evaluate(q_prime, c, 0.0, t)?) } else { None };
    let holds = match (&q_prime_report, hypotheses_met) {
        (Some(r), true) => Some(r.is_good),
        _ => None,
    };
    Ok(TransferReport {
        close_enough,
        slack_ok,
        norms_ok,
        hypotheses_met,
        distance,
        diameter,
        q_report,
        q_prime_report,
        holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub k: usize,
    pub trials: usize,
    pub queries: usize,
    /// Fraction of `(trial, query)` pairs good for fewer than `k/2` matrices.
    pub failure_fraction: f64,
    /// Fraction of `(matrix, query)` pairs that are good.
    pub per_matrix_rate: f64,
}

/// Settings shared by every matrix in a concentration experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodnessSetup {
    pub n_proj: usize,
    pub norm_cap: usize,
    pub c: f64,
    pub delta: f64,
    pub t: f64,
}

/// For each trial, draws `k` fresh matrices and counts, per query, how many
/// of them the query is good for. Trial `i` uses stream `stream.derive(i)`.
pub fn k_half_concentration(
    p: &Dataset,
    queries: &[Point],
    k: usize,
    trials: usize,
    setup: GoodnessSetup,
    stream: RngStream,
) -> Result<ConcentrationReport> {
    if k == 0 || trials == 0 || queries.is_empty() {
        return Err(AfnError::Parameter("k, trials and the query sample must be non-empty".into()));
    }
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.derive(i as u64).rng();
            let mut counts = vec![0usize; queries.len()];
            for _ in 0..k {
                let a = ProjectionMatrix::gaussian(p.dim(), setup.n_proj, setup.norm_cap, &mut rng);
                let eval = GoodnessEvaluator::new(p, &a)?;
                for (cnt, q) in counts.iter_mut().zip(queries) {
                    if eval.evaluate(q, setup.c, setup.delta, setup.t)?.is_good {
                        *cnt += 1;
                    }
                }
            }
            // count < k/2, with k/2 real-valued
            let failures = counts.iter().filter(|&&c| 2 * c < k).count();
            Ok((failures, counts.iter().sum::<usize>()))
        })
        .collect::<Result<Vec<_>>>()?;
    let cells = (trials * queries.len()) as f64;
    let failures: usize = per_trial.iter().map(|x| x.0).sum();
    let good: usize = per_trial.iter().map(|x| x.1).sum();
    Ok(ConcentrationReport {
        k,
        trials,
        queries: queries.len(),
        failure_fraction: failures as f64 / cells,
        per_matrix_rate: good as f64 / (cells * k as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub k: usize,
    pub m: usize,
    pub trials: usize,
    pub misses: usize,
    pub miss_rate: f64,
    /// `2^-m`
    pub bound: f64,
    /// `bound + 3 sigma` of a binomial estimate at rate `bound`.
    pub tolerance: f64,
    pub within: bool,
}

/// Marks bases `0..k/2` as good and measures how often `m` indices sampled
/// with repetition (the same sampler the query path uses) all land on bad
/// bases.
pub fn sampling_coverage(k: usize, m: usize, trials: usize, stream: RngStream) -> Result<CoverageReport> {
    if k < 2 || m == 0 || trials == 0 {
        return Err(AfnError::Parameter("need k >= 2, m >= 1 and trials >= 1".into()));
    }
    let good = k / 2;
    let misses = (0..trials as u64)
        .into_par_iter()
        .filter(|&i| sample_indices(stream.derive(i), k, m).iter().all(|&j| j >= good))
        .count();
    let bound = 0.5f64.powi(m as i32);
    let miss_rate = misses as f64 / trials as f64;
    let tolerance = bound + 3.0 * (bound * (1.0 - bound) / trials as f64).sqrt();
    Ok(CoverageReport { k, m, trials, misses, miss_rate, bound, tolerance, within: miss_rate <= tolerance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub x: f64,
    pub samples: usize,
    pub empirical: f64,
    /// `e^{-x^2/2} / x`
    pub upper: f64,
    /// `x / (1 + x^2) * phi(x)`; advisory only.
    pub lower: f64,
    pub sigma: f64,
    pub upper_ok: bool,
    pub lower_ok: bool,
}

/// Monte Carlo estimate of `Pr[Z >= x]` against the standard tail bounds.
pub fn gaussian_tail_check(x: f64, samples: usize, stream: RngStream) -> Result<TailReport> {
    if x.is_nan() || x <= 0.0 || samples == 0 {
        return Err(AfnError::Parameter("need x > 0 and at least one sample".into()));
    }
    let mut rng = stream.rng();
    let hits = (0..samples).filter(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) >= x).count();
    let empirical = hits as f64 / samples as f64;
    let sigma = (empirical * (1.0 - empirical) / samples as f64).sqrt();
    let phi = (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let upper = (-x * x / 2.0).exp() / x;
    let lower = x / (1.0 + x * x) * phi;
    Ok(TailReport {
        x,
        samples,
        empirical,
        upper,
        lower,
        sigma,
        upper_ok: empirical <= upper + 3.0 * sigma,
        lower_ok: empirical >= lower - 3.0 * sigma,
    })
}
