//! The adaptive query game: each round the adversary sees every earlier
//! answer (and, for white-box strategies, the index's projection vectors)
//! before choosing its next query. Ground truth comes from the exact scan.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::attack::{craft_query_against, XMode};
use crate::adversary::oblivious::ObliviousIndex;
use crate::base::ProjectionMatrix;
use crate::dataset::{exact_furthest, Dataset, DatasetStats};
use crate::error::Result;
use crate::oracle::DistanceOracle;
use crate::rng::{standard_normal_vec, uniform_in_ball, RngStream};
use crate::robust::{query, RobustIndex};
use crate::vector::{axpy, dist, norm};

/// What a target reports for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAnswer {
    pub id: u32,
    pub reported: f64,
    pub trivial: bool,
    pub sampled: Vec<usize>,
}

/// An index the game can play against.
pub trait QueryTarget: Sync {
    fn name(&self) -> &'static str;
    fn data(&self) -> &Dataset;
    /// `(c, eps)`: an answer violates the guarantee when
    /// `max dist / answered dist > c (1 + eps)`.
    fn guarantee(&self) -> (f64, f64);
    /// `stream` is fresh for every call.
    fn answer(&self, q: &[f64], stream: RngStream) -> Result<TargetAnswer>;
    /// Read-only view of the internal projection vectors.
    fn matrices(&self) -> Vec<&ProjectionMatrix>;
}

pub struct RobustTarget<'a, O: DistanceOracle> {
    pub index: &'a RobustIndex,
    pub oracle: &'a O,
}

impl<O: DistanceOracle> QueryTarget for RobustTarget<'_, O> {
    fn name(&self) -> &'static str {
        "robust"
    }

    fn data(&self) -> &Dataset {
        self.index.data()
    }

    fn guarantee(&self) -> (f64, f64) {
        (self.index.params().c, self.oracle.eps())
    }

    fn answer(&self, q: &[f64], stream: RngStream) -> Result<TargetAnswer> {
        let ans = query(self.index, q, stream, self.oracle)?;
        Ok(TargetAnswer {
            id: ans.point_id,
            reported: ans.reported_distance,
            trivial: ans.trivial,
            sampled: ans.sampled_indices,
        })
    }

    fn matrices(&self) -> Vec<&ProjectionMatrix> {
        self.index.matrices().collect()
    }
}

pub struct ObliviousTarget<'a> {
    pub index: &'a ObliviousIndex,
    /// Approximation factor the answers are judged against.
    pub c: f64,
}

impl QueryTarget for ObliviousTarget<'_> {
    fn name(&self) -> &'static str {
        "oblivious"
    }

    fn data(&self) -> &Dataset {
        self.index.data()
    }

    fn guarantee(&self) -> (f64, f64) {
        (self.c, 0.0)
    }

    fn answer(&self, q: &[f64], _stream: RngStream) -> Result<TargetAnswer> {
        let ans = self.index.query_detailed(q)?;
        Ok(TargetAnswer { id: ans.point_id, reported: ans.distance, trivial: false, sampled: Vec::new() })
    }

    fn matrices(&self) -> Vec<&ProjectionMatrix> {
        vec![self.index.vectors()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform queries in `B(ct, R)`.
    Random,
    /// Attack queries aimed at one projection vector per round, cycling
    /// through every matrix and vector of the target.
    WhiteboxAttack,
    /// Local search: perturb the worst query so far, keep perturbations that
    /// push the answer further from optimal.
    Probe,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "random" => Ok(Strategy::Random),
            "whitebox_attack" | "whitebox" => Ok(Strategy::WhiteboxAttack),
            "probe" => Ok(Strategy::Probe),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub round: usize,
    pub query: Vec<f64>,
    pub answer_id: u32,
    pub truth_id: u32,
    /// Exact distance to the answered point (never the reported one).
    pub answer_dist: f64,
    pub truth_dist: f64,
    /// `truth_dist / answer_dist`; `+inf` when only the answer sits on `q`.
    pub ratio: f64,
    pub violated: bool,
    pub trivial: bool,
    pub sampled: Vec<usize>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryTranscript {
    pub target: String,
    pub strategy: Strategy,
    pub c: f64,
    pub eps: f64,
    pub rounds: Vec<Round>,
}

impl AdversaryTranscript {
    pub fn violations(&self) -> impl Iterator<Item = &Round> {
        self.rounds.iter().filter(|r| r.violated)
    }

    pub fn violation_count(&self) -> usize {
        self.violations().count()
    }

    pub fn max_ratio(&self) -> f64 {
        self.rounds.iter().map(|r| r.ratio).fold(1.0, f64::max)
    }

    /// One JSON object per round:
    /// `{round, query_digest, answer_id, truth_id, ratio, violated}`.
    /// An infinite ratio is written as `null`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            let rec = serde_json::json!({
                "round": r.round,
                "query_digest": query_digest(&r.query),
                "answer_id": r.answer_id,
                "truth_id": r.truth_id,
                "ratio": if r.ratio.is_finite() { Some(r.ratio) } else { None },
                "violated": r.violated,
            });
            writeln!(out, "{rec}").expect("writing to a String");
        }
        out
    }
}

/// SHA-256 of the little-endian coordinate bytes, hex encoded.
pub fn query_digest(q: &[f64]) -> String {
    let mut h = Sha256::new();
    for x in q {
        h.update(x.to_le_bytes());
    }
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").expect("writing to a String");
        s
    })
}

fn ratio_of(truth: f64, answer: f64) -> f64 {
    if answer > 0.0 {
        (truth / answer).max(1.0)
    } else if truth > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Plays `rounds` rounds of `strategy` against `target`. Adversary choices
/// use `stream.derive(u64::MAX)`; round `r` is answered with
/// `stream.derive(r)`.
pub fn adaptive_loop<T: QueryTarget + ?Sized>(
    target: &T,
    strategy: Strategy,
    rounds: usize,
    stream: RngStream,
) -> Result<AdversaryTranscript> {
    let data = target.data();
    let (c, eps) = target.guarantee();
    let stats = DatasetStats::box_only(data, c)?;
    let mut adv = stream.derive(u64::MAX).rng();
    let mut out = Vec::with_capacity(rounds);

    let mut last_answer: u32 = 0;
    // Probe state: worst query so far and its ratio.
    let mut probe_best: Option<(Vec<f64>, f64)> = None;
    let mut probe_step = stats.radius.max(1e-6) / 4.0;

    for r in 0..rounds {
        let (q, note) = match strategy {
            Strategy::Random => (uniform_in_ball(&stats.ct, stats.radius, &mut adv), String::from("uniform")),
            Strategy::WhiteboxAttack => whitebox_query(target, data, r, last_answer, &stats, &mut adv)?,
            Strategy::Probe => match &probe_best {
                None => (stats.ct.to_vec(), String::from("start at center")),
                Some((base, _)) => {
                    let dir = standard_normal_vec(data.dim(), &mut adv);
                    let len = norm(&dir).max(f64::MIN_POSITIVE);
                    (axpy(base, probe_step / len, &dir), format!("step {probe_step:.4e}"))
                }
            },
        };

        let ans = target.answer(&q, stream.derive(r as u64))?;
        let (truth_id, truth_dist) = exact_furthest(data, &q)?;
        let answer_dist = dist(&q, data.point(ans.id as usize));
        let ratio = ratio_of(truth_dist, answer_dist);
        let violated = ratio > c * (1.0 + eps);
        last_answer = ans.id;

        if strategy == Strategy::Probe {
            match &probe_best {
                Some((_, best)) if ratio <= *best => probe_step = (probe_step * 0.7).max(1e-9),
                _ => probe_best = Some((q.clone(), ratio)),
            }
        }

        out.push(Round {
            round: r,
            query: q,
            answer_id: ans.id,
            truth_id,
            answer_dist,
            truth_dist,
            ratio,
            violated,
            trivial: ans.trivial,
            sampled: ans.sampled,
            note,
        });
    }
    Ok(AdversaryTranscript { target: target.name().into(), strategy, c, eps, rounds: out })
}

fn whitebox_query<T: QueryTarget + ?Sized, R: Rng>(
    target: &T,
    data: &Dataset,
    r: usize,
    last_answer: u32,
    stats: &DatasetStats,
    adv: &mut R,
) -> Result<(Vec<f64>, String)> {
    let mats = target.matrices();
    let fallback = |adv: &mut R, why: &str| (uniform_in_ball(&stats.ct, stats.radius, adv), format!("uniform ({why})"));
    if mats.is_empty() {
        return Ok(fallback(adv, "no vectors exposed"));
    }
    let mi = r % mats.len();
    let a = mats[mi];
    let vi = (r / mats.len()) % a.len();
    let p_minus = data.point(last_answer as usize);
    let (far_id, far_dist) = exact_furthest(data, p_minus)?;
    if far_dist == 0.0 {
        return Ok(fallback(adv, "degenerate dataset"));
    }
    let p_plus = data.point(far_id as usize);
    let inst = match craft_query_against(p_minus, p_plus, a, vi, XMode::Certified, None) {
        Ok(inst) => inst,
        Err(_) => craft_query_against(p_minus, p_plus, a, vi, XMode::Paper, None)?,
    };
    let note = format!(
        "matrix {mi} vector {vi}: p- = {last_answer}, p+ = {far_id}, x = {:.4}, {:?}, certificate holds: {}",
        inst.x,
        inst.mode,
        inst.certificate.holds()
    );
    Ok((inst.q.into_vec(), note))
}
