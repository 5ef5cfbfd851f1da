//! The JSON report every subcommand emits. The layout is documented in
//! `docs/report-schema.md`; bump [`SCHEMA_VERSION`] on any change to it.
//!
//! Everything except `timings` is a deterministic function of the config.

use std::path::Path;

use afn_core::adversary::{AttackReport, Certificate, XMode};
use afn_core::Params;
use serde::{Serialize, Serializer};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const SCHEMA: &str = "afn-report";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub schema_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Params>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub memory: Option<Memory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duel: Option<DuelSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<AnswerRecord>>,
    pub gates: Vec<Gate>,
    pub timings: Timings,
}

impl Report {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Report {
            schema: SCHEMA,
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            config: config.clone(),
            params: None,
            memory: None,
            bench: None,
            scaling: None,
            attack: None,
            duel: None,
            answers: None,
            gates: Vec::new(),
            timings: Timings::default(),
        }
    }

    pub fn gates_pass(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// The report with `timings` zeroed, for determinism comparisons.
    pub fn without_timings(&self) -> Report {
        Report { timings: Timings::default(), ..self.clone() }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(HarnessError::file(path))
    }
}

/// Wall-clock measurements. Excluded from determinism checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub build_ms: f64,
    pub query_mean_us: f64,
    pub query_p99_us: f64,
    pub total_ms: f64,
}

impl Timings {
    /// Fills the query fields from per-query durations in microseconds.
    pub fn set_queries(&mut self, us: &[f64]) {
        if us.is_empty() {
            return;
        }
        self.query_mean_us = us.iter().sum::<f64>() / us.len() as f64;
        let mut sorted = us.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        self.query_p99_us = sorted[rank - 1];
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Memory {
    pub estimate_bytes: usize,
    pub measured_bytes: usize,
}

/// One acceptance threshold evaluated on this run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub criterion: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSection {
    pub trials: usize,
    pub trivial_count: usize,
    /// `max_p |p - q| / |answer - q|` per trial, from exact distances.
    #[serde(serialize_with = "ratios_or_null")]
    pub ratios: Vec<f64>,
    pub violation_count: usize,
    #[serde(serialize_with = "ratio_or_null")]
    pub max_ratio: f64,
    pub mean_candidates: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub n_proj: usize,
    pub queries: usize,
    pub query_mean_us: f64,
    /// Mean time relative to the previous point; absent for the first.
    pub growth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSection {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    pub points: Vec<ScalingPoint>,
    pub max_growth: f64,
    /// Set when some 4x step in `n` more than quadrupled the query time.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackSeed {
    pub seed: u64,
    pub x: f64,
    pub certificate: Certificate,
    pub verification: AttackReport,
    pub answer_id: u32,
    pub answer_is_p_minus: bool,
    pub truth_is_p_plus: bool,
    /// `|q - p+| / |q - p-|`.
    pub realized_ratio: f64,
    /// Every selected pair belongs to a copy of `p-`.
    pub only_p_minus_selected: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackSection {
    pub n: usize,
    pub d: usize,
    pub n_proj: usize,
    pub c_n: usize,
    pub mode: XMode,
    pub seeds: Vec<AttackSeed>,
    pub successes: usize,
    pub structural_failures: usize,
    pub infeasible: Vec<InfeasibleSeed>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibleSeed {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationRecord {
    pub seed: u64,
    pub round: usize,
    pub query: Vec<f64>,
    pub answer_id: u32,
    pub truth_id: u32,
    pub answer_dist: f64,
    pub truth_dist: f64,
    #[serde(serialize_with = "ratio_or_null")]
    pub ratio: f64,
    pub trivial: bool,
    pub sampled: Vec<usize>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DuelSeed {
    pub seed: u64,
    pub transcript: Option<String>,
    pub rounds: usize,
    pub violation_count: usize,
    #[serde(serialize_with = "ratio_or_null")]
    pub max_ratio: f64,
    #[serde(serialize_with = "ratios_or_null")]
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DuelSection {
    pub target: String,
    pub strategy: String,
    pub rounds_per_seed: usize,
    pub seeds: Vec<DuelSeed>,
    pub total_queries: usize,
    pub violation_count: usize,
    #[serde(serialize_with = "ratio_or_null")]
    pub max_ratio: f64,
    /// Full witness of every violation.
    pub violations: Vec<ViolationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerRecord {
    pub query: usize,
    pub point_id: u32,
    pub reported_distance: f64,
    pub trivial: bool,
    pub sampled: Vec<usize>,
    pub truth_id: u32,
    #[serde(serialize_with = "ratio_or_null")]
    pub ratio: f64,
}

fn ratio_or_null<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_some(x)
    } else {
        s.serialize_none()
    }
}

fn ratios_or_null<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|x| x.is_finite().then_some(*x)))
}
