//! Experiment drivers behind the `build`, `query`, `bench`, `attack` and
//! `duel` subcommands.
//!
//! Stream layout for master seed `s`: the dataset is drawn from `(s, 0)`,
//! bench queries from `(s, 1).derive(i)`, index randomness for query `i`
//! from `(s, 2).derive(i)`, and the duel adversary from `(s, 3)`. The index
//! itself is built with master seed `s`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use afn_core::adversary::{
    adaptive_loop, build_oblivious, craft_attack_query, verify_attack, AdversaryTranscript, ObliviousTarget,
    QueryTarget, RobustTarget, Strategy, XMode,
};
use afn_core::dataset::exact_furthest;
use afn_core::rng::{standard_normal_vec, uniform_in_ball, RngStream};
use afn_core::robust::estimate_memory;
use afn_core::vector::dist;
use afn_core::{build_robust, derive_params, exact_oracle, query, AfnError, Dataset, Params, RobustIndex};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, QueryKind};
use crate::dataset::gen_dataset;
use crate::error::{HarnessError, Result};
use crate::report::{
    AnswerRecord, AttackSection, AttackSeed, BenchSection, DuelSection, DuelSeed, Gate, InfeasibleSeed, Memory, Report,
    ScalingPoint, ScalingSection, ViolationRecord,
};

pub const DATA_STREAM: u64 = 0;
pub const QUERY_STREAM: u64 = 1;
pub const ANSWER_STREAM: u64 = 2;
pub const ADVERSARY_STREAM: u64 = 3;

/// Attack success needs `|q - p+| / |q - p-|` at least this large.
pub const ATTACK_MIN_RATIO: f64 = 10.0;
/// Fraction of attack seeds that must succeed.
pub const ATTACK_SUCCESS_RATE: f64 = 0.95;
/// Allowed c-approximation violations per this many answered queries.
pub const VIOLATION_WINDOW: usize = 4000;
/// Scaling growth per 4x step in `n` above which a run is flagged.
pub const SCALING_FLAG_GROWTH: f64 = 4.0;
pub const SCALING_TARGET_GROWTH: f64 = 2.0;

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn load_or_generate(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    gen_dataset(&cfg.dataset, cfg.n, cfg.d, cfg.cluster_sigma, RngStream::new(seed, DATA_STREAM))
}

pub fn params_for(cfg: &ExperimentConfig, p: &Dataset) -> Result<Params> {
    Ok(derive_params(p.len(), p.dim(), cfg.c, cfg.eps, &cfg.overrides())?)
}

/// Builds the robust index for `cfg` under master seed `seed`, returning it
/// with the build time in milliseconds.
pub fn build_index(cfg: &ExperimentConfig, data: Arc<Dataset>, seed: u64) -> Result<(RobustIndex, f64)> {
    let params = params_for(cfg, &data)?;
    let t = Instant::now();
    let idx = build_robust(data, params, seed)?.with_shortcut(cfg.shortcut_enabled);
    Ok((idx, ms_since(t)))
}

fn memory_of(idx: &RobustIndex) -> Memory {
    let p = idx.data();
    Memory { estimate_bytes: estimate_memory(p.len(), p.dim(), idx.params()), measured_bytes: idx.memory_bytes() }
}

/// Most violations tolerated over `queries` answers: one per started window.
pub fn allowed_violations(queries: usize) -> usize {
    queries.div_ceil(VIOLATION_WINDOW)
}

fn ratio(truth: f64, answer: f64) -> f64 {
    if answer > 0.0 {
        (truth / answer).max(1.0)
    } else if truth > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

fn bench_query(kind: QueryKind, idx: &RobustIndex, stream: RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    let stats = idx.stats();
    match kind {
        QueryKind::Gaussian => {
            let z = standard_normal_vec(stats.ct.len(), &mut rng);
            stats.ct.iter().zip(z).map(|(c, z)| c + z).collect()
        }
        QueryKind::Ball => uniform_in_ball(&stats.ct, stats.radius, &mut rng),
    }
}

/// Oblivious queries against the robust index, judged by the exact scan.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<Report> {
    let start = Instant::now();
    let data = Arc::new(load_or_generate(cfg, cfg.seed)?);
    let (idx, build_ms) = build_index(cfg, data.clone(), cfg.seed)?;
    let oracle = exact_oracle();

    let trials: Vec<(f64, bool, usize, f64)> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let q = bench_query(cfg.query_dist, &idx, RngStream::new(cfg.seed, QUERY_STREAM).derive(i as u64));
            let t = Instant::now();
            let ans = query(&idx, &q, RngStream::new(cfg.seed, ANSWER_STREAM).derive(i as u64), &oracle)?;
            let us = t.elapsed().as_secs_f64() * 1e6;
            let (_, truth) = exact_furthest(&data, &q)?;
            let got = dist(&q, data.point(ans.point_id as usize));
            Ok((ratio(truth, got), ans.trivial, ans.candidates, us))
        })
        .collect::<std::result::Result<_, AfnError>>()?;

    let ratios: Vec<f64> = trials.iter().map(|t| t.0).collect();
    let violation_count = ratios.iter().filter(|&&r| r > cfg.c * (1.0 + cfg.eps)).count();
    let section = BenchSection {
        trials: cfg.trials,
        trivial_count: trials.iter().filter(|t| t.1).count(),
        max_ratio: ratios.iter().copied().fold(1.0, f64::max),
        violation_count,
        ratios,
        mean_candidates: trials.iter().map(|t| t.2 as f64).sum::<f64>() / cfg.trials as f64,
    };

    let mut report = Report::new("bench", cfg);
    report.params = Some(idx.params().clone());
    report.memory = Some(memory_of(&idx));
    report.gates.push(violation_gate(section.violation_count, cfg.trials));
    report.bench = Some(section);
    report.timings.build_ms = build_ms;
    report.timings.set_queries(&trials.iter().map(|t| t.3).collect::<Vec<_>>());
    report.timings.total_ms = ms_since(start);
    Ok(report)
}

fn violation_gate(violations: usize, queries: usize) -> Gate {
    let allowed = allowed_violations(queries);
    Gate {
        criterion: 8,
        name: "c-approximation violations".into(),
        passed: violations <= allowed,
        detail: format!("{violations} violations over {queries} queries, at most {allowed} allowed"),
    }
}

/// Mean query time at each `n`, with `k` and `m` fixed (4 and 4 unless the
/// config overrides them). Queries run one at a time so timings are not
/// disturbed by parallel work. `queries` must be positive.
pub fn run_scaling(cfg: &ExperimentConfig, ns: &[usize], queries: usize) -> Result<Report> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    cfg.k = Some(cfg.k.unwrap_or(4));
    cfg.m = Some(cfg.m.unwrap_or(4));
    let oracle = exact_oracle();
    let mut points: Vec<ScalingPoint> = Vec::with_capacity(ns.len());
    let mut build_ms = 0.0;
    let mut params = None;
    for &n in ns {
        let mut at = cfg.clone();
        at.n = n;
        let data = Arc::new(load_or_generate(&at, cfg.seed)?);
        let (idx, ms) = build_index(&at, data, cfg.seed)?;
        build_ms += ms;
        let qs: Vec<Vec<f64>> = (0..queries)
            .map(|i| bench_query(cfg.query_dist, &idx, RngStream::new(cfg.seed, QUERY_STREAM).derive(i as u64)))
            .collect();
        // One warm-up pass, then the fastest of three timed passes.
        let mut mean = f64::INFINITY;
        for pass in 0..4 {
            let t = Instant::now();
            for (i, q) in qs.iter().enumerate() {
                query(&idx, q, RngStream::new(cfg.seed, ANSWER_STREAM).derive(i as u64), &oracle)?;
            }
            if pass > 0 {
                mean = mean.min(t.elapsed().as_secs_f64() * 1e6 / queries as f64);
            }
        }
        let growth = points.last().map(|prev| mean / prev.query_mean_us);
        points.push(ScalingPoint { n, n_proj: idx.params().n_proj, queries, query_mean_us: mean, growth });
        params = Some(idx.params().clone());
    }
    let max_growth = points.iter().filter_map(|p| p.growth).fold(0.0, f64::max);
    let flagged = max_growth > SCALING_FLAG_GROWTH;
    let mut report = Report::new("bench", &cfg);
    report.params = params;
    report.gates.push(Gate {
        criterion: 10,
        name: "query time scaling".into(),
        passed: !flagged,
        detail: format!(
            "largest growth per step {max_growth:.2}x (target <= {SCALING_TARGET_GROWTH}x, flagged above \
             {SCALING_FLAG_GROWTH}x)"
        ),
    });
    // Timings are kept out of the deterministic part of the report.
    report.timings.build_ms = build_ms;
    report.timings.query_mean_us = points.last().map_or(0.0, |p| p.query_mean_us);
    report.timings.total_ms = ms_since(start);
    report.scaling =
        Some(ScalingSection { d: cfg.d, k: cfg.k.unwrap_or(4), m: cfg.m.unwrap_or(4), points, max_growth, flagged });
    Ok(report)
}

/// Scaling points carry timings, so determinism checks also clear them.
pub fn strip_scaling_timings(report: &mut Report) {
    if let Some(s) = &mut report.scaling {
        for p in &mut s.points {
            p.query_mean_us = 0.0;
            p.growth = None;
        }
        s.max_growth = 0.0;
        s.flagged = false;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackOptions {
    pub n_proj: usize,
    pub c_n: usize,
    pub mode: XMode,
    pub seeds: usize,
}

fn attack_seed(n: usize, d: usize, opts: &AttackOptions, seed: u64) -> Result<std::result::Result<AttackSeed, String>> {
    let data = Arc::new(afn_core::build_attack_dataset(n, d)?);
    let idx = build_oblivious(data.clone(), opts.n_proj, opts.c_n, RngStream::new(seed, DATA_STREAM))?;
    let mut inst = match craft_attack_query(idx.vectors(), opts.mode, None) {
        Ok(inst) => inst,
        Err(AfnError::AttackInfeasible(why)) => return Ok(Err(why)),
        Err(e) => return Err(e.into()),
    };
    inst.certify_size(n, opts.c_n, opts.n_proj);
    let verification = verify_attack(&data, &inst, idx.vectors())?;
    let ans = idx.query_detailed(&inst.q)?;
    let half = (n / 2) as u32;
    let answer_is_p_minus = ans.point_id < half;
    let (truth_id, _) = exact_furthest(&data, &inst.q)?;
    let truth_is_p_plus = truth_id >= half;
    let realized_ratio = ratio(dist(&inst.q, &inst.p_plus), dist(&inst.q, &inst.p_minus));
    let only_p_minus_selected = ans.selected.iter().all(|&id| id < half);
    Ok(Ok(AttackSeed {
        seed,
        x: inst.x,
        certificate: inst.certificate.clone(),
        verification,
        answer_id: ans.point_id,
        answer_is_p_minus,
        truth_is_p_plus,
        realized_ratio,
        only_p_minus_selected,
        success: answer_is_p_minus && truth_is_p_plus && realized_ratio >= ATTACK_MIN_RATIO,
    }))
}

/// The white-box attack on the `+-1` dataset against the oblivious baseline,
/// once per seed `cfg.seed .. cfg.seed + seeds`, in parallel.
pub fn run_attack(cfg: &ExperimentConfig, opts: &AttackOptions) -> Result<Report> {
    let start = Instant::now();
    if opts.seeds == 0 {
        return Err(HarnessError::Config("attack needs at least one seed".into()));
    }
    let outcomes: Vec<(u64, std::result::Result<AttackSeed, String>)> = (0..opts.seeds as u64)
        .into_par_iter()
        .map(|s| {
            let seed = cfg.seed.wrapping_add(s);
            Ok((seed, attack_seed(cfg.n, cfg.d, opts, seed)?))
        })
        .collect::<Result<_>>()?;

    let mut seeds = Vec::new();
    let mut infeasible = Vec::new();
    for (seed, o) in outcomes {
        match o {
            Ok(s) => seeds.push(s),
            Err(reason) => infeasible.push(InfeasibleSeed { seed, reason }),
        }
    }
    let successes = seeds.iter().filter(|s| s.success).count();
    let structural_failures = seeds.iter().filter(|s| s.success && !s.only_p_minus_selected).count();
    let needed = (ATTACK_SUCCESS_RATE * opts.seeds as f64).ceil() as usize;

    let mut report = Report::new("attack", cfg);
    report.gates.push(Gate {
        criterion: 6,
        name: "attack success".into(),
        passed: successes >= needed && structural_failures == 0,
        detail: format!(
            "{successes} of {} seeds succeeded (need {needed}); {structural_failures} successes selected a copy of p+",
            opts.seeds
        ),
    });
    report.attack = Some(AttackSection {
        n: cfg.n,
        d: cfg.d,
        n_proj: opts.n_proj,
        c_n: opts.c_n,
        mode: opts.mode,
        seeds,
        successes,
        structural_failures,
        infeasible,
    });
    report.timings.total_ms = ms_since(start);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Robust,
    Oblivious,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Robust => "robust",
            TargetKind::Oblivious => "oblivious",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuelOptions {
    pub target: TargetKind,
    pub strategy: Strategy,
    pub rounds: usize,
    pub seeds: usize,
    /// Transcript destination. With several seeds, seed `s` goes to
    /// `<stem>.seed<s>.<ext>`.
    pub transcript: Option<PathBuf>,
}

/// Transcript path for `seed` when `seeds` seeds are played.
pub fn transcript_path(base: &Path, seed: u64, seeds: usize) -> PathBuf {
    if seeds <= 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    base.with_file_name(name)
}

/// Plays one game for master seed `seed`.
pub fn duel_once(cfg: &ExperimentConfig, opts: &DuelOptions, seed: u64) -> Result<(AdversaryTranscript, f64)> {
    let data = Arc::new(load_or_generate(cfg, seed)?);
    let stream = RngStream::new(seed, ADVERSARY_STREAM);
    match opts.target {
        TargetKind::Robust => {
            let (idx, build_ms) = build_index(cfg, data, seed)?;
            let oracle = exact_oracle();
            let target = RobustTarget { index: &idx, oracle: &oracle };
            Ok((play(&target, opts, stream)?, build_ms))
        }
        TargetKind::Oblivious => {
            let params = params_for(cfg, &data)?;
            let t = Instant::now();
            let idx = build_oblivious(data, params.n_proj, params.c_n, RngStream::new(seed, ANSWER_STREAM))?;
            let build_ms = ms_since(t);
            let target = ObliviousTarget { index: &idx, c: cfg.c };
            Ok((play(&target, opts, stream)?, build_ms))
        }
    }
}

fn play<T: QueryTarget>(target: &T, opts: &DuelOptions, stream: RngStream) -> Result<AdversaryTranscript> {
    Ok(adaptive_loop(target, opts.strategy, opts.rounds, stream)?)
}

/// Adaptive games for seeds `cfg.seed .. cfg.seed + seeds`. Rounds within a
/// game are sequential; separate seeds run in parallel. Transcripts are
/// written when `opts.transcript` is set.
pub fn run_duel(cfg: &ExperimentConfig, opts: &DuelOptions) -> Result<(Report, Vec<AdversaryTranscript>)> {
    let start = Instant::now();
    if opts.seeds == 0 || opts.rounds == 0 {
        return Err(HarnessError::Config("duel needs at least one seed and one round".into()));
    }
    let games: Vec<(u64, AdversaryTranscript, f64)> = (0..opts.seeds as u64)
        .into_par_iter()
        .map(|s| {
            let seed = cfg.seed.wrapping_add(s);
            let (t, ms) = duel_once(cfg, opts, seed)?;
            Ok((seed, t, ms))
        })
        .collect::<Result<_>>()?;

    let mut seeds = Vec::with_capacity(games.len());
    let mut violations = Vec::new();
    for (seed, t, _) in &games {
        let path = opts.transcript.as_ref().map(|base| transcript_path(base, *seed, opts.seeds));
        if let Some(path) = &path {
            std::fs::write(path, t.to_jsonl()).map_err(HarnessError::file(path))?;
        }
        for r in t.violations() {
            violations.push(ViolationRecord {
                seed: *seed,
                round: r.round,
                query: r.query.clone(),
                answer_id: r.answer_id,
                truth_id: r.truth_id,
                answer_dist: r.answer_dist,
                truth_dist: r.truth_dist,
                ratio: r.ratio,
                trivial: r.trivial,
                sampled: r.sampled.clone(),
                note: r.note.clone(),
            });
        }
        seeds.push(DuelSeed {
            seed: *seed,
            transcript: path.map(|p| p.display().to_string()),
            rounds: t.rounds.len(),
            violation_count: t.violation_count(),
            max_ratio: t.max_ratio(),
            ratios: t.rounds.iter().map(|r| r.ratio).collect(),
        });
    }
    let total_queries = opts.rounds * opts.seeds;
    let violation_count = violations.len();

    let mut report = Report::new("duel", cfg);
    if opts.target == TargetKind::Robust {
        let p = load_or_generate(cfg, cfg.seed)?;
        report.params = Some(params_for(cfg, &p)?);
    }
    report.gates.push(violation_gate(violation_count, total_queries));
    report.duel = Some(DuelSection {
        target: opts.target.name().into(),
        strategy: strategy_name(opts.strategy).into(),
        rounds_per_seed: opts.rounds,
        max_ratio: seeds.iter().map(|s| s.max_ratio).fold(1.0, f64::max),
        seeds,
        total_queries,
        violation_count,
        violations,
    });
    report.timings.build_ms = games.iter().map(|g| g.2).sum();
    report.timings.total_ms = ms_since(start);
    Ok((report, games.into_iter().map(|g| g.1).collect()))
}

pub fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Random => "random",
        Strategy::WhiteboxAttack => "whitebox_attack",
        Strategy::Probe => "probe",
    }
}

/// Answers each query in `queries` with the index, alongside the exact
/// ground truth. Query `i` uses index randomness `(seed, 2).derive(i)`.
pub fn run_queries(idx: &RobustIndex, queries: &Dataset, seed: u64, cfg: &ExperimentConfig) -> Result<Report> {
    let start = Instant::now();
    let data = idx.data();
    let oracle = exact_oracle();
    let out: Vec<(AnswerRecord, f64)> = (0..queries.len())
        .into_par_iter()
        .map(|i| {
            let q = queries.point(i);
            let t = Instant::now();
            let ans = query(idx, q, RngStream::new(seed, ANSWER_STREAM).derive(i as u64), &oracle)?;
            let us = t.elapsed().as_secs_f64() * 1e6;
            let (truth_id, truth) = exact_furthest(data, q)?;
            let got = dist(q, data.point(ans.point_id as usize));
            let rec = AnswerRecord {
                query: i,
                point_id: ans.point_id,
                reported_distance: ans.reported_distance,
                trivial: ans.trivial,
                sampled: ans.sampled_indices,
                truth_id,
                ratio: ratio(truth, got),
            };
            Ok((rec, us))
        })
        .collect::<std::result::Result<_, AfnError>>()?;
    let mut report = Report::new("query", cfg);
    report.params = Some(idx.params().clone());
    report.memory = Some(memory_of(idx));
    let violations = out.iter().filter(|(r, _)| r.ratio > idx.params().c * (1.0 + idx.params().eps)).count();
    report.gates.push(violation_gate(violations, out.len()));
    report.timings.set_queries(&out.iter().map(|o| o.1).collect::<Vec<_>>());
    report.answers = Some(out.into_iter().map(|o| o.0).collect());
    report.timings.total_ms = ms_since(start);
    Ok(report)
}

/// Build report: parameters, memory and build time.
pub fn build_report(cfg: &ExperimentConfig, idx: &RobustIndex, build_ms: f64) -> Report {
    let mut report = Report::new("build", cfg);
    report.params = Some(idx.params().clone());
    report.memory = Some(memory_of(idx));
    report.timings.build_ms = build_ms;
    report.timings.total_ms = build_ms;
    report
}
