//! The `afn` command line. [`run`] returns the process exit code: 0 on
//! success, 1 when `--gate` is set and a threshold is violated, 2 on input
//! errors (including unknown flags).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use afn_core::adversary::{Strategy, XMode};
use afn_core::{load_index, save_index};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{DatasetKind, ExperimentConfig, QueryKind};
use crate::dataset::{load_dataset, save_afnd};
use crate::error::{HarnessError, Result};
use crate::experiments::{
    build_index, build_report, load_or_generate, params_for, run_attack, run_bench, run_duel, run_queries, run_scaling,
    AttackOptions, DuelOptions, TargetKind,
};
use crate::report::Report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_GATE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "afn", version, about = "Adversarially robust approximate furthest neighbor search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index over a dataset and save it as an AFNI file.
    Build(BuildArgs),
    /// Answer a file of queries with a saved index.
    Query(QueryArgs),
    /// Run oblivious queries against a fresh index and report ratios.
    Bench(BenchArgs),
    /// Run the white-box attack against the oblivious baseline.
    Attack(AttackArgs),
    /// Play an adaptive adversary against an index.
    Duel(DuelArgs),
}

/// Flags shared by every experiment. They override values from `--config`.
#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long = "const-N")]
    pub const_n: Option<f64>,
    #[arg(long = "const-k")]
    pub const_k: Option<f64>,
    #[arg(long = "const-m")]
    pub const_m: Option<f64>,
    /// Candidate-pair constant of the oblivious baseline.
    #[arg(long = "cN")]
    pub c_n: Option<usize>,
    /// Projection vectors per base (overrides the derived value).
    #[arg(long = "N")]
    pub n_proj: Option<usize>,
    /// Number of bases (overrides the derived value).
    #[arg(long)]
    pub k: Option<usize>,
    /// Bases sampled per query (overrides the derived value).
    #[arg(long)]
    pub m: Option<usize>,
    /// gaussian, clustered, attack or file:<path>.
    #[arg(long)]
    pub dataset: Option<DatasetKind>,
    #[arg(long)]
    pub cluster_sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub query_dist: Option<QueryKind>,
    /// Disable the trivial-query shortcut.
    #[arg(long)]
    pub no_shortcut: bool,
    /// Report destination; printed to stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Exit with status 1 when an acceptance threshold is violated.
    #[arg(long)]
    pub gate: bool,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$field = v; })*
            };
        }
        set!(n => n, d => d, c => c, seed => seed, trials => trials, const_n => const_n, const_k => const_k,
             const_m => const_m, c_n => c_n, dataset => dataset, cluster_sigma => cluster_sigma,
             query_dist => query_dist);
        if self.n_proj.is_some() {
            cfg.n_proj = self.n_proj;
        }
        if self.k.is_some() {
            cfg.k = self.k;
        }
        if self.m.is_some() {
            cfg.m = self.m;
        }
        if self.no_shortcut {
            cfg.shortcut_enabled = false;
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Where to write the AFNI index.
    #[arg(long)]
    pub index: PathBuf,
    /// Where to write a generated dataset (default: the index path with an
    /// `.afnd` extension). Ignored for `file:` datasets.
    #[arg(long)]
    pub data_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// The dataset the index was built on (AFND or CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Query points, AFND or CSV.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub gate: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Measure mean query time across several `n` instead.
    #[arg(long)]
    pub scaling: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [4096usize, 16384, 65536])]
    pub scaling_n: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub scaling_queries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Paper,
    Certified,
}

impl From<ModeArg> for XMode {
    fn from(m: ModeArg) -> XMode {
        match m {
            ModeArg::Paper => XMode::Paper,
            ModeArg::Certified => XMode::Certified,
        }
    }
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Certified)]
    pub mode: ModeArg,
    /// Number of seeds, starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Robust,
    Oblivious,
}

#[derive(Debug, Args)]
pub struct DuelArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = TargetArg::Robust)]
    pub target: TargetArg,
    /// random, whitebox_attack or probe.
    #[arg(long, default_value = "whitebox_attack")]
    pub strategy: Strategy,
    /// Rounds per game.
    #[arg(long = "T", default_value_t = 200)]
    pub rounds: usize,
    /// Number of games, with seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// JSONL transcript path; with several seeds, one file per seed.
    #[arg(long, default_value = "transcript.jsonl")]
    pub transcript: PathBuf,
}

/// Sizes the global thread pool from `AFN_THREADS` when it is set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("AFN_THREADS") else {
        return Ok(());
    };
    let threads: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| HarnessError::Config(format!("AFN_THREADS must be a positive integer, got {v:?}")))?;
    // A pool configured earlier in the same process stays in place.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = configure_threads().and_then(|()| execute(&cli.command));
    match outcome {
        Ok((report, gate)) => {
            if gate && !report.gates_pass() {
                for g in report.gates.iter().filter(|g| !g.passed) {
                    eprintln!("gate failed (criterion {}, {}): {}", g.criterion, g.name, g.detail);
                }
                EXIT_GATE
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn emit(report: &Report, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => report.write(path),
        None => {
            println!("{}", report.to_json());
            Ok(())
        }
    }
}

fn execute(cmd: &Command) -> Result<(Report, bool)> {
    match cmd {
        Command::Build(a) => {
            let cfg = a.common.resolve()?;
            let data = Arc::new(load_or_generate(&cfg, cfg.seed)?);
            if !matches!(cfg.dataset, DatasetKind::File(_)) {
                let out = a.data_out.clone().unwrap_or_else(|| a.index.with_extension("afnd"));
                save_afnd(&data, &out)?;
            }
            let (idx, ms) = build_index(&cfg, data, cfg.seed)?;
            save_index(&idx, &a.index).map_err(|e| match e {
                afn_core::AfnError::Io(source) => HarnessError::File { path: a.index.clone(), source },
                e => e.into(),
            })?;
            let report = build_report(&cfg, &idx, ms);
            emit(&report, cfg.output.as_deref())?;
            Ok((report, a.common.gate))
        }
        Command::Query(a) => {
            let data = Arc::new(load_dataset(&a.data)?);
            let idx = load_index(&a.index, data.clone()).map_err(|e| match e {
                afn_core::AfnError::Io(source) => HarnessError::File { path: a.index.clone(), source },
                e => e.into(),
            })?;
            let queries = load_dataset(&a.queries)?;
            let p = idx.params();
            let cfg = ExperimentConfig {
                n: data.len(),
                d: data.dim(),
                c: p.c,
                eps: p.eps,
                seed: a.seed,
                trials: queries.len(),
                const_n: p.const_n,
                const_k: p.const_k,
                const_m: p.const_m,
                c_n: p.c_n,
                n_proj: Some(p.n_proj),
                k: Some(p.k),
                m: Some(p.m),
                dataset: DatasetKind::File(a.data.clone()),
                shortcut_enabled: idx.shortcut(),
                output: a.output.clone(),
                ..Default::default()
            };
            let report = run_queries(&idx, &queries, a.seed, &cfg)?;
            emit(&report, a.output.as_deref())?;
            Ok((report, a.gate))
        }
        Command::Bench(a) => {
            let cfg = a.common.resolve()?;
            let report = if a.scaling {
                if a.scaling_n.is_empty() || a.scaling_queries == 0 {
                    return Err(HarnessError::Config("scaling needs at least one n and one query".into()));
                }
                run_scaling(&cfg, &a.scaling_n, a.scaling_queries)?
            } else {
                run_bench(&cfg)?
            };
            emit(&report, cfg.output.as_deref())?;
            Ok((report, a.common.gate))
        }
        Command::Attack(a) => {
            let cfg = a.common.resolve()?;
            let n_proj = match cfg.n_proj {
                Some(n) => n,
                None => params_for(&cfg, &afn_core::build_attack_dataset(cfg.n, cfg.d)?)?.n_proj,
            };
            let opts = AttackOptions { n_proj, c_n: cfg.c_n, mode: a.mode.into(), seeds: a.seeds };
            let report = run_attack(&cfg, &opts)?;
            emit(&report, cfg.output.as_deref())?;
            Ok((report, a.common.gate))
        }
        Command::Duel(a) => {
            let cfg = a.common.resolve()?;
            let target = match a.target {
                TargetArg::Robust => TargetKind::Robust,
                TargetArg::Oblivious => TargetKind::Oblivious,
            };
            let opts = DuelOptions {
                target,
                strategy: a.strategy,
                rounds: a.rounds,
                seeds: a.seeds,
                transcript: Some(a.transcript.clone()),
            };
            let (report, _) = run_duel(&cfg, &opts)?;
            emit(&report, cfg.output.as_deref())?;
            Ok((report, a.common.gate))
        }
    }
}
