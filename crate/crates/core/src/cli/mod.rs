//! Command-line front end: `verify`, `bench`, `gen` and `oracle`.

pub mod bench;
pub mod gen;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bab::{verify, BabConfig, Fallback, RunStats, Verdict};
use crate::heuristics::HeuristicKind;
use crate::model::{load_task, VerificationTask};
use crate::oracle;
use crate::witness::Witness;

pub const EXIT_SAFE: i32 = 0;
pub const EXIT_UNSAFE: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "drgbab", version, about = "Branch-and-bound verifier for ReLU networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Verify one (model, spec) pair.
    Verify(VerifyArgs),
    /// Run several heuristics over a suite and write CSV reports.
    Bench(BenchArgs),
    /// Generate a seeded suite of random instances.
    Gen(gen::GenArgs),
    /// Exact minimum margin of a tiny instance by pattern enumeration.
    Oracle(OracleArgs),
}

/// Search options shared by `verify` and `bench`. Unset flags fall back to
/// the `--config` file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct SearchFlags {
    /// JSON file with any of the keys accepted by these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long)]
    pub max_branches: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub alpha_iters: Option<usize>,
    #[arg(long)]
    pub alpha_step: Option<f64>,
    #[arg(long)]
    pub realpha_per_node: Option<bool>,
    /// babsr, bisect or none.
    #[arg(long)]
    pub fallback: Option<String>,
    #[arg(long)]
    pub full_recompute: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    heuristic: Option<String>,
    /// Write a per-node JSONL trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also write the result JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    search: SearchFlags,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory of `<name>_model.json` / `<name>_spec.json` pairs.
    #[arg(long)]
    pub suite: PathBuf,
    /// Comma-separated heuristic names.
    #[arg(long, default_value = "drg,drg_symmetric,babsr,center,intercept,grad,width")]
    pub heuristics: String,
    /// Heuristic the win rates are measured against.
    #[arg(long, default_value = "babsr")]
    pub baseline: String,
    /// Report directory.
    #[arg(long, default_value = "bench_out")]
    pub output: PathBuf,
    /// Instances run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub search: SearchFlags,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    /// Uniform samples for the falsifier run alongside the exact minimum.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub heuristic: Option<String>,
    pub timeout_seconds: Option<f64>,
    pub max_branches: Option<u64>,
    pub batch: Option<usize>,
    pub alpha_iters: Option<usize>,
    pub alpha_step: Option<f64>,
    pub realpha_per_node: Option<bool>,
    pub fallback: Option<Fallback>,
    pub full_recompute: Option<bool>,
    pub trace: Option<bool>,
    pub seed: Option<u64>,
}

/// Fully resolved run settings, echoed in the result JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub heuristic: HeuristicKind,
    pub timeout_seconds: f64,
    pub max_branches: u64,
    pub batch: usize,
    pub alpha_iters: usize,
    pub alpha_step: f64,
    pub realpha_per_node: bool,
    pub fallback: Fallback,
    pub full_recompute: bool,
    pub trace: bool,
    pub seed: u64,
}

impl ResolvedConfig {
    pub fn bab(&self) -> BabConfig {
        BabConfig {
            batch: self.batch,
            alpha_iters: self.alpha_iters,
            alpha_step: self.alpha_step,
            realpha_per_node: self.realpha_per_node,
            fallback: self.fallback,
            full_recompute: self.full_recompute,
            trace: self.trace,
            seed: self.seed,
        }
    }

    pub fn apply_budget(&self, task: VerificationTask) -> VerificationTask {
        task.with_budget(self.timeout_seconds, self.max_branches)
    }
}

/// Layers defaults, the task's budget, the config file and the flags, in
/// increasing precedence.
pub fn resolve_config(
    flags: &SearchFlags,
    heuristic_flag: Option<&str>,
    trace_flag: bool,
    task_budget: Option<(f64, u64)>,
) -> Result<ResolvedConfig, String> {
    let file = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str::<ConfigFile>(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ConfigFile::default(),
    };
    let defaults = BabConfig::default();
    let (def_timeout, def_branches) = task_budget.unwrap_or((
        crate::model::DEFAULT_TIMEOUT_SECONDS,
        crate::model::DEFAULT_MAX_BRANCHES,
    ));
    let heuristic = match heuristic_flag.or(file.heuristic.as_deref()) {
        Some(name) => name.parse::<HeuristicKind>()?,
        None => HeuristicKind::Drg,
    };
    let fallback = match &flags.fallback {
        Some(s) => s.parse::<Fallback>()?,
        None => file.fallback.unwrap_or(defaults.fallback),
    };
    let cfg = ResolvedConfig {
        heuristic,
        timeout_seconds: flags.timeout.or(file.timeout_seconds).unwrap_or(def_timeout),
        max_branches: flags.max_branches.or(file.max_branches).unwrap_or(def_branches),
        batch: flags.batch.or(file.batch).unwrap_or(defaults.batch),
        alpha_iters: flags.alpha_iters.or(file.alpha_iters).unwrap_or(defaults.alpha_iters),
        alpha_step: flags.alpha_step.or(file.alpha_step).unwrap_or(defaults.alpha_step),
        realpha_per_node: flags
            .realpha_per_node
            .or(file.realpha_per_node)
            .unwrap_or(defaults.realpha_per_node),
        fallback,
        full_recompute: flags
            .full_recompute
            .or(file.full_recompute)
            .unwrap_or(defaults.full_recompute),
        trace: trace_flag || file.trace.unwrap_or(false),
        seed: flags.seed.or(file.seed).unwrap_or(defaults.seed),
    };
    if cfg.timeout_seconds.is_nan() || cfg.timeout_seconds <= 0.0 {
        return Err(format!("timeout_seconds must be positive, got {}", cfg.timeout_seconds));
    }
    if cfg.batch == 0 {
        return Err("batch must be at least 1".into());
    }
    if !(cfg.alpha_step.is_finite() && cfg.alpha_step > 0.0) {
        return Err(format!("alpha_step must be positive, got {}", cfg.alpha_step));
    }
    Ok(cfg)
}

/// The JSON printed by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub verdict: Verdict,
    pub branches: u64,
    pub splits: u64,
    pub input_bisections: u64,
    pub time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
    pub heuristic: HeuristicKind,
    pub config_echo: ResolvedConfig,
}

impl VerifyReport {
    pub fn new(stats: &RunStats, config: &ResolvedConfig, time_s: f64) -> Self {
        Self {
            verdict: stats.verdict,
            branches: stats.branches_visited,
            splits: stats.splits_made,
            input_bisections: stats.input_bisections,
            time_s,
            witness: stats.witness.clone(),
            heuristic: config.heuristic,
            config_echo: config.clone(),
        }
    }
}

pub fn exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Safe => EXIT_SAFE,
        Verdict::Unsafe => EXIT_UNSAFE,
        Verdict::Unknown => EXIT_UNKNOWN,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Verify(a) => cmd_verify(&a),
        Command::Bench(a) => bench::cmd_bench(&a).map(|()| 0),
        Command::Gen(a) => gen::cmd_gen(&a).map(|()| 0),
        Command::Oracle(a) => cmd_oracle(&a),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32, String> {
    let task = load_task(&args.model, &args.spec).map_err(|e| e.to_string())?;
    let cfg = resolve_config(
        &args.search,
        args.heuristic.as_deref(),
        args.trace.is_some(),
        Some((task.timeout_seconds, task.max_branches)),
    )?;
    let task = cfg.apply_budget(task);
    let started = Instant::now();
    let stats = verify(&task, cfg.heuristic, &cfg.bab());
    let time_s = started.elapsed().as_secs_f64();

    if let (Some(path), Some(trace)) = (&args.trace, &stats.per_node_trace) {
        let mut out = Vec::new();
        for node in trace {
            serde_json::to_writer(&mut out, node).map_err(|e| e.to_string())?;
            out.push(b'\n');
        }
        write_file(path, &String::from_utf8(out).expect("JSON is UTF-8"))?;
    }
    let report = VerifyReport::new(&stats, &cfg, time_s);
    let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    if let Some(path) = &args.output {
        write_file(path, &json)?;
    }
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{json}");
    Ok(exit_code(stats.verdict))
}

#[derive(Debug, Serialize)]
struct OracleReport {
    min_value: f64,
    argmin: Vec<f64>,
    row: usize,
    unstable: usize,
    regions: usize,
    verdict: Verdict,
    sampled_min: f64,
    sampled_argmin: Vec<f64>,
}

fn cmd_oracle(args: &OracleArgs) -> Result<i32, String> {
    let task = load_task(&args.model, &args.spec).map_err(|e| e.to_string())?;
    let exact = oracle::exact_min_margin(&task).map_err(|e| e.to_string())?;
    let sampled = oracle::sample_min_margin(&task, args.samples, args.seed);
    let verdict = if exact.is_safe() { Verdict::Safe } else { Verdict::Unsafe };
    let report = OracleReport {
        min_value: exact.min_value,
        argmin: exact.argmin,
        row: exact.row,
        unstable: exact.unstable,
        regions: exact.regions,
        verdict,
        sampled_min: sampled.margin,
        sampled_argmin: sampled.x,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    let _ = writeln!(std::io::stdout().lock(), "{json}");
    Ok(exit_code(verdict))
}
