//! `rlvr`: trace analysis, workload sampling and RL step simulation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 simulation error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rlvr_core::balancer::Policy;
use rlvr_core::simcore::ToolMode;
use rlvr_core::TaskType;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Simulation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Simulation(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Simulation(m) => m,
        }
    }
}

impl From<rlvr_core::Error> for Failure {
    fn from(e: rlvr_core::Error) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else {
            Failure::Simulation(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rlvr", version, about = "Characterize RL post-training traces and simulate rollout/training steps")]
pub struct Cli {
    /// Seed for sampling and synthesis (overrides `sample.seed` in the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config with sections cluster, cost, policies, sample, run, recipe.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "rlvr-out")]
    pub out: PathBuf,
    /// Encoding of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Length statistics, CDFs, step similarity, trends and prompt groups.
    Analyze(AnalyzeArgs),
    /// Draw a benchmark workload from a trace.
    Sample(SampleArgs),
    /// Simulate a training run.
    Simulate(SimulateArgs),
    /// Repeat a run over the values of one hyperparameter.
    Sweep(SweepArgs),
    /// Check a trace and the effective config.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Trace file (.csv or .jsonl).
    #[arg(long, conflicts_with = "recipe")]
    pub trace: Option<PathBuf>,
    /// Synthetic source: long-tail, banded-input or turn-linear.
    #[arg(long)]
    pub recipe: Option<String>,
    /// Steps in a synthetic source.
    #[arg(long, default_value_t = 20)]
    pub synth_steps: usize,
    /// Samples per step in a synthetic source.
    #[arg(long, default_value_t = 2048)]
    pub per_step: usize,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SampleFlags {
    /// Prompts per generated step.
    #[arg(long)]
    pub bsz: Option<usize>,
    /// Samples per prompt.
    #[arg(long)]
    pub g: Option<usize>,
    /// Generated steps (default: one per source step).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Restrict to one task type.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskType>,
    /// Response-length cap applied to sampled outputs.
    #[arg(long)]
    pub max_response_len: Option<u64>,
    /// Source step choice: `cycle`, `random` or a step number.
    #[arg(long)]
    pub source_step: Option<String>,
    /// Draw prompts with replacement.
    #[arg(long)]
    pub with_replacement: bool,
}

impl SampleFlags {
    fn any(&self) -> bool {
        self.bsz.is_some()
            || self.g.is_some()
            || self.steps.is_some()
            || self.max_response_len.is_some()
            || self.source_step.is_some()
            || self.with_replacement
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Rollout and training share all GPUs, strictly alternating.
    Sync,
    /// Disjoint pools, no overlap between steps.
    SyncSplit,
    /// Disjoint pools, rollout runs ahead up to the staleness bound.
    Async,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ToolModeArg {
    Blocking,
    Overlapped,
}

impl From<ToolModeArg> for ToolMode {
    fn from(m: ToolModeArg) -> Self {
        match m {
            ToolModeArg::Blocking => ToolMode::Blocking,
            ToolModeArg::Overlapped => ToolMode::Overlapped,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Maximum parameter-version gap for async runs.
    #[arg(long)]
    pub staleness: Option<u64>,
    /// Training mini-batches per step.
    #[arg(long)]
    pub minibatches: Option<usize>,
    #[arg(long)]
    pub rollout_gpus: Option<usize>,
    #[arg(long)]
    pub train_gpus: Option<usize>,
    /// KV-cache capacity per rollout rank, in tokens.
    #[arg(long)]
    pub kv_capacity: Option<u64>,
    /// Simulate only the first N steps.
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, value_parser = parse_policy)]
    pub rollout_policy: Option<Policy>,
    #[arg(long, value_parser = parse_policy)]
    pub train_policy: Option<Policy>,
    #[arg(long, value_enum)]
    pub tool_mode: Option<ToolModeArg>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskType>,
    /// Histogram bins for step similarity.
    #[arg(long, default_value_t = rlvr_core::stats::DEFAULT_BINS)]
    pub bins: usize,
    /// Count filtered samples in length statistics.
    #[arg(long)]
    pub include_filtered: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub sample: SampleFlags,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub sample: SampleFlags,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub sample: SampleFlags,
    #[command(flatten)]
    pub run: RunFlags,
    /// gpus, bsz, max-response-len or staleness.
    #[arg(long, value_parser = parse_axis)]
    pub axis: rlvr_core::pipeline::SweepAxis,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<TaskType, String> {
    Ok(TaskType::from_label(s))
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown policy `{s}` (fcfs-round-robin, lpt-greedy, prompt-group-lpt)"))
}

fn parse_axis(s: &str) -> Result<rlvr_core::pipeline::SweepAxis, String> {
    s.parse()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
