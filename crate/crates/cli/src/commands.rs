use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rlvr_core::generator::{sample_workload, synthesize_trace, Recipe, SampleSpec, StepSelector};
use rlvr_core::pipeline::{
    simulate_run, sweep, write_summary_csv, write_sweep_csv, write_timeline_csv, RunConfig, RunMode,
    WorkloadSource,
};
use rlvr_core::stats::{
    between_prompt_cv, empirical_cdf, joint_correlation, median_within_prompt_cv, prompt_group_stats,
    step_similarity, summary, temporal_trend, LengthDistribution, LengthKind, SimilarityOptions, SummaryStats,
};
use rlvr_core::trace::{group_by_step, parse_trace_with_warnings, steps_to_trace, write_trace, TraceFormat};
use rlvr_core::{Error, TaskType, Trace, WorkloadStep};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{digest, FileConfig};
use crate::{Cli, Command, Failure, Format, ModeArg, RunFlags, SampleFlags, SourceArgs};

const KINDS: [LengthKind; 4] = [
    LengthKind::Input,
    LengthKind::Output,
    LengthKind::Turns,
    LengthKind::ToolLatency,
];

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Analyze(a) => analyze(cli, &file, a),
        Command::Sample(a) => sample(cli, &file, a),
        Command::Simulate(a) => simulate(cli, &file, a),
        Command::Sweep(a) => sweep_cmd(cli, &file, a),
        Command::Validate(a) => validate(cli, &file, a),
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn seed(cli: &Cli, file: &FileConfig) -> u64 {
    cli.seed
        .or(file.sample.as_ref().map(|s| s.seed))
        .unwrap_or(0)
}

/// A loaded trace plus a description of where it came from, for the
/// effective config.
struct Source {
    trace: Trace,
    desc: Value,
}

fn load_source(src: &SourceArgs, file: &FileConfig, seed: u64) -> Result<Source, Failure> {
    if let Some(path) = &src.trace {
        let (trace, warnings) = parse_trace_with_warnings(path, TraceFormat::from_path(path))?;
        if warnings.count() > 0 {
            log::info!("{}: {} parse warning(s)", path.display(), warnings.count());
        }
        return Ok(Source {
            trace,
            desc: json!({ "trace": path.display().to_string() }),
        });
    }
    let recipe = match (&src.recipe, &file.recipe) {
        (Some(name), _) => Recipe::by_name(name)
            .ok_or_else(|| Failure::Usage(format!("unknown recipe `{name}`")))?,
        (None, Some(r)) => r.clone(),
        (None, None) => Recipe::by_name("long-tail").expect("built-in recipe"),
    };
    let trace = synthesize_trace(&recipe, src.synth_steps, src.per_step, seed).map_err(usage)?;
    Ok(Source {
        trace,
        desc: json!({ "recipe": recipe, "steps": src.synth_steps, "per_step": src.per_step, "seed": seed }),
    })
}

/// Sampling spec from config and flags; `None` when neither asks for one.
fn sample_spec(flags: &SampleFlags, file: &FileConfig, seed: u64, force: bool) -> Result<Option<SampleSpec>, Failure> {
    if !force && !flags.any() && file.sample.is_none() {
        return Ok(None);
    }
    let mut spec = file.sample.clone().unwrap_or_default();
    spec.seed = seed;
    if let Some(b) = flags.bsz {
        spec.batch_size = b;
    }
    if let Some(g) = flags.g {
        spec.samples_per_prompt = g;
    }
    if flags.steps.is_some() {
        spec.steps = flags.steps;
    }
    if flags.task.is_some() {
        spec.task_type = flags.task.clone();
    }
    if flags.max_response_len.is_some() {
        spec.max_response_len = flags.max_response_len;
    }
    if let Some(s) = &flags.source_step {
        spec.step_selector = match s.as_str() {
            "cycle" => StepSelector::Cycle,
            "random" => StepSelector::UniformRandom,
            n => StepSelector::Specific(
                n.parse()
                    .map_err(|_| Failure::Usage(format!("--source-step: expected cycle, random or a step, got `{n}`")))?,
            ),
        };
    }
    if flags.with_replacement {
        spec.with_replacement = true;
    }
    spec.validate().map_err(usage)?;
    Ok(Some(spec))
}

fn run_config(flags: &RunFlags, file: &FileConfig) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig {
        mode: file.run.mode,
        max_staleness: file.run.max_staleness,
        minibatches: file.run.minibatches,
        steps: file.run.steps,
        cluster: file.cluster.clone(),
        cost: file.cost.clone(),
        policies: file.policies.clone(),
    };
    if let Some(m) = flags.mode {
        cfg.mode = match m {
            ModeArg::Sync => RunMode::SyncColocated,
            ModeArg::SyncSplit => RunMode::SyncSplit,
            ModeArg::Async => RunMode::AsyncSplit,
        };
    }
    cfg.cluster.colocated = cfg.mode == RunMode::SyncColocated;
    if let Some(s) = flags.staleness {
        cfg.max_staleness = s;
    }
    if let Some(m) = flags.minibatches {
        cfg.minibatches = m;
    }
    if let Some(r) = flags.rollout_gpus {
        cfg.cluster.rollout_ranks = r;
    }
    if let Some(t) = flags.train_gpus {
        cfg.cluster.train_ranks = t;
    }
    if flags.kv_capacity.is_some() {
        cfg.cluster.kv_capacity_tokens = flags.kv_capacity;
    }
    if flags.max_steps.is_some() {
        cfg.steps = flags.max_steps;
    }
    if let Some(p) = flags.rollout_policy {
        cfg.policies.rollout_policy = p;
    }
    if let Some(p) = flags.train_policy {
        cfg.policies.train_policy = p;
    }
    if let Some(t) = flags.tool_mode {
        cfg.policies.tool_mode = t.into();
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn restrict(trace: Trace, task: &Option<TaskType>) -> Result<Trace, Failure> {
    match task {
        None => Ok(trace),
        Some(t) => {
            let f = trace.filter_task(t);
            if f.is_empty() {
                return Err(Error::NoRecords(t.as_str().to_string()).into());
            }
            Ok(f)
        }
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config_digest: String,
    config: &'a Value,
}

fn meta<'a>(command: &'static str, seed: u64, config: &'a Value) -> Meta<'a> {
    Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config_digest: digest(config),
        config,
    }
}

fn out_dir(cli: &Cli) -> Result<&Path, Failure> {
    std::fs::create_dir_all(&cli.out).map_err(|e| Failure::Data(format!("{}: {e}", cli.out.display())))?;
    Ok(&cli.out)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn io_failure(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_failure(path))
}

/// Writes `stem.csv` or `stem.json` depending on the format.
fn write_rows<T: Serialize>(dir: &Path, stem: &str, format: Format, rows: &[T]) -> Result<PathBuf, Failure> {
    match format {
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            write_json(&path, rows)?;
            Ok(path)
        }
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_writer(create(&path)?);
            for r in rows {
                w.serialize(r).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            }
            w.flush().map_err(io_failure(&path))?;
            Ok(path)
        }
    }
}

fn report(path: &Path) {
    println!("wrote {}", path.display());
}

#[derive(Serialize)]
struct CdfRow<'a> {
    task: &'a str,
    kind: &'static str,
    value: f64,
    fraction: f64,
}

#[derive(Serialize)]
struct SimilarityRow<'a> {
    task: &'a str,
    kind: &'static str,
    step_a: u64,
    step_b: u64,
    similarity: f64,
}

#[derive(Serialize)]
struct TrendRow<'a> {
    task: &'a str,
    kind: &'static str,
    step: u64,
    count: usize,
    mean: f64,
    std: f64,
    min: f64,
    p50: f64,
    p90: f64,
    p95: f64,
    p99: f64,
    max: f64,
}

impl<'a> TrendRow<'a> {
    fn new(task: &'a str, kind: LengthKind, step: u64, s: SummaryStats) -> Self {
        TrendRow {
            task,
            kind: kind.as_str(),
            step,
            count: s.count,
            mean: s.mean,
            std: s.std,
            min: s.min,
            p50: s.p50,
            p90: s.p90,
            p95: s.p95,
            p99: s.p99,
            max: s.max,
        }
    }
}

#[derive(Serialize)]
struct PromptRow<'a> {
    task: &'a str,
    step: u64,
    prompt_id: String,
    samples: usize,
    mean: f64,
    std: f64,
    cv: Option<f64>,
    degenerate: bool,
}

#[derive(Serialize)]
struct TaskSummary {
    records: usize,
    steps: usize,
    lengths: BTreeMap<&'static str, SummaryStats>,
    input_output_correlation: Option<f64>,
    input_output_log_correlation: Option<f64>,
    between_prompt_cv: Option<f64>,
    median_within_prompt_cv: Option<f64>,
}

fn analyze(cli: &Cli, file: &FileConfig, a: &crate::AnalyzeArgs) -> Result<(), Failure> {
    if a.bins == 0 {
        return Err(Failure::Usage("--bins must be positive".into()));
    }
    let seed = seed(cli, file);
    let src = load_source(&a.source, file, seed)?;
    let trace = restrict(src.trace, &a.task)?;
    if trace.is_empty() {
        return Err(Error::EmptyDistribution.into());
    }
    let config = json!({
        "source": src.desc,
        "task": a.task.as_ref().map(|t| t.as_str().to_string()),
        "bins": a.bins,
        "include_filtered": a.include_filtered,
    });
    let dir = out_dir(cli)?;

    let mut tasks = BTreeMap::new();
    let mut cdf_rows = Vec::new();
    let mut sim_rows = Vec::new();
    let mut trend_rows = Vec::new();
    let mut prompt_rows = Vec::new();
    let task_types = trace.task_types();
    let names: Vec<String> = task_types.iter().map(|t| t.as_str().to_string()).collect();
    for (task, name) in task_types.iter().zip(&names) {
        let sub = trace.filter_task(task);
        let kept: Vec<_> = sub
            .records
            .iter()
            .filter(|r| a.include_filtered || !r.filtered)
            .collect();
        let mut lengths = BTreeMap::new();
        for kind in KINDS {
            let dist = LengthDistribution::from_records(kind, &sub.records, a.include_filtered);
            if dist.is_empty() {
                continue;
            }
            lengths.insert(kind.as_str(), summary(&dist)?);
            for &(value, fraction) in &empirical_cdf(&dist)?.points {
                cdf_rows.push(CdfRow { task: name, kind: kind.as_str(), value, fraction });
            }
            for (step, stats) in temporal_trend(&sub, kind, a.include_filtered, Default::default()) {
                trend_rows.push(TrendRow::new(name, kind, step, stats));
            }
        }
        for kind in [LengthKind::Input, LengthKind::Output] {
            let opts = SimilarityOptions {
                bins: a.bins,
                include_filtered: a.include_filtered,
                ..Default::default()
            };
            let m = step_similarity(&sub, kind, opts).map_err(usage)?;
            for (i, &sa) in m.steps.iter().enumerate() {
                for (j, &sb) in m.steps.iter().enumerate() {
                    sim_rows.push(SimilarityRow {
                        task: name,
                        kind: kind.as_str(),
                        step_a: sa,
                        step_b: sb,
                        similarity: m.sim[i][j],
                    });
                }
            }
        }
        let steps = group_by_step(&sub);
        let mut groups = Vec::new();
        for ws in &steps {
            match prompt_group_stats(ws) {
                Ok(g) => {
                    for p in &g {
                        prompt_rows.push(PromptRow {
                            task: name,
                            step: ws.step,
                            prompt_id: p.prompt_id.clone(),
                            samples: p.sample_lengths.len(),
                            mean: p.mean,
                            std: p.std,
                            cv: p.coefficient_of_variation,
                            degenerate: p.degenerate,
                        });
                    }
                    groups.extend(g);
                }
                Err(Error::NoPromptGrouping) => {}
                Err(e) => return Err(e.into()),
            }
        }
        tasks.insert(
            name.clone(),
            TaskSummary {
                records: sub.len(),
                steps: steps.len(),
                lengths,
                input_output_correlation: joint_correlation(kept.iter().copied(), false),
                input_output_log_correlation: joint_correlation(kept.iter().copied(), true),
                between_prompt_cv: between_prompt_cv(&groups),
                median_within_prompt_cv: median_within_prompt_cv(&groups),
            },
        );
    }

    let summary_path = dir.join("summary.json");
    write_json(
        &summary_path,
        &json!({
            "metadata": meta("analyze", seed, &config),
            "source": trace.source_name,
            "records": trace.len(),
            "tasks": tasks,
        }),
    )?;
    report(&summary_path);
    let fmt = cli.format;
    report(&write_rows(dir, "cdf", fmt, &cdf_rows)?);
    report(&write_rows(dir, "similarity", fmt, &sim_rows)?);
    report(&write_rows(dir, "trends", fmt, &trend_rows)?);
    if !prompt_rows.is_empty() {
        report(&write_rows(dir, "prompt_groups", fmt, &prompt_rows)?);
    }
    Ok(())
}

fn sample(cli: &Cli, file: &FileConfig, a: &crate::SampleArgs) -> Result<(), Failure> {
    let seed = seed(cli, file);
    let spec = sample_spec(&a.sample, file, seed, true)?.expect("forced");
    let src = load_source(&a.source, file, seed)?;
    let generated = sample_workload(&src.trace, &spec)?;
    let config = json!({ "source": src.desc, "sample": spec });
    let dir = out_dir(cli)?;
    let (name, format) = match cli.format {
        Format::Csv => ("workload.csv", TraceFormat::Csv),
        Format::Json => ("workload.jsonl", TraceFormat::Jsonl),
    };
    let path = dir.join(name);
    write_trace(&steps_to_trace("generated", &generated.steps), &path, format)?;
    report(&path);
    let meta_path = dir.join("generation.json");
    write_json(
        &meta_path,
        &json!({ "metadata": meta("sample", seed, &config), "generation": generated.metadata }),
    )?;
    report(&meta_path);
    Ok(())
}

struct Prepared {
    source: Source,
    spec: Option<SampleSpec>,
    run: RunConfig,
    seed: u64,
}

fn prepare(cli: &Cli, file: &FileConfig, src: &SourceArgs, sflags: &SampleFlags, rflags: &RunFlags) -> Result<Prepared, Failure> {
    let seed = seed(cli, file);
    let spec = sample_spec(sflags, file, seed, false)?;
    let run = run_config(rflags, file)?;
    let mut source = load_source(src, file, seed)?;
    if spec.is_none() {
        source.trace = restrict(source.trace, &sflags.task)?;
    }
    Ok(Prepared { source, spec, run, seed })
}

fn materialize(p: &Prepared) -> Result<Vec<WorkloadStep>, Failure> {
    Ok(match &p.spec {
        Some(spec) => sample_workload(&p.source.trace, spec)?.steps,
        None => group_by_step(&p.source.trace),
    })
}

fn simulate(cli: &Cli, file: &FileConfig, a: &crate::SimulateArgs) -> Result<(), Failure> {
    let p = prepare(cli, file, &a.source, &a.sample, &a.run)?;
    let steps = materialize(&p)?;
    let result = simulate_run(&steps, &p.run)?;
    let config = json!({ "source": p.source.desc, "sample": p.spec, "run": p.run });
    let dir = out_dir(cli)?;
    let run_path = dir.join("run.json");
    write_json(
        &run_path,
        &json!({
            "metadata": meta("simulate", p.seed, &config),
            "mode": result.mode,
            "max_staleness": result.max_staleness,
            "steps": result.per_step.len(),
            "e2e_time": result.e2e_time,
            "mean_tgs": result.mean_tgs,
            "e2e_tgs": result.e2e_tgs,
            "idle_fraction_overall": result.idle_fraction_overall,
            "rollout_versions": result.rollout_versions,
        }),
    )?;
    report(&run_path);
    match cli.format {
        Format::Csv => {
            let path = dir.join("steps.csv");
            write_summary_csv(&result, create(&path)?)?;
            report(&path);
            let path = dir.join("timeline.csv");
            write_timeline_csv(&result.timeline, create(&path)?)?;
            report(&path);
        }
        Format::Json => {
            let path = dir.join("steps.json");
            write_json(&path, &result.per_step)?;
            report(&path);
            let path = dir.join("timeline.json");
            write_json(&path, &result.timeline)?;
            report(&path);
        }
    }
    println!(
        "e2e_time={} mean_tgs={} idle_fraction={}",
        result.e2e_time, result.mean_tgs, result.idle_fraction_overall
    );
    Ok(())
}

fn sweep_cmd(cli: &Cli, file: &FileConfig, a: &crate::SweepArgs) -> Result<(), Failure> {
    let p = prepare(cli, file, &a.source, &a.sample, &a.run)?;
    let steps;
    let source = match &p.spec {
        Some(spec) => WorkloadSource::Generated { trace: &p.source.trace, spec: spec.clone() },
        None => {
            steps = group_by_step(&p.source.trace);
            WorkloadSource::Steps(&steps)
        }
    };
    let rows = sweep(&source, &p.run, a.axis, &a.values).map_err(usage)?;
    let config = json!({
        "source": p.source.desc,
        "sample": p.spec,
        "run": p.run,
        "axis": a.axis,
        "values": a.values,
    });
    let dir = out_dir(cli)?;
    let path = match cli.format {
        Format::Csv => {
            let path = dir.join("sweep.csv");
            write_sweep_csv(&rows, create(&path)?)?;
            path
        }
        Format::Json => {
            let path = dir.join("sweep.json");
            write_json(&path, &rows)?;
            path
        }
    };
    report(&path);
    let meta_path = dir.join("sweep_meta.json");
    write_json(&meta_path, &json!({ "metadata": meta("sweep", p.seed, &config) }))?;
    report(&meta_path);
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("warning: {} = {}: {}", serde_json::to_value(r.axis).unwrap_or_default(), r.value, r.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn validate(cli: &Cli, file: &FileConfig, a: &crate::ValidateArgs) -> Result<(), Failure> {
    let _ = run_config(&RunFlags::default(), file)?;
    if let Some(spec) = &file.sample {
        spec.validate().map_err(usage)?;
    }
    if let Some(path) = &cli.config {
        println!("config {}: ok", path.display());
    }
    let Some(path) = &a.trace else {
        return Ok(());
    };
    let (trace, warnings) = parse_trace_with_warnings(path, TraceFormat::from_path(path))?;
    let steps = group_by_step(&trace);
    println!("trace {}: ok", path.display());
    println!("  records: {}", trace.len());
    println!("  steps: {}", steps.len());
    for t in trace.task_types() {
        println!("  {}: {}", t.as_str(), trace.records.iter().filter(|r| r.task_type == t).count());
    }
    let grouped = trace.records.iter().filter(|r| r.prompt_id.is_some()).count();
    println!("  with prompt_id: {grouped}");
    println!("  filtered: {}", trace.records.iter().filter(|r| r.filtered).count());
    for c in &warnings.unknown_columns {
        println!("  warning: unknown column `{c}`");
    }
    for (name, n) in &warnings.unknown_task_types {
        println!("  warning: {n} record(s) with unrecognised task type `{name}`");
    }
    Ok(())
}
