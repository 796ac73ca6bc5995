//! Multi-step run simulation.
//!
//! Per-step stage times come from [`simcore`](crate::simcore); this module
//! places them on resource pools. Three modes are modelled:
//!
//! * `sync_colocated`: one pool; every step runs rollout, inference,
//!   training and a weight sync back to back.
//! * `sync_split`: a rollout pool and a train pool (inference runs on the
//!   train pool); rollout of step `t` waits for training of step `t − 1`.
//! * `async_split`: as above, but rollout of step `t` may start once at
//!   least `t − S` steps are trained, `S` being the maximum staleness.
//!
//! The parameter version is the number of completed training steps. A
//! rollout adopts the newest version when it starts; adopting a version the
//! rollout pool does not hold yet costs one weight sync on that pool. Every
//! interval starts as early as its dependencies allow.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{clamp_outputs, sample_workload_with, SampleSpec};
use crate::par::{self, Exec};
use crate::simcore::{simulate_step_with, ClusterSpec, CostModel, Policies, StepSimResult};
use crate::trace::{Trace, WorkloadStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    SyncColocated,
    SyncSplit,
    AsyncSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: RunMode,
    pub max_staleness: u64,
    pub minibatches: usize,
    /// Simulate only the first `steps` workload steps.
    pub steps: Option<usize>,
    pub cluster: ClusterSpec,
    pub cost: CostModel,
    pub policies: Policies,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: RunMode::SyncColocated,
            max_staleness: 0,
            minibatches: 1,
            steps: None,
            cluster: ClusterSpec::default(),
            cost: CostModel::default(),
            policies: Policies::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.cluster.validate()?;
        self.cost.validate()?;
        match (self.mode, self.cluster.colocated) {
            (RunMode::SyncColocated, false) => Err(Error::invalid(
                "sync_colocated requires a colocated cluster",
            )),
            (RunMode::SyncSplit | RunMode::AsyncSplit, true) => Err(Error::invalid(
                "split modes require disjoint rollout and train pools",
            )),
            _ if self.minibatches == 0 => Err(Error::invalid("minibatches must be at least 1")),
            _ => Ok(()),
        }
    }

    fn effective_staleness(&self) -> u64 {
        match self.mode {
            RunMode::AsyncSplit => self.max_staleness,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Cluster,
    Rollout,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Rollout,
    Inference,
    Train,
    WeightSync,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub pool: Pool,
    pub stage: Stage,
    /// Position of the step in the run, from 0.
    pub step: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub mode: RunMode,
    pub max_staleness: u64,
    pub per_step: Vec<StepSimResult>,
    pub e2e_time: f64,
    /// Mean of the per-step training TGS.
    pub mean_tgs: f64,
    /// Trained tokens per GPU per second of wall time.
    pub e2e_tgs: f64,
    pub idle_fraction_overall: f64,
    /// Parameter version adopted by each step's rollout.
    pub rollout_versions: Vec<u64>,
    pub timeline: Vec<Interval>,
}

pub fn simulate_run(steps: &[WorkloadStep], config: &RunConfig) -> Result<RunResult> {
    simulate_run_with(steps, config, Exec::default())
}

/// Simulates every step (in parallel when `exec` allows) and schedules them.
pub fn simulate_run_with(steps: &[WorkloadStep], config: &RunConfig, exec: Exec) -> Result<RunResult> {
    config.validate()?;
    let n = config.steps.map_or(steps.len(), |s| s.min(steps.len()));
    let steps = &steps[..n];
    let per_step = par::map(exec, steps, |ws| {
        simulate_step_with(
            ws,
            &config.cluster,
            &config.cost,
            &config.policies,
            config.minibatches,
            Exec::Sequential,
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(schedule(per_step, config))
}

/// Places already-simulated steps on the pools.
pub fn schedule(per_step: Vec<StepSimResult>, config: &RunConfig) -> RunResult {
    let w = config.cost.t_weight_sync;
    let mut timeline = Vec::new();
    let mut versions = Vec::with_capacity(per_step.len());

    match config.mode {
        RunMode::SyncColocated => {
            let mut t = 0.0;
            for (i, s) in per_step.iter().enumerate() {
                versions.push(i as u64);
                for (stage, d) in [
                    (Stage::Rollout, s.rollout_time),
                    (Stage::Inference, s.inference_time),
                    (Stage::Train, s.train_time),
                    (Stage::WeightSync, w),
                ] {
                    push(&mut timeline, Pool::Cluster, stage, i, t, d);
                    t += d;
                }
            }
        }
        RunMode::SyncSplit | RunMode::AsyncSplit => {
            let staleness = config.effective_staleness();
            let mut train_end: Vec<f64> = Vec::with_capacity(per_step.len());
            let mut rollout_free = 0.0f64;
            let mut train_free = 0.0f64;
            let mut held_version = 0u64;
            for (t, s) in per_step.iter().enumerate() {
                // need at least t - S trained steps
                let gate = match (t as u64).checked_sub(staleness + 1) {
                    Some(j) => train_end[j as usize],
                    None => 0.0,
                };
                let ready = rollout_free.max(gate);
                let available = train_end.partition_point(|e| *e <= ready) as u64;
                let mut start = ready;
                if available > held_version {
                    push(&mut timeline, Pool::Rollout, Stage::WeightSync, t, start, w);
                    start += w;
                    held_version = available;
                }
                versions.push(held_version);
                push(&mut timeline, Pool::Rollout, Stage::Rollout, t, start, s.rollout_time);
                let rollout_end = start + s.rollout_time;
                rollout_free = rollout_end;

                let mut at = rollout_end.max(train_free);
                push(&mut timeline, Pool::Train, Stage::Inference, t, at, s.inference_time);
                at += s.inference_time;
                push(&mut timeline, Pool::Train, Stage::Train, t, at, s.train_time);
                at += s.train_time;
                train_free = at;
                train_end.push(at);
            }
        }
    }

    let e2e_time = timeline.iter().map(|iv| iv.end).fold(0.0, f64::max);
    let mean_tgs = if per_step.is_empty() {
        0.0
    } else {
        per_step.iter().map(|s| s.train_tgs).sum::<f64>() / per_step.len() as f64
    };
    let gpus = config.cluster.gpus() as f64;
    let trained: u64 = per_step.iter().map(|s| s.train_tokens).sum();
    let busy: f64 = per_step
        .iter()
        .map(|s| {
            s.rollout_busy.iter().sum::<f64>()
                + s.inference_busy.iter().sum::<f64>()
                + s.train_busy.iter().sum::<f64>()
        })
        .sum();
    let (e2e_tgs, idle_fraction_overall) = if e2e_time > 0.0 {
        (
            trained as f64 / (gpus * e2e_time),
            (1.0 - busy / (gpus * e2e_time)).clamp(0.0, 1.0),
        )
    } else {
        (0.0, 0.0)
    };
    RunResult {
        mode: config.mode,
        max_staleness: config.effective_staleness(),
        per_step,
        e2e_time,
        mean_tgs,
        e2e_tgs,
        idle_fraction_overall,
        rollout_versions: versions,
        timeline,
    }
}

fn push(tl: &mut Vec<Interval>, pool: Pool, stage: Stage, step: usize, start: f64, dur: f64) {
    if dur > 0.0 {
        tl.push(Interval {
            pool,
            stage,
            step,
            start,
            end: start + dur,
        });
    }
}

/// Checks that intervals on one pool never overlap.
pub fn check_pool_exclusive(timeline: &[Interval]) -> std::result::Result<(), String> {
    for pool in [Pool::Cluster, Pool::Rollout, Pool::Train] {
        let mut ivs: Vec<&Interval> = timeline.iter().filter(|i| i.pool == pool).collect();
        ivs.sort_by(|a, b| a.start.total_cmp(&b.start));
        for pair in ivs.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(format!(
                    "{pool:?}: {:?}@{} [{}, {}] overlaps {:?}@{} [{}, {}]",
                    pair[0].stage,
                    pair[0].step,
                    pair[0].start,
                    pair[0].end,
                    pair[1].stage,
                    pair[1].step,
                    pair[1].start,
                    pair[1].end
                ));
            }
        }
    }
    Ok(())
}

/// Checks from the timeline alone that each rollout used parameters at most
/// `max_staleness` versions behind the version its batch is trained on.
pub fn check_staleness(timeline: &[Interval], max_staleness: u64) -> std::result::Result<(), String> {
    let mut train_ends: Vec<(usize, f64)> = timeline
        .iter()
        .filter(|i| i.stage == Stage::Train)
        .map(|i| (i.step, i.end))
        .collect();
    train_ends.sort_by(|a, b| a.1.total_cmp(&b.1));
    for r in timeline.iter().filter(|i| i.stage == Stage::Rollout) {
        let version = train_ends.iter().filter(|(_, e)| *e <= r.start).count() as u64;
        let gap = (r.step as u64).saturating_sub(version);
        if gap > max_staleness {
            return Err(format!(
                "rollout of step {} started at {} with version {version} (gap {gap} > {max_staleness})",
                r.step, r.start
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    step: u64,
    rollout_s: f64,
    inference_s: f64,
    train_s: f64,
    tool_s: f64,
    idle_frac: f64,
    tgs: f64,
}

/// One row per step: `step,rollout_s,inference_s,train_s,tool_s,idle_frac,tgs`.
pub fn write_summary_csv<W: Write>(result: &RunResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in &result.per_step {
        w.serialize(SummaryRow {
            step: s.step,
            rollout_s: s.rollout_time,
            inference_s: s.inference_time,
            train_s: s.train_time,
            tool_s: s.tool_time,
            idle_frac: s.idle_fraction,
            tgs: s.train_tgs,
        })
        .map_err(|e| Error::Simulation(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<summary>", e))
}

/// Gantt table: `pool,stage,step,start,end`.
pub fn write_timeline_csv<W: Write>(timeline: &[Interval], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for iv in timeline {
        w.serialize(iv).map_err(|e| Error::Simulation(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<timeline>", e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Total GPUs: both stages get all of them when colocated, half each when split.
    Gpus,
    BatchSize,
    MaxResponseLen,
    Staleness,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "gpus" => Ok(SweepAxis::Gpus),
            "batch_size" | "bsz" => Ok(SweepAxis::BatchSize),
            "max_response_len" => Ok(SweepAxis::MaxResponseLen),
            "staleness" => Ok(SweepAxis::Staleness),
            other => Err(format!("unknown sweep axis `{other}`")),
        }
    }
}

/// Where a run's steps come from.
#[derive(Debug, Clone)]
pub enum WorkloadSource<'a> {
    Steps(&'a [WorkloadStep]),
    Generated { trace: &'a Trace, spec: SampleSpec },
}

impl WorkloadSource<'_> {
    fn materialize(&self, exec: Exec) -> Result<Vec<WorkloadStep>> {
        match self {
            WorkloadSource::Steps(s) => Ok(s.to_vec()),
            WorkloadSource::Generated { trace, spec } => {
                sample_workload_with(trace, spec, exec).map(|g| g.steps)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: u64,
    pub e2e_time: Option<f64>,
    pub mean_tgs: Option<f64>,
    pub idle_fraction: Option<f64>,
    pub rollout_time_total: Option<f64>,
    pub train_time_total: Option<f64>,
    pub error: Option<String>,
}

fn sweep_point(
    source: &WorkloadSource<'_>,
    template: &RunConfig,
    axis: SweepAxis,
    value: u64,
) -> Result<RunResult> {
    let mut cfg = template.clone();
    let mut source = source.clone();
    let mut clamp = None;
    match axis {
        SweepAxis::Staleness => cfg.max_staleness = value,
        SweepAxis::Gpus => {
            let g = value as usize;
            if cfg.cluster.colocated {
                cfg.cluster.rollout_ranks = g;
                cfg.cluster.train_ranks = g;
            } else {
                if g < 2 {
                    return Err(Error::invalid("split pools need at least 2 GPUs"));
                }
                cfg.cluster.rollout_ranks = g / 2;
                cfg.cluster.train_ranks = g - g / 2;
            }
        }
        SweepAxis::BatchSize => match &mut source {
            WorkloadSource::Generated { spec, .. } => spec.batch_size = value as usize,
            WorkloadSource::Steps(_) => {
                return Err(Error::invalid("batch-size sweeps need a generated workload"))
            }
        },
        SweepAxis::MaxResponseLen => match &mut source {
            WorkloadSource::Generated { spec, .. } => spec.max_response_len = Some(value),
            WorkloadSource::Steps(_) => clamp = Some(value),
        },
    }
    let mut steps = source.materialize(Exec::Sequential)?;
    if let Some(cap) = clamp {
        clamp_outputs(&mut steps, cap);
    }
    simulate_run_with(&steps, &cfg, Exec::Sequential)
}

/// One full run per value, identical seeds. Failed runs are recorded in
/// their row and the sweep continues.
pub fn sweep(
    source: &WorkloadSource<'_>,
    template: &RunConfig,
    axis: SweepAxis,
    values: &[u64],
) -> Result<Vec<SweepRow>> {
    sweep_with(source, template, axis, values, Exec::default())
}

pub fn sweep_with(
    source: &WorkloadSource<'_>,
    template: &RunConfig,
    axis: SweepAxis,
    values: &[u64],
    exec: Exec,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    Ok(par::map(exec, values, |&value| {
        match sweep_point(source, template, axis, value) {
            Ok(r) => SweepRow {
                axis,
                value,
                e2e_time: Some(r.e2e_time),
                mean_tgs: Some(r.mean_tgs),
                idle_fraction: Some(r.idle_fraction_overall),
                rollout_time_total: Some(r.per_step.iter().map(|s| s.rollout_time).sum()),
                train_time_total: Some(
                    r.per_step
                        .iter()
                        .map(|s| s.inference_time + s.train_time)
                        .sum(),
                ),
                error: None,
            },
            Err(e) => SweepRow {
                axis,
                value,
                e2e_time: None,
                mean_tgs: None,
                idle_fraction: None,
                rollout_time_total: None,
                train_time_total: None,
                error: Some(e.to_string()),
            },
        }
    }))
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "axis",
        "value",
        "e2e_s",
        "mean_tgs",
        "idle_frac",
        "rollout_s",
        "train_s",
        "error",
    ])
    .map_err(|e| Error::Simulation(e.to_string()))?;
    let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let axis = serde_json::to_value(r.axis)?;
        w.write_record([
            axis.as_str().unwrap_or_default().to_string(),
            r.value.to_string(),
            f(r.e2e_time),
            f(r.mean_tgs),
            f(r.idle_fraction),
            f(r.rollout_time_total),
            f(r.train_time_total),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(|e| Error::Simulation(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<sweep>", e))
}
