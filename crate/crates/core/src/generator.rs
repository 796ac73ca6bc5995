//! Benchmark workload generation.
//!
//! [`sample_workload`] draws per-step request metadata from a trace under
//! user hyperparameters (batch size, samples per prompt, task type, source
//! step, response-length cap). The sampling unit is the prompt group: all
//! samples of one generated prompt come from one source prompt, so the
//! clustering of output lengths within a prompt survives generation.
//!
//! Randomness comes from `ChaCha12Rng` (rand_chacha). Each generated step `s`
//! uses the generator seeded with the user seed on stream `s`, so steps are
//! independent of each other and of the execution order.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::trace::{TaskType, Trace, TraceRecord, WorkloadStep};

pub const PRNG_NAME: &str = "ChaCha12Rng (rand_chacha 0.9), seed_from_u64(seed), stream = step index";

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSelector {
    /// Always draw from this source step.
    Specific(u64),
    /// Walk the source steps in order, wrapping around.
    Cycle,
    /// Pick a source step uniformly at random per generated step.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    /// Prompts per generated step.
    pub batch_size: usize,
    /// Samples per prompt (G).
    pub samples_per_prompt: usize,
    /// Restrict the source to one task; `None` uses every record.
    pub task_type: Option<TaskType>,
    /// Number of steps to generate; `None` means one per source step.
    pub steps: Option<usize>,
    pub step_selector: StepSelector,
    pub max_response_len: Option<u64>,
    pub seed: u64,
    /// Draw prompts with replacement within a step.
    pub with_replacement: bool,
    /// Allow filtered samples into the source pool.
    pub include_filtered: bool,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            batch_size: 64,
            samples_per_prompt: 16,
            task_type: None,
            steps: None,
            step_selector: StepSelector::Cycle,
            max_response_len: None,
            seed: 0,
            with_replacement: false,
            include_filtered: false,
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.samples_per_prompt == 0 {
            return Err(Error::invalid("samples_per_prompt must be positive"));
        }
        if self.max_response_len == Some(0) {
            return Err(Error::invalid("max_response_len must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationMetadata {
    pub prng: String,
    pub seed: u64,
    pub spec: SampleSpec,
    /// Source step used for each generated step.
    pub source_steps: Vec<u64>,
    /// Per generated step, how many outputs were clamped.
    pub truncated: Vec<usize>,
    pub total_truncated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedWorkload {
    pub steps: Vec<WorkloadStep>,
    pub metadata: GenerationMetadata,
}

/// One sampling unit of a source step: a prompt group, or a single record
/// when the trace has no prompt linkage.
struct SourceStep<'a> {
    step: u64,
    records: Vec<&'a TraceRecord>,
    units: Vec<Vec<&'a TraceRecord>>,
    grouped: bool,
}

fn source_steps<'a>(trace: &'a Trace, spec: &SampleSpec) -> Vec<SourceStep<'a>> {
    let mut by_step: std::collections::BTreeMap<u64, Vec<&'a TraceRecord>> = Default::default();
    for r in &trace.records {
        let task_ok = spec.task_type.as_ref().is_none_or(|t| &r.task_type == t);
        if task_ok && (spec.include_filtered || !r.filtered) {
            by_step.entry(r.step).or_default().push(r);
        }
    }
    by_step
        .into_iter()
        .map(|(step, records)| {
            let grouped = records.iter().any(|r| r.prompt_id.is_some());
            let units = if grouped {
                let mut order: Vec<&str> = Vec::new();
                let mut map: HashMap<&str, Vec<&TraceRecord>> = HashMap::new();
                for r in &records {
                    // ungrouped stragglers in a grouped step become singleton units
                    let key = r.prompt_id.as_deref().unwrap_or("");
                    map.entry(key)
                        .or_insert_with(|| {
                            order.push(key);
                            Vec::new()
                        })
                        .push(*r);
                }
                let mut units = Vec::new();
                for key in order {
                    let members = map.remove(key).unwrap_or_default();
                    if key.is_empty() {
                        units.extend(members.into_iter().map(|r| vec![r]));
                    } else {
                        units.push(members);
                    }
                }
                units
            } else {
                records.iter().map(|r| vec![*r]).collect()
            };
            SourceStep {
                step,
                records,
                units,
                grouped,
            }
        })
        .collect()
}

pub fn sample_workload(trace: &Trace, spec: &SampleSpec) -> Result<GeneratedWorkload> {
    sample_workload_with(trace, spec, Exec::default())
}

pub fn sample_workload_with(trace: &Trace, spec: &SampleSpec, exec: Exec) -> Result<GeneratedWorkload> {
    spec.validate()?;
    let sources = source_steps(trace, spec);
    if sources.is_empty() {
        let label = spec
            .task_type
            .as_ref()
            .map(|t| t.to_string())
            .unwrap_or_else(|| "any".into());
        return Err(Error::NoRecords(label));
    }
    let n_steps = spec.steps.unwrap_or(match spec.step_selector {
        StepSelector::Cycle => sources.len(),
        _ => 1,
    });
    if let StepSelector::Specific(s) = spec.step_selector {
        if !sources.iter().any(|src| src.step == s) {
            return Err(Error::invalid(format!("source step {s} has no matching records")));
        }
    }

    let generated: Vec<Result<(WorkloadStep, u64, usize)>> =
        par::map_range(exec, n_steps, |s| generate_step(&sources, spec, s));
    let mut steps = Vec::with_capacity(n_steps);
    let mut source = Vec::with_capacity(n_steps);
    let mut truncated = Vec::with_capacity(n_steps);
    for g in generated {
        let (ws, src, t) = g?;
        steps.push(ws);
        source.push(src);
        truncated.push(t);
    }
    let total_truncated = truncated.iter().sum();
    Ok(GeneratedWorkload {
        steps,
        metadata: GenerationMetadata {
            prng: PRNG_NAME.into(),
            seed: spec.seed,
            spec: spec.clone(),
            source_steps: source,
            truncated,
            total_truncated,
        },
    })
}

fn generate_step(
    sources: &[SourceStep<'_>],
    spec: &SampleSpec,
    s: usize,
) -> Result<(WorkloadStep, u64, usize)> {
    let mut rng = stream_rng(spec.seed, s as u64);
    let src = match spec.step_selector {
        StepSelector::Specific(step) => sources.iter().find(|x| x.step == step).expect("checked"),
        StepSelector::Cycle => &sources[s % sources.len()],
        StepSelector::UniformRandom => &sources[rng.random_range(0..sources.len())],
    };
    let picks: Vec<usize> = if spec.with_replacement {
        (0..spec.batch_size)
            .map(|_| rng.random_range(0..src.units.len()))
            .collect()
    } else {
        if spec.batch_size > src.units.len() {
            return Err(Error::invalid(format!(
                "batch_size {} exceeds the {} prompts available in step {} (enable replacement)",
                spec.batch_size,
                src.units.len(),
                src.step
            )));
        }
        index::sample(&mut rng, src.units.len(), spec.batch_size).into_vec()
    };

    let step_id = s as u64;
    let mut truncated = 0;
    let mut requests = Vec::with_capacity(spec.batch_size * spec.samples_per_prompt);
    for (p, &u) in picks.iter().enumerate() {
        let unit = &src.units[u];
        let prompt = format!("s{step_id}-p{p}");
        for j in 0..spec.samples_per_prompt {
            let donor = if src.grouped {
                unit[rng.random_range(0..unit.len())]
            } else {
                unit[0]
            };
            let mut rec = TraceRecord {
                step: step_id,
                input_len: donor.input_len,
                output_len: donor.output_len,
                task_type: spec.task_type.clone().unwrap_or_else(|| donor.task_type.clone()),
                prompt_id: Some(prompt.clone()),
                sample_id: Some(j as u32),
                turn_count: donor.turn_count,
                tool_latencies_ms: donor.tool_latencies_ms.clone(),
                filtered: false,
            };
            if !src.grouped {
                // no prompt linkage: outputs are i.i.d. draws from the step
                rec.output_len = src.records[rng.random_range(0..src.records.len())].output_len;
            }
            if let Some(cap) = spec.max_response_len {
                if rec.output_len > cap {
                    rec.output_len = cap;
                    truncated += 1;
                }
            }
            requests.push(rec);
        }
    }
    Ok((WorkloadStep::new(step_id, requests), src.step, truncated))
}

/// Clamps every output length to `cap`, returning the number clamped.
pub fn clamp_outputs(steps: &mut [WorkloadStep], cap: u64) -> usize {
    let mut n = 0;
    for r in steps.iter_mut().flat_map(|s| s.requests.iter_mut()) {
        if r.output_len > cap {
            r.output_len = cap;
            n += 1;
        }
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyMode {
    EmpiricalResample,
    Fixed(f64),
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub mode: LatencyMode,
    #[serde(default)]
    pub empirical_samples_ms: Vec<f64>,
}

impl LatencyModel {
    pub fn zero() -> Self {
        LatencyModel {
            mode: LatencyMode::Zero,
            empirical_samples_ms: Vec::new(),
        }
    }

    pub fn fixed(ms: f64) -> Self {
        LatencyModel {
            mode: LatencyMode::Fixed(ms),
            empirical_samples_ms: Vec::new(),
        }
    }

    pub fn empirical(samples_ms: Vec<f64>) -> Self {
        LatencyModel {
            mode: LatencyMode::EmpiricalResample,
            empirical_samples_ms: samples_ms,
        }
    }

    /// Empirical model over every tool latency recorded in a trace.
    pub fn from_trace(trace: &Trace) -> Self {
        Self::empirical(
            trace
                .records
                .iter()
                .filter_map(|r| r.tool_latencies_ms.as_ref())
                .flatten()
                .copied()
                .collect(),
        )
    }
}

/// Draws `n` tool latencies (ms). Empirical mode resamples uniformly with
/// replacement.
pub fn sample_tool_latency(model: &LatencyModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    match model.mode {
        LatencyMode::Zero => Ok(vec![0.0; n]),
        LatencyMode::Fixed(v) => {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid("fixed latency must be finite and non-negative"));
            }
            Ok(vec![v; n])
        }
        LatencyMode::EmpiricalResample => {
            let pool = &model.empirical_samples_ms;
            if pool.is_empty() {
                return Err(Error::invalid("empirical latency model has no samples"));
            }
            let mut rng = stream_rng(seed, 0);
            Ok((0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect())
        }
    }
}

/// Gives every request with `turn_count = t` exactly `t − 1` sampled tool
/// latencies, replacing whatever it carried.
pub fn attach_tool_latencies(steps: &mut [WorkloadStep], model: &LatencyModel, seed: u64) -> Result<()> {
    for ws in steps.iter_mut() {
        let calls: usize = ws
            .requests
            .iter()
            .map(|r| r.turn_count.map_or(0, |t| t.saturating_sub(1) as usize))
            .sum();
        let mut draws = sample_tool_latency(model, calls, seed ^ ws.step.rotate_left(32))?.into_iter();
        for r in &mut ws.requests {
            if let Some(t) = r.turn_count {
                r.tool_latencies_ms = Some(draws.by_ref().take(t.saturating_sub(1) as usize).collect());
            }
        }
    }
    Ok(())
}

/// Shape of per-prompt output lengths: a uniform body plus an optional
/// uniform tail, with multiplicative jitter between samples of a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputShape {
    pub body_min: u64,
    pub body_max: u64,
    /// Probability that a prompt falls in the tail.
    pub tail_mass: f64,
    pub tail_min: u64,
    pub tail_max: u64,
    /// Relative half-width of the per-sample jitter around the prompt's length.
    pub within_prompt_noise: f64,
    /// Hard response-length cap.
    pub max_output: u64,
}

impl OutputShape {
    fn validate(&self) -> Result<()> {
        if self.body_min > self.body_max || self.tail_min > self.tail_max {
            return Err(Error::invalid("output ranges must have min <= max"));
        }
        if !(0.0..=1.0).contains(&self.tail_mass) {
            return Err(Error::invalid("tail_mass must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.within_prompt_noise) {
            return Err(Error::invalid("within_prompt_noise must lie in [0, 1)"));
        }
        if self.max_output == 0 {
            return Err(Error::invalid("max_output must be positive"));
        }
        Ok(())
    }

    fn prompt_length<R: Rng>(&self, rng: &mut R, scale: f64) -> f64 {
        let base = if rng.random_bool(self.tail_mass) {
            rng.random_range(self.tail_min..=self.tail_max)
        } else {
            rng.random_range(self.body_min..=self.body_max)
        };
        base as f64 * scale
    }

    fn sample_length<R: Rng>(&self, rng: &mut R, prompt_len: f64) -> u64 {
        let noise = if self.within_prompt_noise > 0.0 {
            rng.random_range(-self.within_prompt_noise..=self.within_prompt_noise)
        } else {
            0.0
        };
        ((prompt_len * (1.0 + noise)).round().max(0.0) as u64).min(self.max_output)
    }
}

/// Long-tailed outputs with short, unstructured inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTailRecipe {
    pub task_type: TaskType,
    pub input_min: u64,
    pub input_max: u64,
    pub output: OutputShape,
    pub samples_per_prompt: usize,
    /// Relative output growth per step (0.01 = +1% per step).
    pub growth_per_step: f64,
    /// Probability that a sample is marked filtered.
    pub filtered_fraction: f64,
}

impl Default for LongTailRecipe {
    fn default() -> Self {
        LongTailRecipe {
            task_type: TaskType::Mathematics,
            input_min: 40,
            input_max: 600,
            output: OutputShape {
                body_min: 1_000,
                body_max: 12_000,
                tail_mass: 0.1,
                tail_min: 12_000,
                tail_max: 32_000,
                within_prompt_noise: 0.1,
                max_output: 32_000,
            },
            samples_per_prompt: 16,
            growth_per_step: 0.0,
            filtered_fraction: 0.0,
        }
    }
}

/// Inputs made of a text part plus a whole number of fixed-size media blocks,
/// giving a stepwise input CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandedInputRecipe {
    pub task_type: TaskType,
    pub text_min: u64,
    pub text_max: u64,
    pub band_tokens: u64,
    pub max_bands: u32,
    pub output: OutputShape,
    pub samples_per_prompt: usize,
}

impl Default for BandedInputRecipe {
    fn default() -> Self {
        BandedInputRecipe {
            task_type: TaskType::ImageUnderstanding,
            text_min: 50,
            text_max: 400,
            band_tokens: 1_280,
            max_bands: 6,
            output: OutputShape {
                body_min: 500,
                body_max: 6_000,
                tail_mass: 0.15,
                tail_min: 6_000,
                tail_max: 32_000,
                within_prompt_noise: 0.1,
                max_output: 32_000,
            },
            samples_per_prompt: 16,
        }
    }
}

/// Multi-turn tool use: input grows linearly with the number of turns and
/// single-turn answers are longer than tool-calling ones. An optional shift
/// step switches to a different turn range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnLinearRecipe {
    pub task_type: TaskType,
    pub per_turn_input: u64,
    pub input_jitter: u64,
    pub turns: (u32, u32),
    pub shift_step: Option<u64>,
    pub turns_after_shift: (u32, u32),
    pub single_turn_output: (u64, u64),
    pub multi_turn_output: (u64, u64),
    pub tool_latency_ms: (f64, f64),
    pub samples_per_prompt: usize,
}

impl Default for TurnLinearRecipe {
    fn default() -> Self {
        TurnLinearRecipe {
            task_type: TaskType::ToolUse,
            per_turn_input: 500,
            input_jitter: 100,
            turns: (2, 6),
            shift_step: None,
            turns_after_shift: (1, 4),
            single_turn_output: (300, 4_000),
            multi_turn_output: (60, 500),
            tool_latency_ms: (50.0, 2_000.0),
            samples_per_prompt: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "snake_case")]
pub enum Recipe {
    LongTail(LongTailRecipe),
    BandedInput(BandedInputRecipe),
    TurnLinear(TurnLinearRecipe),
}

impl Recipe {
    /// Default recipe by name: `long-tail`, `banded-input` or `turn-linear`.
    pub fn by_name(name: &str) -> Option<Recipe> {
        match name.replace('_', "-").as_str() {
            "long-tail" => Some(Recipe::LongTail(LongTailRecipe::default())),
            "banded-input" => Some(Recipe::BandedInput(BandedInputRecipe::default())),
            "turn-linear" => Some(Recipe::TurnLinear(TurnLinearRecipe::default())),
            _ => None,
        }
    }

    fn samples_per_prompt(&self) -> usize {
        match self {
            Recipe::LongTail(r) => r.samples_per_prompt,
            Recipe::BandedInput(r) => r.samples_per_prompt,
            Recipe::TurnLinear(r) => r.samples_per_prompt,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples_per_prompt() == 0 {
            return Err(Error::invalid("samples_per_prompt must be positive"));
        }
        match self {
            Recipe::LongTail(r) => {
                if r.input_min > r.input_max {
                    return Err(Error::invalid("input_min > input_max"));
                }
                if !(0.0..=1.0).contains(&r.filtered_fraction) {
                    return Err(Error::invalid("filtered_fraction must lie in [0, 1]"));
                }
                if !r.growth_per_step.is_finite() {
                    return Err(Error::invalid("growth_per_step must be finite"));
                }
                r.output.validate()
            }
            Recipe::BandedInput(r) => {
                if r.text_min > r.text_max {
                    return Err(Error::invalid("text_min > text_max"));
                }
                r.output.validate()
            }
            Recipe::TurnLinear(r) => {
                let ok = |(a, b): (u32, u32)| a >= 1 && a <= b;
                if !ok(r.turns) || !ok(r.turns_after_shift) {
                    return Err(Error::invalid("turn ranges must satisfy 1 <= min <= max"));
                }
                if r.single_turn_output.0 > r.single_turn_output.1
                    || r.multi_turn_output.0 > r.multi_turn_output.1
                {
                    return Err(Error::invalid("output ranges must have min <= max"));
                }
                let (lo, hi) = r.tool_latency_ms;
                if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
                    return Err(Error::invalid("tool latency range must satisfy 0 <= min <= max"));
                }
                Ok(())
            }
        }
    }
}

/// Builds a synthetic trace of `steps` steps with `per_step` samples each
/// (the last prompt of a step may be cut short). Steps are numbered from 1.
pub fn synthesize_trace(recipe: &Recipe, steps: usize, per_step: usize, seed: u64) -> Result<Trace> {
    recipe.validate()?;
    let per_step_records = par::map_range(Exec::default(), steps, |i| {
        let step = i as u64 + 1;
        let mut rng = stream_rng(seed, step);
        let g = recipe.samples_per_prompt();
        let mut out = Vec::with_capacity(per_step);
        let mut prompt = 0usize;
        while out.len() < per_step {
            let pid = format!("s{step}-p{prompt}");
            let members = g.min(per_step - out.len());
            synth_prompt(recipe, step, &pid, members, &mut rng, &mut out);
            prompt += 1;
        }
        out
    });
    let name = match recipe {
        Recipe::LongTail(_) => "synthetic-long-tail",
        Recipe::BandedInput(_) => "synthetic-banded-input",
        Recipe::TurnLinear(_) => "synthetic-turn-linear",
    };
    Ok(Trace::new(name, per_step_records.into_iter().flatten().collect()))
}

fn synth_prompt<R: Rng>(
    recipe: &Recipe,
    step: u64,
    pid: &str,
    members: usize,
    rng: &mut R,
    out: &mut Vec<TraceRecord>,
) {
    match recipe {
        Recipe::LongTail(r) => {
            let input = rng.random_range(r.input_min..=r.input_max);
            let scale = (1.0 + r.growth_per_step * step as f64).max(0.0);
            let center = r.output.prompt_length(rng, scale);
            for j in 0..members {
                let mut rec = TraceRecord::new(step, input, r.output.sample_length(rng, center), r.task_type.clone())
                    .with_prompt(pid, Some(j as u32));
                rec.filtered = r.filtered_fraction > 0.0 && rng.random_bool(r.filtered_fraction);
                out.push(rec);
            }
        }
        Recipe::BandedInput(r) => {
            let bands = rng.random_range(0..=r.max_bands) as u64;
            let input = rng.random_range(r.text_min..=r.text_max) + bands * r.band_tokens;
            let center = r.output.prompt_length(rng, 1.0);
            for j in 0..members {
                out.push(
                    TraceRecord::new(step, input, r.output.sample_length(rng, center), r.task_type.clone())
                        .with_prompt(pid, Some(j as u32)),
                );
            }
        }
        Recipe::TurnLinear(r) => {
            let (tlo, thi) = match r.shift_step {
                Some(s) if step >= s => r.turns_after_shift,
                _ => r.turns,
            };
            for j in 0..members {
                let turns = rng.random_range(tlo..=thi);
                let jitter = rng.random_range(0..=2 * r.input_jitter) as i64 - r.input_jitter as i64;
                let input = (turns as i64 * r.per_turn_input as i64 + jitter).max(0) as u64;
                let (olo, ohi) = if turns == 1 {
                    r.single_turn_output
                } else {
                    r.multi_turn_output
                };
                let (llo, lhi) = r.tool_latency_ms;
                let lat: Vec<f64> = (1..turns)
                    .map(|_| if lhi > llo { rng.random_range(llo..=lhi) } else { llo })
                    .collect();
                let mut rec = TraceRecord::new(step, input, rng.random_range(olo..=ohi), r.task_type.clone())
                    .with_prompt(pid, Some(j as u32));
                rec.turn_count = Some(turns);
                rec.tool_latencies_ms = Some(lat);
                out.push(rec);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{summary, LengthDistribution, LengthKind};

    fn small_trace() -> Trace {
        synthesize_trace(&Recipe::by_name("long-tail").unwrap(), 4, 64, 3).unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = small_trace();
        let spec = SampleSpec {
            batch_size: 2,
            samples_per_prompt: 1,
            seed: 42,
            steps: Some(3),
            ..Default::default()
        };
        let a = sample_workload(&t, &spec).unwrap();
        let b = sample_workload(&t, &spec).unwrap();
        assert_eq!(a, b);
        let c = sample_workload_with(&t, &spec, Exec::Sequential).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn clamp_caps_every_output() {
        let t = small_trace();
        let spec = SampleSpec {
            batch_size: 4,
            max_response_len: Some(1000),
            ..Default::default()
        };
        let w = sample_workload(&t, &spec).unwrap();
        assert!(w.steps.iter().flat_map(|s| &s.requests).all(|r| r.output_len <= 1000));
        assert!(w.metadata.total_truncated > 0);
        assert_eq!(w.steps[0].requests.len(), 4 * 16);
    }

    #[test]
    fn sampling_errors() {
        let t = small_trace();
        let spec = SampleSpec {
            task_type: Some(TaskType::Searching),
            ..Default::default()
        };
        assert!(matches!(sample_workload(&t, &spec), Err(Error::NoRecords(_))));
        let spec = SampleSpec {
            batch_size: 5,
            ..Default::default()
        };
        assert!(sample_workload(&t, &spec).is_err());
        let spec = SampleSpec {
            batch_size: 5,
            with_replacement: true,
            ..Default::default()
        };
        assert!(sample_workload(&t, &spec).is_ok());
    }

    #[test]
    fn group_samples_come_from_one_source_prompt() {
        let t = small_trace();
        let spec = SampleSpec {
            batch_size: 3,
            step_selector: StepSelector::Specific(2),
            ..Default::default()
        };
        let w = sample_workload(&t, &spec).unwrap();
        let src = &t.records;
        for chunk in w.steps[0].requests.chunks(16) {
            let pids: std::collections::HashSet<_> = chunk
                .iter()
                .map(|g| {
                    src.iter()
                        .filter(|r| r.step == 2 && r.output_len == g.output_len)
                        .map(|r| r.prompt_id.clone())
                        .collect::<Vec<_>>()
                })
                .collect();
            // every generated length occurs in the source step
            assert!(pids.iter().all(|p| !p.is_empty()));
        }
    }

    #[test]
    fn tool_latency_modes() {
        assert_eq!(sample_tool_latency(&LatencyModel::zero(), 5, 1).unwrap(), vec![0.0; 5]);
        assert_eq!(
            sample_tool_latency(&LatencyModel::fixed(120.0), 3, 1).unwrap(),
            vec![120.0; 3]
        );
        assert!(sample_tool_latency(&LatencyModel::empirical(vec![]), 3, 1).is_err());
        let m = LatencyModel::empirical(vec![1.0, 2.0, 3.0]);
        let a = sample_tool_latency(&m, 50, 9).unwrap();
        assert_eq!(a, sample_tool_latency(&m, 50, 9).unwrap());
        assert!(a.iter().all(|x| [1.0, 2.0, 3.0].contains(x)));
    }

    #[test]
    fn turn_linear_inputs() {
        let t = synthesize_trace(&Recipe::by_name("turn-linear").unwrap(), 3, 200, 1).unwrap();
        for r in &t.records {
            let turns = r.turn_count.unwrap() as u64;
            assert!(r.input_len >= turns * 500 - 100 && r.input_len <= turns * 500 + 100);
            assert_eq!(r.tool_latencies_ms.as_ref().unwrap().len() as u64, turns - 1);
        }
    }

    #[test]
    fn no_tail_means_short_tail() {
        let mut r = LongTailRecipe::default();
        r.output.tail_mass = 0.0;
        let t = synthesize_trace(&Recipe::LongTail(r), 5, 512, 11).unwrap();
        let s = summary(&LengthDistribution::from_records(LengthKind::Output, &t.records, true)).unwrap();
        assert!(s.max / s.p90 <= 1.2, "{}", s.max / s.p90);
    }

    #[test]
    fn zero_steps_and_bad_recipes() {
        assert!(synthesize_trace(&Recipe::by_name("long-tail").unwrap(), 0, 10, 0)
            .unwrap()
            .is_empty());
        let mut r = LongTailRecipe::default();
        r.output.tail_mass = 1.5;
        assert!(synthesize_trace(&Recipe::LongTail(r), 1, 10, 0).is_err());
        let r = TurnLinearRecipe {
            turns: (0, 3),
            ..Default::default()
        };
        assert!(synthesize_trace(&Recipe::TurnLinear(r), 1, 10, 0).is_err());
    }

    #[test]
    fn attach_latencies_matches_turns() {
        let t = synthesize_trace(&Recipe::by_name("turn-linear").unwrap(), 2, 32, 5).unwrap();
        let mut steps = crate::trace::group_by_step(&t);
        attach_tool_latencies(&mut steps, &LatencyModel::fixed(10.0), 1).unwrap();
        for r in steps.iter().flat_map(|s| &s.requests) {
            let lat = r.tool_latencies_ms.as_ref().unwrap();
            assert_eq!(lat.len() as u32, r.turn_count.unwrap() - 1);
            assert!(lat.iter().all(|x| *x == 10.0));
        }
    }
}
