mod common;

use proptest::prelude::*;
use rlvr_core::generator::{
    clamp_outputs, sample_tool_latency, sample_workload, sample_workload_with, synthesize_trace,
    LatencyModel, LongTailRecipe, Recipe, SampleSpec, StepSelector, TurnLinearRecipe,
};
use rlvr_core::par::Exec;
use rlvr_core::stats::{
    median_within_prompt_cv, percentile, prompt_group_stats, temporal_trend, LengthDistribution,
    LengthKind,
};
use rlvr_core::trace::{group_by_step, write_csv, Trace, TraceRecord};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn outputs(records: impl IntoIterator<Item = u64>) -> LengthDistribution {
    LengthDistribution::new(LengthKind::Output, records.into_iter().map(|v| v as f64).collect())
}

#[test]
fn bootstrap_preserves_step_percentiles() {
    // one ungrouped step with a skewed output distribution
    let src: Vec<TraceRecord> = (0..5000u64)
        .map(|i| common::rec(4, 100, 200 + (i * i) % 20_000))
        .collect();
    let trace = Trace::new("t", src.clone());
    let spec = SampleSpec {
        batch_size: 100_000,
        samples_per_prompt: 1,
        with_replacement: true,
        seed: 11,
        ..Default::default()
    };
    let w = sample_workload(&trace, &spec).unwrap();
    assert_eq!(w.steps.len(), 1);
    let got = outputs(w.steps[0].requests.iter().map(|r| r.output_len));
    let want = outputs(src.iter().map(|r| r.output_len));
    for p in [0.5, 0.9] {
        let e = rel_err(percentile(&got, p).unwrap(), percentile(&want, p).unwrap());
        assert!(e < 0.02, "p{p}: relative error {e}");
    }
}

#[test]
fn latency_resampling_preserves_percentiles() {
    let source: Vec<f64> = (0..10_000)
        .map(|i| 20.0 + (i as f64 * 0.618_034).fract().powi(3) * 4_000.0)
        .collect();
    let draws = sample_tool_latency(&LatencyModel::empirical(source.clone()), 100_000, 5).unwrap();
    let a = LengthDistribution::new(LengthKind::ToolLatency, draws);
    let b = LengthDistribution::new(LengthKind::ToolLatency, source);
    for p in [0.5, 0.95] {
        let e = rel_err(percentile(&a, p).unwrap(), percentile(&b, p).unwrap());
        assert!(e < 0.03, "p{p}: relative error {e}");
    }
}

#[test]
fn prompt_group_dispersion_is_preserved() {
    let trace = synthesize_trace(&Recipe::LongTail(LongTailRecipe::default()), 20, 512, 3).unwrap();
    let source_cv: Vec<f64> = group_by_step(&trace)
        .iter()
        .map(|ws| median_within_prompt_cv(&prompt_group_stats(ws).unwrap()).unwrap())
        .collect();
    let spec = SampleSpec {
        batch_size: 32,
        samples_per_prompt: 16,
        seed: 9,
        ..Default::default()
    };
    let w = sample_workload(&trace, &spec).unwrap();
    let gen_cv: Vec<f64> = w
        .steps
        .iter()
        .map(|ws| median_within_prompt_cv(&prompt_group_stats(ws).unwrap()).unwrap())
        .collect();
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (s, g) = (median(source_cv), median(gen_cv));
    assert!(rel_err(g, s) <= 0.10, "source {s}, generated {g}");
}

#[test]
fn turn_drop_shows_in_input_trend() {
    let recipe = Recipe::TurnLinear(TurnLinearRecipe {
        turns: (3, 6),
        shift_step: Some(30),
        turns_after_shift: (1, 3),
        ..Default::default()
    });
    let trace = synthesize_trace(&recipe, 60, 256, 21).unwrap();
    let trend = temporal_trend(&trace, LengthKind::Input, true, Exec::Sequential);
    let mean = |it: Vec<f64>| it.iter().sum::<f64>() / it.len() as f64;
    let before = mean(trend.iter().filter(|(s, _)| *s < 30).map(|(_, t)| t.p50).collect());
    let after = mean(trend.iter().filter(|(s, _)| *s >= 30).map(|(_, t)| t.p50).collect());
    assert!(after < 0.6 * before, "before {before}, after {after}");
    let p50 = |s: u64| trend.iter().find(|(x, _)| *x == s).unwrap().1.p50;
    assert!(p50(30) < p50(29));
}

#[test]
fn turn_linear_inputs_track_turns() {
    let trace = synthesize_trace(&Recipe::by_name("turn-linear").unwrap(), 5, 400, 2).unwrap();
    for r in trace.records.iter().filter(|r| r.turn_count == Some(4)) {
        assert!((1900..=2100).contains(&r.input_len), "{}", r.input_len);
    }
}

#[test]
fn sequential_and_parallel_generation_agree() {
    let trace = synthesize_trace(&Recipe::by_name("banded-input").unwrap(), 6, 300, 4).unwrap();
    let spec = SampleSpec {
        batch_size: 8,
        steps: Some(12),
        seed: 77,
        ..Default::default()
    };
    assert_eq!(
        sample_workload_with(&trace, &spec, Exec::Sequential).unwrap(),
        sample_workload_with(&trace, &spec, Exec::Parallel).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn same_seed_same_bytes(seed in any::<u64>(), bsz in 1usize..6, g in 1usize..5, sel in 0u8..3) {
        let trace = synthesize_trace(&Recipe::by_name("long-tail").unwrap(), 4, 96, seed ^ 1).unwrap();
        let spec = SampleSpec {
            batch_size: bsz,
            samples_per_prompt: g,
            seed,
            step_selector: match sel { 0 => StepSelector::Cycle, 1 => StepSelector::UniformRandom, _ => StepSelector::Specific(2) },
            steps: Some(3),
            ..Default::default()
        };
        let bytes = |w: &rlvr_core::generator::GeneratedWorkload| {
            let mut buf = Vec::new();
            let recs: Vec<TraceRecord> = w.steps.iter().flat_map(|s| s.requests.clone()).collect();
            write_csv(&recs, &mut buf).unwrap();
            buf
        };
        let a = sample_workload(&trace, &spec).unwrap();
        let b = sample_workload(&trace, &spec).unwrap();
        prop_assert_eq!(bytes(&a), bytes(&b));
        for ws in &a.steps {
            prop_assert_eq!(ws.requests.len(), bsz * g);
        }
    }

    #[test]
    fn clamping_only_shrinks(cap in 1u64..40_000, seed in any::<u64>()) {
        let trace = synthesize_trace(&Recipe::by_name("long-tail").unwrap(), 3, 64, seed).unwrap();
        let mut steps = group_by_step(&trace);
        let before = steps.clone();
        let n = clamp_outputs(&mut steps, cap);
        let mut changed = 0;
        for (a, b) in before.iter().flat_map(|s| &s.requests).zip(steps.iter().flat_map(|s| &s.requests)) {
            prop_assert!(b.output_len <= a.output_len);
            prop_assert!(b.output_len <= cap);
            if a.output_len <= cap {
                prop_assert_eq!(a, b);
            } else {
                changed += 1;
            }
        }
        prop_assert_eq!(n, changed);
    }

    #[test]
    fn synthesized_records_are_valid(seed in any::<u64>(), which in 0u8..3) {
        let name = ["long-tail", "banded-input", "turn-linear"][which as usize];
        let trace = synthesize_trace(&Recipe::by_name(name).unwrap(), 3, 50, seed).unwrap();
        prop_assert_eq!(trace.len(), 150);
        for r in &trace.records {
            prop_assert!(r.validate().is_ok());
        }
    }
}
