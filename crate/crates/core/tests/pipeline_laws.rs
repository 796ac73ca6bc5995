mod common;

use proptest::prelude::*;
use rlvr_core::par::Exec;
use rlvr_core::pipeline::{
    check_pool_exclusive, check_staleness, schedule, simulate_run, simulate_run_with, sweep,
    write_summary_csv, write_sweep_csv, write_timeline_csv, Pool, RunConfig, RunMode, Stage,
    SweepAxis, WorkloadSource,
};
use rlvr_core::simcore::{ClusterSpec, CostModel, StepSimResult};
use rlvr_core::trace::WorkloadStep;

fn workload() -> impl Strategy<Value = Vec<WorkloadStep>> {
    proptest::collection::vec(proptest::collection::vec((0u64..2000, 1u64..6000), 2..24), 1..14).prop_map(
        |steps| {
            steps
                .into_iter()
                .enumerate()
                .map(|(s, reqs)| {
                    WorkloadStep::new(
                        s as u64,
                        reqs.into_iter().map(|(i, o)| common::rec(s as u64, i, o)).collect(),
                    )
                })
                .collect()
        },
    )
}

fn cost() -> impl Strategy<Value = CostModel> {
    (1e-5..1e-3f64, 1e-3..0.05f64, 1e-5..2e-3f64, 0.0..2.0f64, 0.0..20.0f64).prop_map(|(p, d, t, c, w)| {
        CostModel {
            t_prefill_per_token: p,
            t_decode_per_token: d,
            t_train_per_token: t,
            t_train_quadratic: 0.0,
            t_comm_per_minibatch: c,
            t_sched_per_request: 0.001,
            t_weight_sync: w,
        }
    })
}

fn split(mode: RunMode, s: u64, cost: &CostModel) -> RunConfig {
    RunConfig {
        mode,
        max_staleness: s,
        cluster: ClusterSpec {
            rollout_ranks: 2,
            train_ranks: 2,
            colocated: false,
            kv_capacity_tokens: None,
        },
        cost: cost.clone(),
        ..Default::default()
    }
}

fn train_ends(r: &rlvr_core::pipeline::RunResult) -> Vec<f64> {
    let mut v: Vec<(usize, f64)> = r
        .timeline
        .iter()
        .filter(|i| i.stage == Stage::Train)
        .map(|i| (i.step, i.end))
        .collect();
    v.sort_by_key(|x| x.0);
    v.into_iter().map(|x| x.1).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn async_laws(steps in workload(), c in cost(), s in 0u64..10, free_sync in any::<bool>()) {
        let c = if free_sync { CostModel { t_weight_sync: 0.0, ..c } } else { c };
        let sync = simulate_run(&steps, &split(RunMode::SyncSplit, 0, &c)).unwrap();
        let zero = simulate_run(&steps, &split(RunMode::AsyncSplit, 0, &c)).unwrap();
        prop_assert_eq!(&zero.timeline, &sync.timeline);

        let mut prev = sync.e2e_time;
        for s in 0..=s {
            let r = simulate_run(&steps, &split(RunMode::AsyncSplit, s, &c)).unwrap();
            prop_assert!(r.e2e_time <= sync.e2e_time + c.t_weight_sync * steps.len() as f64 + 1e-9);
            if free_sync {
                prop_assert!(r.e2e_time <= prev + 1e-9, "S={} e2e {} > {}", s, r.e2e_time, prev);
            }
            prev = r.e2e_time;
            prop_assert!(check_pool_exclusive(&r.timeline).is_ok());
            prop_assert!(check_staleness(&r.timeline, s).is_ok());
            let max_end = r.timeline.iter().map(|i| i.end).fold(0.0, f64::max);
            prop_assert_eq!(r.e2e_time, max_end);
            for (t, v) in r.rollout_versions.iter().enumerate() {
                prop_assert!(t as u64 - (*v).min(t as u64) <= s);
            }
        }
    }

    #[test]
    fn colocated_is_serial(steps in workload(), c in cost()) {
        let cfg = RunConfig { cost: c, ..Default::default() };
        let r = simulate_run(&steps, &cfg).unwrap();
        let serial: f64 = r.per_step.iter().map(|s| s.total_time).sum();
        prop_assert!((r.e2e_time - serial).abs() <= 1e-9 * serial.max(1.0));
        prop_assert!(check_pool_exclusive(&r.timeline).is_ok());
        prop_assert!(r.timeline.iter().all(|i| i.pool == Pool::Cluster));
        prop_assert!((0.0..=1.0).contains(&r.idle_fraction_overall));
    }

    #[test]
    fn period_law(rollout in 1u32..50, inference in 0u32..20, train in 1u32..50, n in 6usize..30, s in 1u64..6) {
        let step = StepSimResult {
            rollout_time: rollout as f64,
            inference_time: inference as f64,
            train_time: train as f64,
            ..Default::default()
        };
        let cfg = split(RunMode::AsyncSplit, s, &CostModel { t_weight_sync: 0.0, ..Default::default() });
        let r = schedule(vec![step.clone(); n], &cfg);
        let ends = train_ends(&r);
        let period = (rollout as f64).max((inference + train) as f64);
        // after the pipeline fills, completions are one period apart
        for w in ends[n / 2..].windows(2) {
            prop_assert_eq!(w[1] - w[0], period);
        }
        let sync = schedule(vec![step; n], &split(RunMode::SyncSplit, 0, &cfg.cost));
        for w in train_ends(&sync).windows(2) {
            prop_assert_eq!(w[1] - w[0], (rollout + inference + train) as f64);
        }
    }
}

#[test]
fn textbook_two_one_example() {
    let step = StepSimResult {
        rollout_time: 2.0,
        train_time: 1.0,
        ..Default::default()
    };
    let c = CostModel {
        t_weight_sync: 0.0,
        ..Default::default()
    };
    assert_eq!(schedule(vec![step.clone(); 4], &split(RunMode::SyncSplit, 0, &c)).e2e_time, 12.0);
    assert_eq!(schedule(vec![step; 4], &split(RunMode::AsyncSplit, 1, &c)).e2e_time, 9.0);
}

#[test]
fn paid_adoption_can_break_staleness_monotonicity() {
    // with S=3 rollout 3 starts before any version lands, so rollouts 4 and 5 both sync
    let steps: Vec<StepSimResult> = [(3.0, 6.0), (0.0, 0.0), (4.0, 0.0), (1.0, 8.0), (6.0, 0.0), (1.0, 3.0)]
        .iter()
        .map(|&(r, t)| StepSimResult { rollout_time: r, train_time: t, ..Default::default() })
        .collect();
    let c = CostModel { t_weight_sync: 3.0, ..Default::default() };
    let e2e = |s| schedule(steps.clone(), &split(RunMode::AsyncSplit, s, &c)).e2e_time;
    assert_eq!(e2e(2), 24.0);
    assert_eq!(e2e(3), 25.0);
    let free = CostModel { t_weight_sync: 0.0, ..c };
    let e2e = |s| schedule(steps.clone(), &split(RunMode::AsyncSplit, s, &free)).e2e_time;
    assert!(e2e(3) <= e2e(2));
}

#[test]
fn parallel_run_matches_sequential() {
    let steps: Vec<WorkloadStep> = (0..20u64)
        .map(|s| WorkloadStep::new(s, (0..64u64).map(|i| common::rec(s, 100 + i, (i * 131 + s * 17) % 9000)).collect()))
        .collect();
    let cfg = split(RunMode::AsyncSplit, 2, &CostModel::default());
    assert_eq!(
        simulate_run_with(&steps, &cfg, Exec::Sequential).unwrap(),
        simulate_run_with(&steps, &cfg, Exec::Parallel).unwrap()
    );
}

#[test]
fn step_limit_truncates() {
    let steps: Vec<WorkloadStep> = (0..10u64)
        .map(|s| WorkloadStep::new(s, vec![common::rec(s, 10, 100); 4]))
        .collect();
    let cfg = RunConfig { steps: Some(3), ..Default::default() };
    assert_eq!(simulate_run(&steps, &cfg).unwrap().per_step.len(), 3);
}

#[test]
fn sweeps_record_errors_and_continue() {
    let steps: Vec<WorkloadStep> = (0..6u64)
        .map(|s| WorkloadStep::new(s, (0..32u64).map(|i| common::rec(s, 50, 100 + i * 300)).collect()))
        .collect();
    let src = WorkloadSource::Steps(&steps);
    let cfg = split(RunMode::AsyncSplit, 0, &CostModel::default());
    let rows = sweep(&src, &cfg, SweepAxis::Gpus, &[1, 4, 8]).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].error.is_some());
    assert!(rows[1].error.is_none() && rows[2].error.is_none());
    assert!(sweep(&src, &cfg, SweepAxis::Staleness, &[]).is_err());

    let rows = sweep(&src, &cfg, SweepAxis::MaxResponseLen, &[16_000, 8_000, 4_000, 1_000]).unwrap();
    let e2e: Vec<f64> = rows.iter().map(|r| r.e2e_time.unwrap()).collect();
    assert!(e2e.windows(2).all(|w| w[1] <= w[0]), "{e2e:?}");

    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("axis,value,e2e_s,"));
}

#[test]
fn exports_have_expected_shape() {
    let steps: Vec<WorkloadStep> = (0..3u64)
        .map(|s| WorkloadStep::new(s, vec![common::rec(s, 10, 100); 4]))
        .collect();
    let r = simulate_run(&steps, &split(RunMode::AsyncSplit, 1, &CostModel::default())).unwrap();
    let mut buf = Vec::new();
    write_summary_csv(&r, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,rollout_s,inference_s,train_s,tool_s,idle_frac,tgs");
    assert_eq!(text.lines().count(), 4);
    let mut buf = Vec::new();
    write_timeline_csv(&r.timeline, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "pool,stage,step,start,end");
    assert_eq!(text.lines().count(), r.timeline.len() + 1);
}
