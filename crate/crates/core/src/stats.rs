//! Characterization statistics over traces.
//!
//! Conventions: percentiles interpolate linearly between closest ranks
//! (position `p·(n−1)`, zero-indexed); standard deviations are population
//! (divide by `n`); Jensen–Shannon divergence uses base-2 logarithms with
//! `0·log 0 = 0`, so step similarity `1 − JSD` lies in `[0, 1]`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::trace::{group_by_step, Trace, TraceRecord, WorkloadStep};

pub const DEFAULT_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthKind {
    Input,
    Output,
    Turns,
    ToolLatency,
}

impl LengthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LengthKind::Input => "input",
            LengthKind::Output => "output",
            LengthKind::Turns => "turns",
            LengthKind::ToolLatency => "tool_latency",
        }
    }

    /// Values this record contributes to a distribution of this kind.
    fn extract(self, r: &TraceRecord, out: &mut Vec<f64>) {
        match self {
            LengthKind::Input => out.push(r.input_len as f64),
            LengthKind::Output => out.push(r.output_len as f64),
            LengthKind::Turns => {
                if let Some(t) = r.turn_count {
                    out.push(t as f64)
                }
            }
            LengthKind::ToolLatency => {
                if let Some(l) = &r.tool_latencies_ms {
                    out.extend_from_slice(l)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthDistribution {
    pub kind: LengthKind,
    pub values: Vec<f64>,
}

impl LengthDistribution {
    pub fn new(kind: LengthKind, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        LengthDistribution { kind, values }
    }

    /// Collects one kind of length from records. Filtered samples are
    /// skipped unless `include_filtered` is set.
    pub fn from_records<'a, I>(kind: LengthKind, records: I, include_filtered: bool) -> Self
    where
        I: IntoIterator<Item = &'a TraceRecord>,
    {
        let mut values = Vec::new();
        for r in records {
            if include_filtered || !r.filtered {
                kind.extract(r, &mut values);
            }
        }
        LengthDistribution { kind, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

/// Linear-interpolation percentile of already sorted data, `p` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let p = p.clamp(0.0, 1.0);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    let frac = pos - lo as f64;
    (a + frac * (b - a)).clamp(a, b)
}

pub fn percentile(dist: &LengthDistribution, p: f64) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    Ok(percentile_sorted(&dist.sorted(), p))
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn summary(dist: &LengthDistribution) -> Result<SummaryStats> {
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let v = dist.sorted();
    let (mean, std) = mean_std(&v);
    Ok(SummaryStats {
        count: v.len(),
        mean,
        std,
        min: v[0],
        p50: percentile_sorted(&v, 0.50),
        p90: percentile_sorted(&v, 0.90),
        p95: percentile_sorted(&v, 0.95),
        p99: percentile_sorted(&v, 0.99),
        max: v[v.len() - 1],
    })
}

/// Step function of an empirical distribution: one point per distinct value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalCdf {
    pub count: usize,
    pub points: Vec<(f64, f64)>,
}

impl EmpiricalCdf {
    /// Fraction of samples `<= x`.
    pub fn fraction_at(&self, x: f64) -> f64 {
        let idx = self.points.partition_point(|(v, _)| *v <= x);
        if idx == 0 {
            0.0
        } else {
            self.points[idx - 1].1
        }
    }

    /// Number of samples `<= x`, recovered from the stored fractions.
    pub fn rank_of(&self, x: f64) -> usize {
        (self.fraction_at(x) * self.count as f64).round() as usize
    }

    /// Smallest value whose cumulative fraction reaches `q`.
    pub fn inverse(&self, q: f64) -> f64 {
        let idx = self
            .points
            .partition_point(|(_, f)| *f < q)
            .min(self.points.len() - 1);
        self.points[idx].0
    }
}

pub fn empirical_cdf(dist: &LengthDistribution) -> Result<EmpiricalCdf> {
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let v = dist.sorted();
    let n = v.len();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        if i + 1 == n || v[i + 1] != *x {
            points.push((*x, (i + 1) as f64 / n as f64));
        }
    }
    Ok(EmpiricalCdf { count: n, points })
}

/// Normalized equal-width histogram of `values` over `[lo, hi]`.
/// A degenerate range puts everything in the first bin.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    assert!(bins > 0);
    let mut h = vec![0.0; bins];
    if values.is_empty() {
        return h;
    }
    let width = hi - lo;
    for &v in values {
        let idx = if width > 0.0 {
            ((v - lo) * bins as f64 / width).floor() as isize
        } else {
            0
        };
        h[idx.clamp(0, bins as isize - 1) as usize] += 1.0;
    }
    let n = values.len() as f64;
    h.iter_mut().for_each(|c| *c /= n);
    h
}

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, mi)| pi * (pi / mi).log2())
        .sum()
}

/// Base-2 Jensen–Shannon divergence of two probability vectors.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "histograms must share bins");
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
    (0.5 * kl_to_mixture(p, &m) + 0.5 * kl_to_mixture(q, &m)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSimilarityMatrix {
    pub kind: LengthKind,
    pub bins: usize,
    pub steps: Vec<u64>,
    pub sim: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SimilarityOptions {
    pub bins: usize,
    pub include_filtered: bool,
    pub exec: Exec,
}

impl Default for SimilarityOptions {
    fn default() -> Self {
        SimilarityOptions {
            bins: DEFAULT_BINS,
            include_filtered: true,
            exec: Exec::default(),
        }
    }
}

/// Pairwise `1 − JSD` between per-step histograms sharing global bins.
pub fn step_similarity(
    trace: &Trace,
    kind: LengthKind,
    opts: SimilarityOptions,
) -> Result<StepSimilarityMatrix> {
    if opts.bins == 0 {
        return Err(Error::invalid("bins must be positive"));
    }
    let mut per_step: Vec<(u64, Vec<f64>)> = Vec::new();
    for ws in group_by_step(trace) {
        let d = LengthDistribution::from_records(kind, &ws.requests, opts.include_filtered);
        if d.is_empty() {
            log::warn!("step {} has no {} values; skipped", ws.step, kind.as_str());
            continue;
        }
        per_step.push((ws.step, d.values));
    }
    let (lo, hi) = per_step
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
    let hists: Vec<Vec<f64>> = par::map(opts.exec, &per_step, |(_, v)| {
        histogram(v, opts.bins, lo, hi)
    });
    let n = hists.len();
    let rows: Vec<Vec<f64>> = par::map_range(opts.exec, n, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    1.0
                } else if i < j {
                    1.0 - js_divergence(&hists[i], &hists[j])
                } else {
                    f64::NAN
                }
            })
            .collect()
    });
    let mut sim = rows;
    for i in 1..n {
        let (above, rest) = sim.split_at_mut(i);
        for (j, row) in above.iter().enumerate() {
            rest[0][j] = row[i];
        }
    }
    Ok(StepSimilarityMatrix {
        kind,
        bins: opts.bins,
        steps: per_step.iter().map(|(s, _)| *s).collect(),
        sim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptGroupStats {
    pub prompt_id: String,
    pub sample_lengths: Vec<u64>,
    pub mean: f64,
    pub std: f64,
    /// `std / mean`; absent when the mean is zero.
    pub coefficient_of_variation: Option<f64>,
    /// Fewer than two surviving samples.
    pub degenerate: bool,
}

/// Output-length dispersion within each prompt group of one step.
/// Filtered samples are excluded; groups left empty are dropped.
pub fn prompt_group_stats(step: &WorkloadStep) -> Result<Vec<PromptGroupStats>> {
    if !step.requests.is_empty() && step.requests.iter().all(|r| r.prompt_id.is_none()) {
        return Err(Error::NoPromptGrouping);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<u64>> = HashMap::new();
    for r in &step.requests {
        let Some(pid) = r.prompt_id.as_deref() else {
            continue;
        };
        let entry = groups.entry(pid).or_insert_with(|| {
            order.push(pid);
            Vec::new()
        });
        if !r.filtered {
            entry.push(r.output_len);
        }
    }
    Ok(order
        .into_iter()
        .filter_map(|pid| {
            let lens = groups.remove(pid)?;
            if lens.is_empty() {
                return None;
            }
            let vals: Vec<f64> = lens.iter().map(|&x| x as f64).collect();
            let degenerate = vals.len() < 2;
            let (mean, std) = if degenerate {
                (vals[0], 0.0)
            } else {
                mean_std(&vals)
            };
            Some(PromptGroupStats {
                prompt_id: pid.to_string(),
                sample_lengths: lens,
                mean,
                std,
                coefficient_of_variation: (mean > 0.0).then(|| std / mean),
                degenerate,
            })
        })
        .collect())
}

/// Coefficient of variation of the group means.
pub fn between_prompt_cv(groups: &[PromptGroupStats]) -> Option<f64> {
    if groups.is_empty() {
        return None;
    }
    let means: Vec<f64> = groups.iter().map(|g| g.mean).collect();
    let (m, s) = mean_std(&means);
    (m > 0.0).then(|| s / m)
}

/// Median within-group CV over non-degenerate groups.
pub fn median_within_prompt_cv(groups: &[PromptGroupStats]) -> Option<f64> {
    let mut cvs: Vec<f64> = groups
        .iter()
        .filter(|g| !g.degenerate)
        .filter_map(|g| g.coefficient_of_variation)
        .collect();
    if cvs.is_empty() {
        return None;
    }
    cvs.sort_by(f64::total_cmp);
    Some(percentile_sorted(&cvs, 0.5))
}

/// Per-step summaries in ascending step order. Steps without values of the
/// requested kind are left out.
pub fn temporal_trend(
    trace: &Trace,
    kind: LengthKind,
    include_filtered: bool,
    exec: Exec,
) -> Vec<(u64, SummaryStats)> {
    let steps = group_by_step(trace);
    par::map(exec, &steps, |ws| {
        let d = LengthDistribution::from_records(kind, &ws.requests, include_filtered);
        summary(&d).ok().map(|s| (ws.step, s))
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Pearson correlation of paired samples; `None` with fewer than two points
/// or zero variance in either coordinate.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Input/output length correlation. With `log_scale` the lengths are
/// transformed by `ln(1 + x)` first.
pub fn joint_correlation<'a, I>(records: I, log_scale: bool) -> Option<f64>
where
    I: IntoIterator<Item = &'a TraceRecord>,
{
    let f = |v: u64| {
        if log_scale {
            (v as f64).ln_1p()
        } else {
            v as f64
        }
    };
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .into_iter()
        .map(|r| (f(r.input_len), f(r.output_len)))
        .unzip();
    pearson(&xs, &ys)
}

/// Fraction of values inside `[lo, hi]`.
pub fn share_within(dist: &LengthDistribution, lo: f64, hi: f64) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let hits = dist.values.iter().filter(|v| **v >= lo && **v <= hi).count();
    Ok(hits as f64 / dist.len() as f64)
}
