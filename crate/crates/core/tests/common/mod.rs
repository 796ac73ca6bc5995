//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the code under test except for plain data types.

#![allow(dead_code)]

use rlvr_core::trace::{TaskType, TraceRecord};

/// k-th smallest element (0-based) by counting, no sorting.
pub fn kth_smallest(values: &[u64], k: usize) -> u64 {
    for &v in values {
        let below = values.iter().filter(|&&x| x < v).count();
        let at_most = values.iter().filter(|&&x| x <= v).count();
        if below <= k && k < at_most {
            return v;
        }
    }
    unreachable!("k out of range")
}

/// Percentile at position `p·(n−1)` interpolated between order statistics.
pub fn percentile(values: &[u64], p: f64) -> f64 {
    let n = values.len();
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let a = kth_smallest(values, lo) as f64;
    if lo + 1 >= n {
        return a;
    }
    let b = kth_smallest(values, lo + 1) as f64;
    a + (pos - lo as f64) * (b - a)
}

/// `(value, count(x <= value) / n)` for every distinct value, ascending.
pub fn cdf(values: &[u64]) -> Vec<(f64, f64)> {
    let mut distinct: Vec<u64> = Vec::new();
    for &v in values {
        if !distinct.contains(&v) {
            distinct.push(v);
        }
    }
    distinct.sort_unstable();
    distinct
        .into_iter()
        .map(|v| {
            let c = values.iter().filter(|&&x| x <= v).count();
            (v as f64, c as f64 / values.len() as f64)
        })
        .collect()
}

/// Pearson correlation from exact integer moment sums.
pub fn pearson(xs: &[u64], ys: &[u64]) -> Option<f64> {
    let n = xs.len() as i128;
    let sx: i128 = xs.iter().map(|&x| x as i128).sum();
    let sy: i128 = ys.iter().map(|&y| y as i128).sum();
    let sxx: i128 = xs.iter().map(|&x| (x as i128) * (x as i128)).sum();
    let syy: i128 = ys.iter().map(|&y| (y as i128) * (y as i128)).sum();
    let sxy: i128 = xs.iter().zip(ys).map(|(&x, &y)| (x as i128) * (y as i128)).sum();
    let cov = n * sxy - sx * sy;
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx == 0 || vy == 0 {
        return None;
    }
    Some(cov as f64 / ((vx as f64).sqrt() * (vy as f64).sqrt()))
}

/// Bin counts with the bin index found by exact integer arithmetic.
pub fn bin_counts(values: &[u64], bins: usize, lo: u64, hi: u64) -> Vec<u64> {
    let mut c = vec![0u64; bins];
    for &v in values {
        let idx = if hi > lo {
            (((v - lo) as u128 * bins as u128) / (hi - lo) as u128) as usize
        } else {
            0
        };
        c[idx.min(bins - 1)] += 1;
    }
    c
}

fn entropy2(p: &[f64]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.log2()).sum::<f64>()
}

/// JSD via the entropy identity `H(M) − (H(P) + H(Q)) / 2`.
pub fn jsd_counts(a: &[u64], b: &[u64]) -> f64 {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let p: Vec<f64> = a.iter().map(|&x| x as f64 / na as f64).collect();
    let q: Vec<f64> = b.iter().map(|&x| x as f64 / nb as f64).collect();
    let m: Vec<f64> = p.iter().zip(&q).map(|(x, y)| 0.5 * x + 0.5 * y).collect();
    entropy2(&m) - 0.5 * (entropy2(&p) + entropy2(&q))
}

/// Optimal makespan by trying every assignment (`k^n` of them).
pub fn brute_force_makespan(weights: &[u64], k: usize) -> u64 {
    let n = weights.len();
    let mut best = u64::MAX;
    let mut ranks = vec![0usize; n];
    loop {
        let mut loads = vec![0u64; k];
        for (i, &r) in ranks.iter().enumerate() {
            loads[r] += weights[i];
        }
        best = best.min(loads.into_iter().max().unwrap_or(0));
        let mut i = 0;
        while i < n {
            ranks[i] += 1;
            if ranks[i] < k {
                break;
            }
            ranks[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

/// Reachable rank-load vectors, kept sorted descending so symmetric
/// assignments collapse to one state.
#[derive(Clone, Debug)]
pub struct LoadStates {
    k: usize,
    states: Vec<Vec<u64>>,
}

impl LoadStates {
    pub fn new(k: usize) -> Self {
        LoadStates {
            k,
            states: vec![vec![0; k]],
        }
    }

    pub fn push(&self, w: u64) -> Self {
        let mut next = Vec::with_capacity(self.states.len() * self.k);
        for s in &self.states {
            for r in 0..self.k {
                if r > 0 && s[r] == s[r - 1] {
                    continue;
                }
                let mut t = s.clone();
                t[r] += w;
                t.sort_unstable_by(|a, b| b.cmp(a));
                next.push(t);
            }
        }
        next.sort_unstable();
        next.dedup();
        LoadStates {
            k: self.k,
            states: next,
        }
    }

    pub fn optimum(&self) -> u64 {
        self.states.iter().map(|s| s[0]).min().unwrap_or(0)
    }
}

pub fn dp_makespan(weights: &[u64], k: usize) -> u64 {
    weights
        .iter()
        .fold(LoadStates::new(k), |s, &w| s.push(w))
        .optimum()
}

/// Calls `f(multiset, optimum)` for every non-increasing sequence of up to
/// `max_n` weights drawn from `1..=max_w`, sharing DP state along prefixes.
pub fn for_each_multiset(max_n: usize, max_w: u64, k: usize, f: &mut dyn FnMut(&[u64], u64)) {
    fn rec(
        prefix: &mut Vec<u64>,
        states: &LoadStates,
        max_n: usize,
        cap: u64,
        f: &mut dyn FnMut(&[u64], u64),
    ) {
        if !prefix.is_empty() {
            f(prefix, states.optimum());
        }
        if prefix.len() == max_n {
            return;
        }
        for w in 1..=cap {
            let next = states.push(w);
            prefix.push(w);
            rec(prefix, &next, max_n, w, f);
            prefix.pop();
        }
    }
    rec(&mut Vec::new(), &LoadStates::new(k), max_n, max_w, f);
}

pub fn rec(step: u64, input: u64, output: u64) -> TraceRecord {
    TraceRecord::new(step, input, output, TaskType::Mathematics)
}

/// Outcome of the one-token-per-iteration KV reference simulation.
#[derive(Debug, PartialEq, Eq)]
pub struct KvTicks {
    pub iterations: u64,
    pub preemptions: u64,
    pub recomputed: u64,
}

/// Naive KV-capacity simulation that advances exactly one decode iteration
/// at a time. `None` when some request can never fit.
pub fn kv_ticks(reqs: &[(u64, u64)], cap: u64, evict_newest: bool) -> Option<KvTicks> {
    let mut waiting: std::collections::VecDeque<usize> = (0..reqs.len()).collect();
    let mut active: Vec<(usize, u64)> = Vec::new();
    let mut held = 0u64;
    let mut out = KvTicks { iterations: 0, preemptions: 0, recomputed: 0 };
    let mut may_admit = true;
    loop {
        if may_admit {
            while let Some(&i) = waiting.front() {
                if held + reqs[i].0 + active.len() as u64 + 1 > cap {
                    break;
                }
                waiting.pop_front();
                held += reqs[i].0;
                active.push((i, 0));
            }
            may_admit = false;
        }
        let mut finished = false;
        let mut k = 0;
        while k < active.len() {
            let (i, g) = active[k];
            if g >= reqs[i].1 {
                held -= reqs[i].0 + g;
                active.remove(k);
                finished = true;
            } else {
                k += 1;
            }
        }
        if finished {
            may_admit = true;
            continue;
        }
        if active.is_empty() {
            if waiting.is_empty() {
                return Some(out);
            }
            return None;
        }
        if cap - held < active.len() as u64 {
            if active.len() == 1 {
                return None;
            }
            let (i, g) = if evict_newest { active.pop().unwrap() } else { active.remove(0) };
            held -= reqs[i].0 + g;
            out.preemptions += 1;
            out.recomputed += g;
            waiting.push_front(i);
            continue;
        }
        for a in active.iter_mut() {
            a.1 += 1;
        }
        held += active.len() as u64;
        out.iterations += 1;
    }
}
