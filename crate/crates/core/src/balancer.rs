//! Request-to-rank assignment policies.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Arrival order, dealt cyclically over ranks.
    FcfsRoundRobin,
    /// Longest weight first onto the least-loaded rank.
    LptGreedy,
    /// LPT over whole prompt groups; a group never spans ranks.
    PromptGroupLpt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    OutputTokens,
    TotalTokens,
}

impl Weight {
    pub fn of(self, r: &TraceRecord) -> u64 {
        match self {
            Weight::OutputTokens => r.output_len,
            Weight::TotalTokens => r.total_len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    /// Rank of each request, indexed like the input.
    pub rank_of: Vec<usize>,
    pub rank_loads: Vec<u64>,
    pub makespan_tokens: u64,
}

impl Assignment {
    fn from_ranks(rank_of: Vec<usize>, weights: &[u64], k: usize) -> Self {
        let mut rank_loads = vec![0u64; k];
        for (i, &r) in rank_of.iter().enumerate() {
            rank_loads[r] += weights[i];
        }
        let makespan_tokens = rank_loads.iter().copied().max().unwrap_or(0);
        Assignment {
            rank_of,
            rank_loads,
            makespan_tokens,
        }
    }

    pub fn ranks(&self) -> usize {
        self.rank_loads.len()
    }

    /// Request indices grouped by rank, each in input order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.ranks()];
        for (i, &r) in self.rank_of.iter().enumerate() {
            m[r].push(i);
        }
        m
    }
}

/// Classical LPT: indices sorted by weight descending (stable, so ties keep
/// input order), each placed on the least-loaded rank, ties to the lowest id.
pub fn lpt(weights: &[u64], k: usize) -> Vec<usize> {
    assert!(k >= 1);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by_key(|&i| Reverse(weights[i]));
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = (0..k).map(|r| Reverse((0, r))).collect();
    let mut rank_of = vec![0; weights.len()];
    for i in order {
        let Reverse((load, r)) = heap.pop().expect("k >= 1");
        rank_of[i] = r;
        heap.push(Reverse((load + weights[i], r)));
    }
    rank_of
}

/// Assigns a slice of requests to `k` ranks.
pub fn assign_records(
    requests: &[TraceRecord],
    k: usize,
    policy: Policy,
    weight: Weight,
) -> Result<Assignment> {
    let refs: Vec<&TraceRecord> = requests.iter().collect();
    assign_refs(&refs, k, policy, weight)
}

pub fn assign_refs(
    requests: &[&TraceRecord],
    k: usize,
    policy: Policy,
    weight: Weight,
) -> Result<Assignment> {
    if k == 0 {
        return Err(Error::invalid("rank count must be at least 1"));
    }
    let weights: Vec<u64> = requests.iter().map(|r| weight.of(r)).collect();
    let rank_of = match policy {
        Policy::FcfsRoundRobin => (0..requests.len()).map(|i| i % k).collect(),
        Policy::LptGreedy => lpt(&weights, k),
        Policy::PromptGroupLpt => {
            // requests without a prompt id form their own unit
            let mut unit_of = Vec::with_capacity(requests.len());
            let mut units: HashMap<&str, usize> = HashMap::new();
            let mut unit_weights: Vec<u64> = Vec::new();
            for (i, r) in requests.iter().enumerate() {
                let u = match r.prompt_id.as_deref() {
                    Some(p) => *units.entry(p).or_insert_with(|| {
                        unit_weights.push(0);
                        unit_weights.len() - 1
                    }),
                    None => {
                        unit_weights.push(0);
                        unit_weights.len() - 1
                    }
                };
                unit_weights[u] += weights[i];
                unit_of.push(u);
            }
            if k > unit_weights.len() {
                return Err(Error::invalid(format!(
                    "{k} ranks exceed the {} prompt groups available",
                    unit_weights.len()
                )));
            }
            let unit_rank = lpt(&unit_weights, k);
            unit_of.iter().map(|&u| unit_rank[u]).collect()
        }
    };
    Ok(Assignment::from_ranks(rank_of, &weights, k))
}

/// Makespan over mean rank load; 1 when there is no load at all.
pub fn imbalance_ratio(a: &Assignment) -> f64 {
    let total: u64 = a.rank_loads.iter().sum();
    if total == 0 {
        return 1.0;
    }
    let mean = total as f64 / a.ranks() as f64;
    a.makespan_tokens as f64 / mean
}
