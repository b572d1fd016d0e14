// Copyright 2026 The UoT Engine Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Ordering invariants checked against an event log.

use std::collections::{HashMap, HashSet};

use super::events::{EventKind, SchedulerEvent};
use crate::plan::{EdgeKind, Input, OpId, OperatorKind, PlanDag};
use crate::storage::BlockId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.rule, self.detail)
    }
}

fn violation(rule: &'static str, detail: String) -> Violation {
    Violation { rule, detail }
}

/// Producer/consumer pairs connected by a streamable data edge.
fn streamable_pairs(dag: &PlanDag) -> Vec<(OpId, OpId)> {
    dag.nodes()
        .iter()
        .filter_map(|n| match n.input {
            Input::Operator(p) if dag.nodes()[p].out_edge_kind() == EdgeKind::Streamable => Some((p, n.id)),
            _ => None,
        })
        .collect()
}

/// The build a probe waits for, if any.
fn gate_of(dag: &PlanDag, op: OpId) -> Option<OpId> {
    match dag.nodes()[op].kind {
        OperatorKind::ProbeHash { build, .. } => Some(build),
        _ => None,
    }
}

/// Every producer work order finishes before any consumer work order
/// starts, for each streamable edge.
pub fn verify_non_pipelining(events: &[SchedulerEvent], dag: &PlanDag) -> Vec<Violation> {
    let mut last_finish: HashMap<OpId, u64> = HashMap::new();
    let mut first_start: HashMap<OpId, u64> = HashMap::new();
    for e in events {
        match e.kind {
            EventKind::WorkOrderFinished => {
                let v = last_finish.entry(e.op_id).or_insert(0);
                *v = (*v).max(e.timestamp);
            }
            EventKind::WorkOrderStarted => {
                let v = first_start.entry(e.op_id).or_insert(u64::MAX);
                *v = (*v).min(e.timestamp);
            }
            _ => {}
        }
    }
    streamable_pairs(dag)
        .into_iter()
        .filter_map(|(p, c)| match (last_finish.get(&p), first_start.get(&c)) {
            (Some(&f), Some(&s)) if f >= s => Some(violation(
                "non-pipelining",
                format!("producer {p} finished at {f} but consumer {c} started at {s}"),
            )),
            _ => None,
        })
        .collect()
}

/// With a one-block unit of transfer, every block a producer seals is
/// dispatched to its consumer before the producer's next block is seen,
/// unless the consumer is a probe still waiting for its build; such blocks
/// must be dispatched before the next block after the build finishes.
pub fn verify_promptness(events: &[SchedulerEvent], dag: &PlanDag) -> Vec<Violation> {
    let mut out = Vec::new();
    let pairs = streamable_pairs(dag);
    let mut finished: HashSet<OpId> = HashSet::new();
    // awaiting[(producer, consumer)] = sealed blocks not yet dispatched
    let mut awaiting: HashMap<(OpId, OpId), Vec<BlockId>> = HashMap::new();
    let mut producers_of_block: HashMap<BlockId, OpId> = HashMap::new();
    for e in events {
        match e.kind {
            EventKind::OperatorFinished => {
                finished.insert(e.op_id);
            }
            EventKind::BlockFilled | EventKind::BlockFlushed => {
                let Some(b) = e.block_id else { continue };
                producers_of_block.insert(b, e.op_id);
                for &(p, c) in pairs.iter().filter(|(p, _)| *p == e.op_id) {
                    let gate_open = gate_of(dag, c).is_none_or(|g| finished.contains(&g));
                    let list = awaiting.entry((p, c)).or_default();
                    if gate_open && !list.is_empty() {
                        out.push(violation(
                            "promptness",
                            format!(
                                "blocks {list:?} of producer {p} not dispatched to {c} before block {b} at {}",
                                e.timestamp
                            ),
                        ));
                        list.clear();
                    }
                    list.push(b);
                }
            }
            EventKind::WorkOrderDispatched => {
                let Some(b) = e.block_id else { continue };
                if let Some(&p) = producers_of_block.get(&b) {
                    if let Some(list) = awaiting.get_mut(&(p, e.op_id)) {
                        list.retain(|x| *x != b);
                    }
                }
            }
            _ => {}
        }
    }
    for ((p, c), list) in awaiting {
        if !list.is_empty() {
            out.push(violation(
                "promptness",
                format!("blocks {list:?} of producer {p} never dispatched to {c}"),
            ));
        }
    }
    out
}

/// No probe work order starts before its build operator finished.
pub fn verify_build_probe_barrier(events: &[SchedulerEvent], dag: &PlanDag) -> Vec<Violation> {
    let mut finished_at: HashMap<OpId, u64> = HashMap::new();
    let mut out = Vec::new();
    for e in events {
        match e.kind {
            EventKind::OperatorFinished => {
                finished_at.insert(e.op_id, e.timestamp);
            }
            EventKind::WorkOrderStarted => {
                if let Some(g) = gate_of(dag, e.op_id) {
                    if !finished_at.contains_key(&g) {
                        out.push(violation(
                            "build/probe barrier",
                            format!("probe {} started at {} before build {g} finished", e.op_id, e.timestamp),
                        ));
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// At most `threads` work orders run at once.
pub fn verify_worker_conservation(events: &[SchedulerEvent], threads: usize) -> Vec<Violation> {
    let mut running = 0usize;
    let mut out = Vec::new();
    for e in events {
        match e.kind {
            EventKind::WorkOrderStarted => {
                running += 1;
                if running > threads {
                    out.push(violation(
                        "worker conservation",
                        format!("{running} work orders in flight at {} with {threads} workers", e.timestamp),
                    ));
                }
            }
            EventKind::WorkOrderFinished => running = running.saturating_sub(1),
            _ => {}
        }
    }
    out
}

/// A consumer work order is dispatched no earlier than its input block
/// became available.
pub fn verify_monotone_availability(events: &[SchedulerEvent]) -> Vec<Violation> {
    let sealed_at: HashMap<BlockId, u64> = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::BlockFilled | EventKind::BlockFlushed))
        .filter_map(|e| e.block_id.map(|b| (b, e.timestamp)))
        .collect();
    events
        .iter()
        .filter(|e| e.kind == EventKind::WorkOrderDispatched)
        .filter_map(|e| {
            // blocks never sealed in this log are base-table blocks
            let b = e.block_id?;
            let &t = sealed_at.get(&b)?;
            (e.timestamp < t).then(|| {
                violation(
                    "monotone availability",
                    format!("block {b} dispatched at {} before it was sealed at {t}", e.timestamp),
                )
            })
        })
        .collect()
}

/// Timestamps never decrease.
pub fn verify_timestamps(events: &[SchedulerEvent]) -> Vec<Violation> {
    events
        .windows(2)
        .filter(|w| w[1].timestamp < w[0].timestamp)
        .map(|w| {
            violation(
                "timestamp order",
                format!("{} follows {}", w[1].timestamp, w[0].timestamp),
            )
        })
        .collect()
}
