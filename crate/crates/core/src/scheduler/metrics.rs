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

//! Execution metrics derived from the event log and allocation records.

use super::events::{EventKind, SchedulerEvent};
use crate::error::{Error, Result};
use crate::plan::OpId;
use crate::storage::BlockId;

#[derive(Debug, Clone, PartialEq)]
pub struct WorkOrderRecord {
    pub wo_id: u64,
    pub op_id: OpId,
    pub worker_id: usize,
    pub input_block: BlockId,
    pub start_ns: u64,
    pub end_ns: u64,
    pub tuples_in: usize,
    pub tuples_out: usize,
}

impl WorkOrderRecord {
    pub fn duration_ns(&self) -> u64 {
        self.end_ns - self.start_ns
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OperatorStats {
    pub op_id: OpId,
    pub name: String,
    pub kind: &'static str,
    pub work_orders: usize,
    pub tuples_in: usize,
    pub tuples_out: usize,
    /// Output blocks sealed full plus partial blocks flushed at the end.
    pub blocks_produced: usize,
    /// Allocated payload bytes of the produced blocks.
    pub output_bytes: u64,
    /// Bytes actually occupied by produced tuples.
    pub output_used_bytes: u64,
    /// Sealed hash-table bytes, for builds.
    pub hash_table_bytes: Option<u64>,
    pub hash_table_buckets: Option<usize>,
    pub finished_at: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ExecutionMetrics {
    pub threads: usize,
    pub events: Vec<SchedulerEvent>,
    pub work_orders: Vec<WorkOrderRecord>,
    pub operators: Vec<OperatorStats>,
    /// Query start to the sink's completion, in nanoseconds.
    pub query_ns: u64,
    pub peak_intermediate_bytes: u64,
    pub peak_temp_block_bytes: u64,
    pub peak_hash_table_bytes: u64,
    pub result_bytes: u64,
}

/// In-flight work-order count of one operator over time.
#[derive(Debug, Clone, PartialEq)]
pub struct DopTimeline {
    pub op_id: OpId,
    /// `(timestamp, count)` after each change, in time order.
    pub steps: Vec<(u64, usize)>,
    pub peak: usize,
    /// Time-weighted mean over the operator span (0 when it never ran).
    pub mean: f64,
}

/// Span of a set of work-order intervals, as `(first start, last end)`.
pub fn span_of<'a>(records: impl IntoIterator<Item = &'a WorkOrderRecord>) -> Option<(u64, u64)> {
    records.into_iter().fold(None, |acc, r| match acc {
        None => Some((r.start_ns, r.end_ns)),
        Some((s, e)) => Some((s.min(r.start_ns), e.max(r.end_ns))),
    })
}

impl ExecutionMetrics {
    pub fn operator(&self, op: OpId) -> Result<&OperatorStats> {
        self.operators.get(op).ok_or(Error::UnknownOperator(op))
    }

    pub fn work_orders_of(&self, op: OpId) -> impl Iterator<Item = &WorkOrderRecord> {
        self.work_orders.iter().filter(move |w| w.op_id == op)
    }

    /// First work-order start to last work-order finish.
    pub fn operator_span(&self, op: OpId) -> Option<(u64, u64)> {
        span_of(self.work_orders_of(op))
    }

    pub fn operator_span_ns(&self, op: OpId) -> u64 {
        self.operator_span(op).map_or(0, |(s, e)| e - s)
    }

    /// Span covering every work order of the given operators.
    pub fn chain_span_ns(&self, ops: &[OpId]) -> u64 {
        span_of(self.work_orders.iter().filter(|w| ops.contains(&w.op_id))).map_or(0, |(s, e)| e - s)
    }

    pub fn peak_intermediate_bytes(&self) -> u64 {
        self.peak_intermediate_bytes
    }

    pub fn dop_timeline(&self, op: OpId) -> Result<DopTimeline> {
        if op >= self.operators.len() {
            return Err(Error::UnknownOperator(op));
        }
        Ok(dop_timeline_from_events(&self.events, op))
    }
}

/// DOP step function of `op` from `WorkOrderStarted`/`WorkOrderFinished`
/// events.
pub fn dop_timeline_from_events(events: &[SchedulerEvent], op: OpId) -> DopTimeline {
    let mut steps = Vec::new();
    let mut cur = 0usize;
    let mut peak = 0;
    for e in events.iter().filter(|e| e.op_id == op) {
        match e.kind {
            EventKind::WorkOrderStarted => cur += 1,
            EventKind::WorkOrderFinished => cur = cur.saturating_sub(1),
            _ => continue,
        }
        peak = peak.max(cur);
        steps.push((e.timestamp, cur));
    }
    let mean = match (steps.first(), steps.last()) {
        (Some(&(t0, _)), Some(&(t1, _))) if t1 > t0 => {
            let area: f64 = steps
                .windows(2)
                .map(|w| w[0].1 as f64 * (w[1].0 - w[0].0) as f64)
                .sum();
            area / (t1 - t0) as f64
        }
        _ => 0.0,
    };
    DopTimeline {
        op_id: op,
        steps,
        peak,
        mean,
    }
}
