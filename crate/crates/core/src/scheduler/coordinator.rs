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

//! The coordinator: a single thread that owns all scheduling state and
//! hands work orders to `T` worker threads.
//!
//! Workers report sealed output blocks and completed work orders over one
//! channel. The coordinator releases consumer work into its run queue
//! according to the unit-of-transfer policy and assigns queued work orders
//! to idle workers. A worker only receives new work after the coordinator
//! has processed its previous completion, so with one worker the schedule
//! is fully determined by the policy.

use std::collections::{HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::events::{EventKind, EventLog, SchedulerEvent};
use super::metrics::{ExecutionMetrics, OperatorStats, WorkOrderRecord};
use super::policy::{DispatchOrder, ExecConfig, UoTPolicy};
use crate::error::{Error, Result};
use crate::operators::{gen_work_orders, OperatorRuntime, SealedHashTable, WorkOrder, WorkOrderResult};
use crate::plan::{EdgeKind, Input, OpId, OperatorKind, PlanDag};
use crate::storage::{
    Block, BlockId, BlockPool, Catalog, MemoryCategory, MemoryTracker, PoolLogEntry, Schema, Value,
};

/// Pool holder id used when the coordinator itself writes blocks.
const COORDINATOR_HOLDER: u64 = u64::MAX;

/// The sink's blocks plus everything measured while producing them.
#[derive(Debug)]
pub struct QueryOutput {
    pub schema: Arc<Schema>,
    pub blocks: Vec<Arc<Block>>,
    pub metrics: ExecutionMetrics,
    /// Present when `ExecConfig::record_pool_log` is set.
    pub pool_log: Vec<PoolLogEntry>,
}

impl QueryOutput {
    pub fn row_count(&self) -> usize {
        self.blocks.iter().map(|b| b.fill_count()).sum()
    }

    /// Rows in block production order, which varies between runs.
    pub fn rows(&self) -> Vec<Vec<Value>> {
        self.blocks.iter().flat_map(|b| b.tuples().collect::<Vec<_>>()).collect()
    }

    /// Rows in a canonical order, comparable across runs.
    pub fn sorted_rows(&self) -> Vec<Vec<Value>> {
        let mut rows = self.rows();
        rows.sort();
        rows
    }
}

enum Msg {
    Filled {
        op: OpId,
        block: Arc<Block>,
    },
    Done {
        worker: usize,
        op: OpId,
        input: BlockId,
        start_ns: u64,
        end_ns: u64,
        result: Result<WorkOrderResult>,
    },
}

#[derive(Debug, Default)]
struct OpState {
    /// Sealed input blocks not yet turned into work orders.
    pending: VecDeque<Arc<Block>>,
    /// No more input blocks will arrive.
    input_done: bool,
    /// False for probes until their build is sealed.
    gate_open: bool,
    /// Work orders released and not yet finished.
    outstanding: usize,
    finished: bool,
}

struct RunQueue {
    queues: Vec<VecDeque<(u64, WorkOrder)>>,
    running: Vec<usize>,
    caps: Vec<Option<usize>>,
    distance: Vec<usize>,
    order: DispatchOrder,
    rng: Option<ChaCha8Rng>,
    seq: u64,
}

impl RunQueue {
    fn new(dag: &PlanDag, config: &ExecConfig) -> Self {
        let n = dag.len();
        RunQueue {
            queues: (0..n).map(|_| VecDeque::new()).collect(),
            running: vec![0; n],
            caps: (0..n).map(|i| config.dop_caps.get(&i).copied()).collect(),
            distance: dag.distance_to_sink(),
            order: config.order,
            rng: match config.order {
                DispatchOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
                _ => None,
            },
            seq: 0,
        }
    }

    fn push(&mut self, wo: WorkOrder) {
        self.seq += 1;
        self.queues[wo.op_id].push_back((self.seq, wo));
    }

    fn ready(&self, op: usize) -> bool {
        !self.queues[op].is_empty() && self.caps[op].is_none_or(|c| self.running[op] < c)
    }

    fn pick(&mut self) -> Option<WorkOrder> {
        let ready = (0..self.queues.len()).filter(|&o| self.ready(o));
        let (op, idx) = match self.order {
            DispatchOrder::ConsumersFirst => {
                let op = ready.min_by_key(|&o| (self.distance[o], self.queues[o][0].0))?;
                (op, 0)
            }
            DispatchOrder::Fifo => (ready.min_by_key(|&o| self.queues[o][0].0)?, 0),
            DispatchOrder::Shuffled(_) => {
                let ready: Vec<usize> = ready.collect();
                let total: usize = ready.iter().map(|&o| self.queues[o].len()).sum();
                if total == 0 {
                    return None;
                }
                let mut r = self.rng.as_mut().expect("seeded").gen_range(0..total);
                let mut chosen = None;
                for o in ready {
                    if r < self.queues[o].len() {
                        chosen = Some((o, r));
                        break;
                    }
                    r -= self.queues[o].len();
                }
                chosen?
            }
        };
        let (_, wo) = self.queues[op].remove(idx)?;
        self.running[op] += 1;
        Some(wo)
    }

    fn finished(&mut self, op: OpId) {
        self.running[op] -= 1;
    }
}

struct Coordinator<'a> {
    dag: &'a PlanDag,
    config: &'a ExecConfig,
    runtimes: &'a [OperatorRuntime],
    pool: &'a BlockPool,
    memory: &'a MemoryTracker,
    log: &'a EventLog,
    ops: Vec<OpState>,
    queue: RunQueue,
    next_wo: u64,
    /// Payload bytes and remaining consumer count of live temporary blocks.
    block_refs: HashMap<BlockId, (u64, usize)>,
    input_consumers: Vec<Vec<OpId>>,
    probes_of: Vec<Vec<OpId>>,
    tables: Vec<Option<Arc<SealedHashTable>>>,
    probes_left: Vec<usize>,
    stats: Vec<OperatorStats>,
    records: Vec<WorkOrderRecord>,
    result: Vec<Arc<Block>>,
    running: usize,
    finished: usize,
    sink_done_at: u64,
}

impl<'a> Coordinator<'a> {
    fn new(
        dag: &'a PlanDag,
        config: &'a ExecConfig,
        runtimes: &'a [OperatorRuntime],
        pool: &'a BlockPool,
        memory: &'a MemoryTracker,
        log: &'a EventLog,
    ) -> Self {
        let n = dag.len();
        let mut input_consumers = vec![Vec::new(); n];
        let mut probes_of = vec![Vec::new(); n];
        for node in dag.nodes() {
            if let Input::Operator(p) = node.input {
                input_consumers[p].push(node.id);
            }
            if let OperatorKind::ProbeHash { build, .. } = node.kind {
                probes_of[build].push(node.id);
            }
        }
        let probes_left = probes_of.iter().map(Vec::len).collect();
        let stats = dag
            .nodes()
            .iter()
            .map(|n| OperatorStats {
                op_id: n.id,
                name: n.name.clone(),
                kind: n.kind.label(),
                ..Default::default()
            })
            .collect();
        Coordinator {
            dag,
            config,
            runtimes,
            pool,
            memory,
            log,
            ops: (0..n).map(|_| OpState::default()).collect(),
            queue: RunQueue::new(dag, config),
            next_wo: 0,
            block_refs: HashMap::new(),
            input_consumers,
            probes_of,
            tables: vec![None; n],
            probes_left,
            stats,
            records: Vec::new(),
            result: Vec::new(),
            running: 0,
            finished: 0,
            sink_done_at: 0,
        }
    }

    fn start(&mut self, catalog: &Catalog) -> Result<()> {
        for node in self.dag.nodes() {
            let st = &mut self.ops[node.id];
            st.gate_open = !matches!(node.kind, OperatorKind::ProbeHash { .. });
            if let Input::Table(t) = &node.input {
                st.pending.extend(catalog.table(t)?.blocks().iter().cloned());
                st.input_done = true;
            }
        }
        for op in 0..self.dag.len() {
            self.try_release(op)?;
        }
        for op in 0..self.dag.len() {
            self.check_finished(op)?;
        }
        Ok(())
    }

    /// Turns pending input blocks into queued work orders as the policy
    /// allows.
    fn try_release(&mut self, op: OpId) -> Result<()> {
        let node = self.dag.node(op)?;
        let st = &mut self.ops[op];
        if !st.gate_open || st.pending.is_empty() {
            return Ok(());
        }
        let streamable = match node.input {
            Input::Operator(p) => self.dag.nodes()[p].out_edge_kind() == EdgeKind::Streamable,
            Input::Table(_) => false,
        };
        let n = if st.input_done {
            st.pending.len()
        } else {
            match (streamable, self.config.uot) {
                (true, UoTPolicy::Blocks(k)) => st.pending.len() / k * k,
                _ => 0,
            }
        };
        if n == 0 {
            return Ok(());
        }
        let blocks: Vec<Arc<Block>> = st.pending.drain(..n).collect();
        st.outstanding += n;
        let table = match node.kind {
            OperatorKind::ProbeHash { build, .. } => self.tables[build].as_ref(),
            _ => None,
        };
        let now = self.log.now();
        for wo in gen_work_orders(node, blocks, table, &mut self.next_wo, now)? {
            self.log.push(
                SchedulerEvent::new(EventKind::WorkOrderDispatched, op)
                    .wo(wo.wo_id)
                    .block(wo.input.id()),
            );
            self.queue.push(wo);
        }
        Ok(())
    }

    fn on_block(&mut self, op: OpId, block: Arc<Block>, flushed: bool) -> Result<()> {
        let kind = if flushed {
            EventKind::BlockFlushed
        } else {
            EventKind::BlockFilled
        };
        self.log.push(SchedulerEvent::new(kind, op).block(block.id()));
        let s = &mut self.stats[op];
        s.blocks_produced += 1;
        s.output_bytes += block.payload_bytes() as u64;
        s.output_used_bytes += block.used_bytes() as u64;
        if op == self.dag.sink() {
            self.result.push(block);
            return Ok(());
        }
        let consumers = self.input_consumers[op].clone();
        self.block_refs
            .insert(block.id(), (block.payload_bytes() as u64, consumers.len()));
        for c in consumers {
            self.ops[c].pending.push_back(block.clone());
            self.try_release(c)?;
        }
        Ok(())
    }

    fn release_input(&mut self, block: BlockId) {
        if let Some(entry) = self.block_refs.get_mut(&block) {
            entry.1 -= 1;
            if entry.1 == 0 {
                let bytes = entry.0;
                self.block_refs.remove(&block);
                self.memory.free(MemoryCategory::TempBlocks, bytes);
            }
        }
    }

    fn check_finished(&mut self, op: OpId) -> Result<()> {
        let mut work = vec![op];
        while let Some(o) = work.pop() {
            let st = &self.ops[o];
            if st.finished || !st.input_done || !st.gate_open || !st.pending.is_empty() || st.outstanding > 0 {
                continue;
            }
            self.finish_operator(o, &mut work)?;
        }
        Ok(())
    }

    fn finish_operator(&mut self, op: OpId, work: &mut Vec<OpId>) -> Result<()> {
        let runtime = &self.runtimes[op];
        if let OperatorRuntime::Aggregate { .. } = runtime {
            let mut sealed = Vec::new();
            let rows = runtime.finalize_aggregate(self.pool, COORDINATOR_HOLDER, &mut |b| sealed.push(b))?;
            self.stats[op].tuples_out = rows;
            for b in sealed {
                self.on_block(op, b, false)?;
            }
        }
        self.ops[op].finished = true;
        self.finished += 1;
        let ts = self.log.push(SchedulerEvent::new(EventKind::OperatorFinished, op));
        self.stats[op].finished_at = ts;
        if op == self.dag.sink() {
            self.sink_done_at = ts;
        }

        if let Some(key) = runtime.output_key() {
            for partial in self.pool.drain_destination(op as u64) {
                if partial.is_empty() {
                    self.memory.free(key.category, partial.payload_bytes() as u64);
                } else {
                    self.on_block(op, Arc::new(partial), true)?;
                }
            }
        }

        if let OperatorRuntime::Build { .. } = runtime {
            let table = runtime.seal_hash_table()?;
            self.stats[op].hash_table_bytes = Some(table.memory_bytes() as u64);
            self.stats[op].hash_table_buckets = Some(table.bucket_capacity());
            self.stats[op].tuples_out = table.entry_count();
            self.tables[op] = Some(table);
            for p in self.probes_of[op].clone() {
                self.ops[p].gate_open = true;
                self.try_release(p)?;
                work.push(p);
            }
        }

        for c in self.input_consumers[op].clone() {
            self.ops[c].input_done = true;
            self.try_release(c)?;
            work.push(c);
        }

        if let OperatorKind::ProbeHash { build, .. } = self.dag.node(op)?.kind {
            self.probes_left[build] -= 1;
            if self.probes_left[build] == 0 {
                if let Some(t) = self.tables[build].take() {
                    self.memory.free(MemoryCategory::HashTables, t.memory_bytes() as u64);
                }
            }
        }
        Ok(())
    }

    fn on_done(
        &mut self,
        op: OpId,
        input: BlockId,
        worker: usize,
        start_ns: u64,
        end_ns: u64,
        result: WorkOrderResult,
    ) -> Result<()> {
        self.queue.finished(op);
        self.release_input(input);
        let s = &mut self.stats[op];
        s.work_orders += 1;
        s.tuples_in += result.tuples_in;
        if !matches!(self.runtimes[op], OperatorRuntime::Build { .. } | OperatorRuntime::Aggregate { .. }) {
            s.tuples_out += result.tuples_out;
        }
        self.records.push(WorkOrderRecord {
            wo_id: result.wo_id,
            op_id: op,
            worker_id: worker,
            input_block: input,
            start_ns,
            end_ns,
            tuples_in: result.tuples_in,
            tuples_out: result.tuples_out,
        });
        self.ops[op].outstanding -= 1;
        self.check_finished(op)
    }

    fn handle(&mut self, msg: Msg, idle: &mut VecDeque<usize>) -> Result<()> {
        match msg {
            Msg::Filled { op, block } => self.on_block(op, block, false),
            Msg::Done {
                worker,
                op,
                input,
                start_ns,
                end_ns,
                result,
            } => {
                self.running -= 1;
                idle.push_back(worker);
                self.on_done(op, input, worker, start_ns, end_ns, result?)
            }
        }
    }

    fn run(&mut self, catalog: &Catalog, assign: &[Sender<WorkOrder>], rx: &Receiver<Msg>) -> Result<()> {
        self.start(catalog)?;
        let mut idle: VecDeque<usize> = (0..assign.len()).collect();
        loop {
            while let Some(&w) = idle.front() {
                let Some(wo) = self.queue.pick() else { break };
                idle.pop_front();
                self.running += 1;
                assign[w]
                    .send(wo)
                    .map_err(|_| Error::WorkerPanic(format!("worker {w} exited early")))?;
            }
            if self.finished == self.dag.len() && self.running == 0 {
                return Ok(());
            }
            if self.running == 0 {
                return Err(Error::InvalidPlan(format!(
                    "scheduler stalled with {} of {} operators finished",
                    self.finished,
                    self.dag.len()
                )));
            }
            let msg = rx
                .recv()
                .map_err(|_| Error::WorkerPanic("all workers exited".into()))?;
            self.handle(msg, &mut idle)?;
            while let Ok(msg) = rx.try_recv() {
                self.handle(msg, &mut idle)?;
            }
        }
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

fn worker_loop(
    worker: usize,
    rx: Receiver<WorkOrder>,
    tx: Sender<Msg>,
    runtimes: &[OperatorRuntime],
    pool: &BlockPool,
    log: &EventLog,
) {
    while let Ok(wo) = rx.recv() {
        let op = wo.op_id;
        let input = wo.input.id();
        let start_ns = log.push(
            SchedulerEvent::new(EventKind::WorkOrderStarted, op)
                .wo(wo.wo_id)
                .block(input)
                .worker(worker),
        );
        let mut on_sealed = |block: Arc<Block>| {
            let _ = tx.send(Msg::Filled { op, block });
        };
        let result = catch_unwind(AssertUnwindSafe(|| runtimes[op].execute(&wo, pool, &mut on_sealed)))
            .unwrap_or_else(|p| Err(Error::WorkerPanic(panic_message(p))));
        let end_ns = log.push(
            SchedulerEvent::new(EventKind::WorkOrderFinished, op)
                .wo(wo.wo_id)
                .block(input)
                .worker(worker),
        );
        drop(wo);
        let done = Msg::Done {
            worker,
            op,
            input,
            start_ns,
            end_ns,
            result,
        };
        if tx.send(done).is_err() {
            return;
        }
    }
}

/// Executes `dag` over `catalog` with `config.threads` workers.
pub fn run_query(catalog: &Catalog, dag: &PlanDag, config: &ExecConfig) -> Result<QueryOutput> {
    config.validate()?;
    let log = EventLog::new(Instant::now());
    let memory = Arc::new(MemoryTracker::new(config.memory_cap));
    let pool = if config.record_pool_log {
        BlockPool::new(memory.clone()).with_log()
    } else {
        BlockPool::new(memory.clone())
    };
    let runtimes = dag
        .nodes()
        .iter()
        .map(|n| OperatorRuntime::new(dag, n, config.block_size, &memory))
        .collect::<Result<Vec<_>>>()?;

    let (msg_tx, msg_rx) = unbounded::<Msg>();
    let outcome = std::thread::scope(|s| {
        let mut assign = Vec::with_capacity(config.threads);
        for w in 0..config.threads {
            let (tx, rx) = bounded::<WorkOrder>(1);
            assign.push(tx);
            let msg_tx = msg_tx.clone();
            let (runtimes, pool, log) = (&runtimes, &pool, &log);
            s.spawn(move || worker_loop(w, rx, msg_tx, runtimes, pool, log));
        }
        let mut coord = Coordinator::new(dag, config, &runtimes, &pool, &memory, &log);
        let res = coord.run(catalog, &assign, &msg_rx);
        drop(assign);
        res.map(|()| (coord.stats, coord.records, coord.result, coord.sink_done_at))
    });
    drop(msg_tx);
    let (stats, records, blocks, sink_done_at) = outcome?;
    drop(runtimes);
    let pool_log = pool.log();
    let metrics = ExecutionMetrics {
        threads: config.threads,
        events: log.into_events(),
        work_orders: records,
        operators: stats,
        query_ns: sink_done_at,
        peak_intermediate_bytes: memory.peak_intermediate(),
        peak_temp_block_bytes: memory.peak_temp_blocks(),
        peak_hash_table_bytes: memory.peak_hash_tables(),
        result_bytes: memory.current(MemoryCategory::Result),
    };
    Ok(QueryOutput {
        schema: dag.node(dag.sink())?.output_schema.clone(),
        blocks,
        metrics,
        pool_log,
    })
}
