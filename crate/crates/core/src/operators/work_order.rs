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

//! Work orders: one operator applied to one input block.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::aggregate::AggregateState;
use super::hash::mix64;
use super::hash_table::{gather, EntryLayout, HashTableBuilder, SealedHashTable};
use crate::error::{Error, Result};
use crate::plan::{CompiledProjection, OpId, OperatorKind, OperatorNode, PlanDag, Predicate};
use crate::storage::{
    read_i64, Block, BlockId, BlockPool, Fields, Layout, MemoryCategory, MemoryTracker, PoolKey, Schema, TupleRef,
    Value,
};

pub type WorkOrderId = u64;

#[derive(Debug, Clone)]
pub struct WorkOrder {
    pub wo_id: WorkOrderId,
    pub op_id: OpId,
    pub kind: &'static str,
    pub input: Arc<Block>,
    /// Set for probe work orders only.
    pub hash_table: Option<Arc<SealedHashTable>>,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkOrderResult {
    pub wo_id: WorkOrderId,
    pub op_id: OpId,
    /// Blocks sealed because they filled up during this work order.
    pub output_blocks: Vec<BlockId>,
    pub tuples_in: usize,
    pub tuples_out: usize,
    pub wall_time: Duration,
}

/// One work order per block, in arrival order. Probes require the sealed
/// hash table of their build.
pub fn gen_work_orders(
    node: &OperatorNode,
    blocks: impl IntoIterator<Item = Arc<Block>>,
    hash_table: Option<&Arc<SealedHashTable>>,
    next_id: &mut WorkOrderId,
    now: u64,
) -> Result<Vec<WorkOrder>> {
    let table = match node.kind {
        OperatorKind::ProbeHash { .. } => Some(hash_table.ok_or(Error::ProbeBeforeBuildSealed(node.id))?.clone()),
        _ => None,
    };
    Ok(blocks
        .into_iter()
        .map(|input| {
            let wo_id = *next_id;
            *next_id += 1;
            WorkOrder {
                wo_id,
                op_id: node.id,
                kind: node.kind.label(),
                input,
                hash_table: table.clone(),
                created_at: now,
            }
        })
        .collect())
}

/// Appends tuples to pooled blocks of one destination, sealing each block
/// the moment it fills.
pub struct OutputWriter<'a> {
    pool: &'a BlockPool,
    key: &'a PoolKey,
    holder: u64,
    current: Option<Block>,
    sealed: Vec<BlockId>,
    on_sealed: &'a mut dyn FnMut(Arc<Block>),
}

impl<'a> OutputWriter<'a> {
    pub fn new(pool: &'a BlockPool, key: &'a PoolKey, holder: u64, on_sealed: &'a mut dyn FnMut(Arc<Block>)) -> Self {
        OutputWriter {
            pool,
            key,
            holder,
            current: None,
            sealed: Vec::new(),
            on_sealed,
        }
    }

    #[inline]
    pub fn emit(&mut self, write: impl FnOnce(&mut crate::storage::TupleSlot<'_>)) -> Result<()> {
        let block = match &mut self.current {
            Some(b) => b,
            None => self.current.insert(self.pool.checkout_block(self.key, self.holder)?),
        };
        let mut slot = block.append().expect("current output block has room");
        write(&mut slot);
        if block.is_full() {
            let full = self.current.take().expect("just used");
            if let Some(sealed) = self.pool.return_block(full, self.holder)? {
                self.sealed.push(sealed.id());
                (self.on_sealed)(sealed);
            }
        }
        Ok(())
    }

    /// Returns any partial block to the pool.
    pub fn finish(mut self) -> Result<Vec<BlockId>> {
        if let Some(b) = self.current.take() {
            if let Some(sealed) = self.pool.return_block(b, self.holder)? {
                self.sealed.push(sealed.id());
                (self.on_sealed)(sealed);
            }
        }
        Ok(self.sealed)
    }
}

/// Probe tuple followed by a build payload, viewed as one tuple.
struct Joined<'a> {
    probe: TupleRef<'a>,
    split: usize,
    payload: &'a [u8],
    payload_schema: &'a Schema,
}

impl Fields for Joined<'_> {
    #[inline]
    fn field(&self, col: usize) -> &[u8] {
        if col < self.split {
            self.probe.field(col)
        } else {
            let c = col - self.split;
            let off = self.payload_schema.offset(c);
            &self.payload[off..off + self.payload_schema.ty(c).width()]
        }
    }
}

#[inline]
fn burn(t: &TupleRef<'_>, rounds: u32) {
    let first = t.field(0);
    let mut h = if first.len() >= 8 { read_i64(first) as u64 } else { first.len() as u64 };
    for _ in 0..rounds {
        h = mix64(h);
    }
    std::hint::black_box(h);
}

/// Compiled, shareable execution state of one operator for one query.
pub enum OperatorRuntime {
    Select {
        predicate: Predicate,
        projection: CompiledProjection,
        output: PoolKey,
        cpu_cost_per_tuple: u32,
    },
    Build {
        builder: Mutex<Option<Arc<HashTableBuilder>>>,
    },
    Probe {
        key_columns: Vec<usize>,
        split: usize,
        projection: CompiledProjection,
        output: PoolKey,
    },
    Aggregate {
        state: AggregateState,
        output: PoolKey,
    },
}

impl OperatorRuntime {
    /// Temporary output is row-major; the sink's blocks count as result
    /// memory rather than intermediate memory.
    pub fn new(dag: &PlanDag, node: &OperatorNode, block_size: usize, memory: &Arc<MemoryTracker>) -> Result<Self> {
        let category = if node.id == dag.sink() {
            MemoryCategory::Result
        } else {
            MemoryCategory::TempBlocks
        };
        let output = PoolKey::new(node.output_schema.clone(), Layout::RowStore, block_size)
            .for_destination(node.id as u64, category);
        if node.produces_tuples() {
            crate::storage::capacity_for(block_size, node.output_schema.tuple_width())?;
        }
        Ok(match &node.kind {
            OperatorKind::Select {
                predicate,
                projection,
                cpu_cost_per_tuple,
            } => OperatorRuntime::Select {
                predicate: predicate.clone(),
                projection: CompiledProjection::compile(projection, &node.input_schema)?.0,
                output,
                cpu_cost_per_tuple: *cpu_cost_per_tuple,
            },
            OperatorKind::BuildHash {
                key_columns,
                payload_columns,
                config,
            } => {
                let layout = EntryLayout::new(&node.input_schema, key_columns.clone(), payload_columns.clone())?;
                OperatorRuntime::Build {
                    builder: Mutex::new(Some(Arc::new(HashTableBuilder::new(layout, config, memory.clone())?))),
                }
            }
            OperatorKind::ProbeHash {
                build,
                key_columns,
                projection,
            } => {
                let joined = crate::plan::joined_schema(&node.input_schema, dag.node(*build)?);
                OperatorRuntime::Probe {
                    key_columns: key_columns.clone(),
                    split: node.input_schema.len(),
                    projection: CompiledProjection::compile(projection, &joined)?.0,
                    output,
                }
            }
            OperatorKind::Aggregate { group_by, aggregates } => OperatorRuntime::Aggregate {
                state: AggregateState::new(
                    node.input_schema.clone(),
                    group_by.clone(),
                    aggregates.clone(),
                    &node.output_schema,
                    memory.clone(),
                ),
                output,
            },
        })
    }

    /// Pool destination of this operator's output, if it writes blocks.
    pub fn output_key(&self) -> Option<&PoolKey> {
        match self {
            OperatorRuntime::Select { output, .. }
            | OperatorRuntime::Probe { output, .. }
            | OperatorRuntime::Aggregate { output, .. } => Some(output),
            OperatorRuntime::Build { .. } => None,
        }
    }

    /// Runs one work order. `on_sealed` is called for every output block the
    /// moment it fills.
    pub fn execute(
        &self,
        wo: &WorkOrder,
        pool: &BlockPool,
        on_sealed: &mut dyn FnMut(Arc<Block>),
    ) -> Result<WorkOrderResult> {
        let start = Instant::now();
        let input = &wo.input;
        let n = input.fill_count();
        let rows = || (0..n).map(|r| input.row(r));
        let mut tuples_out = 0;
        let output_blocks = match self {
            OperatorRuntime::Select {
                predicate,
                projection,
                output,
                cpu_cost_per_tuple,
            } => {
                let mut w = OutputWriter::new(pool, output, wo.wo_id, on_sealed);
                for t in rows() {
                    if *cpu_cost_per_tuple > 0 {
                        burn(&t, *cpu_cost_per_tuple);
                    }
                    if predicate.eval_fields(&t) {
                        w.emit(|slot| projection.eval_into(&t, |i, b| slot.set_bytes(i, b)))?;
                        tuples_out += 1;
                    }
                }
                w.finish()?
            }
            OperatorRuntime::Build { builder } => {
                let b = builder
                    .lock()
                    .unwrap_or_else(|p| p.into_inner())
                    .clone()
                    .ok_or_else(|| Error::InvalidPlan(format!("hash table of operator {} already sealed", wo.op_id)))?;
                b.insert_batch(rows())?;
                Vec::new()
            }
            OperatorRuntime::Probe {
                key_columns,
                split,
                projection,
                output,
            } => {
                let table = wo.hash_table.as_ref().ok_or(Error::ProbeBeforeBuildSealed(wo.op_id))?;
                let payload_schema = &table.layout().payload_schema;
                let mut w = OutputWriter::new(pool, output, wo.wo_id, on_sealed);
                let mut key = Vec::with_capacity(table.layout().key_width);
                let mut err = None;
                for t in rows() {
                    key.clear();
                    gather(&t, key_columns, &mut key);
                    table.probe(&key, |payload| {
                        if err.is_some() {
                            return;
                        }
                        let j = Joined {
                            probe: t,
                            split: *split,
                            payload,
                            payload_schema,
                        };
                        match w.emit(|slot| projection.eval_into(&j, |i, b| slot.set_bytes(i, b))) {
                            Ok(()) => tuples_out += 1,
                            Err(e) => err = Some(e),
                        }
                    });
                    if let Some(e) = err {
                        return Err(e);
                    }
                }
                w.finish()?
            }
            OperatorRuntime::Aggregate { state, .. } => {
                state.consume(rows())?;
                Vec::new()
            }
        };
        Ok(WorkOrderResult {
            wo_id: wo.wo_id,
            op_id: wo.op_id,
            output_blocks,
            tuples_in: n,
            tuples_out,
            wall_time: start.elapsed(),
        })
    }

    /// Seals a build's hash table. Fails while work orders still hold it.
    pub fn seal_hash_table(&self) -> Result<Arc<SealedHashTable>> {
        let OperatorRuntime::Build { builder } = self else {
            return Err(Error::InvalidPlan("only hash builds own a hash table".into()));
        };
        let arc = builder
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .take()
            .ok_or_else(|| Error::InvalidPlan("hash table already sealed".into()))?;
        let b = Arc::try_unwrap(arc).map_err(|_| Error::InvalidPlan("hash table still in use".into()))?;
        Ok(Arc::new(b.seal()))
    }

    /// Writes the final aggregate rows, returning the number written.
    pub fn finalize_aggregate(&self, pool: &BlockPool, holder: u64, on_sealed: &mut dyn FnMut(Arc<Block>)) -> Result<usize> {
        let OperatorRuntime::Aggregate { state, output } = self else {
            return Err(Error::InvalidPlan("only aggregates finalize".into()));
        };
        let rows = state.finalize();
        let mut w = OutputWriter::new(pool, output, holder, on_sealed);
        for r in &rows {
            w.emit(|slot| {
                for (i, v) in r.iter().enumerate() {
                    slot.set_value(i, v);
                }
            })?;
        }
        w.finish()?;
        Ok(rows.len())
    }
}

/// Decodes every tuple of `blocks`.
pub fn collect_rows<'a>(blocks: impl IntoIterator<Item = &'a Arc<Block>>) -> Vec<Vec<Value>> {
    blocks.into_iter().flat_map(|b| b.tuples().collect::<Vec<_>>()).collect()
}
