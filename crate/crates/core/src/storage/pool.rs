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

//! Thread-safe pool of partially filled temporary output blocks.
//!
//! A work order checks a block out, writes into it, and returns it. Full
//! blocks are sealed and leave the pool as immutable [`Arc<Block>`]s;
//! partially filled blocks go back on the free list so the next work order
//! writing to the same destination continues filling them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{Block, BlockId, Layout, MemoryCategory, MemoryTracker, Schema};
use crate::error::{Error, Result};

/// Identifies interchangeable blocks. `destination` names the temporary
/// table the blocks belong to, so output of different operators never mixes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PoolKey {
    pub destination: u64,
    pub schema: Arc<Schema>,
    pub layout: Layout,
    pub block_size: usize,
    pub category: MemoryCategory,
}

impl PoolKey {
    pub fn new(schema: Arc<Schema>, layout: Layout, block_size: usize) -> Self {
        PoolKey {
            destination: 0,
            schema,
            layout,
            block_size,
            category: MemoryCategory::TempBlocks,
        }
    }

    pub fn for_destination(mut self, destination: u64, category: MemoryCategory) -> Self {
        self.destination = destination;
        self.category = category;
        self
    }

    fn matches(&self, b: &Block) -> bool {
        b.schema() == &self.schema && b.layout() == self.layout && b.block_size() == self.block_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolAction {
    Checkout,
    Return,
    Seal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolLogEntry {
    pub action: PoolAction,
    pub block: BlockId,
    pub holder: u64,
}

#[derive(Default)]
struct PoolInner {
    free: HashMap<PoolKey, Vec<Block>>,
    checked_out: HashMap<BlockId, (u64, PoolKey)>,
    log: Vec<PoolLogEntry>,
}

pub struct BlockPool {
    inner: Mutex<PoolInner>,
    memory: Arc<MemoryTracker>,
    record_log: bool,
}

impl BlockPool {
    pub fn new(memory: Arc<MemoryTracker>) -> Self {
        BlockPool {
            inner: Mutex::new(PoolInner::default()),
            memory,
            record_log: false,
        }
    }

    /// Keeps a log of every checkout/return so holder exclusivity can be
    /// audited after the fact.
    pub fn with_log(mut self) -> Self {
        self.record_log = true;
        self
    }

    pub fn memory(&self) -> &Arc<MemoryTracker> {
        &self.memory
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, PoolInner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Returns a pooled partially filled block for `key` if one exists,
    /// otherwise allocates a fresh empty block charged to the key's category.
    pub fn checkout_block(&self, key: &PoolKey, holder: u64) -> Result<Block> {
        let reused = {
            let mut inner = self.lock();
            inner.free.get_mut(key).and_then(|v| v.pop())
        };
        let block = match reused {
            Some(b) => b,
            None => {
                let b = Block::new(key.schema.clone(), key.layout, key.block_size)?;
                self.memory.alloc(key.category, b.payload_bytes() as u64)?;
                b
            }
        };
        debug_assert!(key.matches(&block));
        let mut inner = self.lock();
        inner.checked_out.insert(block.id(), (holder, key.clone()));
        if self.record_log {
            inner.log.push(PoolLogEntry {
                action: PoolAction::Checkout,
                block: block.id(),
                holder,
            });
        }
        Ok(block)
    }

    /// Gives a block back. Full blocks are sealed and returned to the caller
    /// for hand-off downstream; partial blocks re-enter the free list.
    pub fn return_block(&self, block: Block, holder: u64) -> Result<Option<Arc<Block>>> {
        let mut inner = self.lock();
        match inner.checked_out.get(&block.id()) {
            Some((h, _)) if *h == holder => {}
            _ => {
                return Err(Error::NotHolder {
                    block: block.id(),
                    holder,
                })
            }
        }
        let (_, key) = inner.checked_out.remove(&block.id()).expect("checked above");
        let full = block.is_full();
        if self.record_log {
            inner.log.push(PoolLogEntry {
                action: if full { PoolAction::Seal } else { PoolAction::Return },
                block: block.id(),
                holder,
            });
        }
        if full {
            Ok(Some(Arc::new(block)))
        } else {
            inner.free.entry(key).or_default().push(block);
            Ok(None)
        }
    }

    /// Removes every pooled block of `destination`, in no particular order.
    pub fn drain_destination(&self, destination: u64) -> Vec<Block> {
        let mut inner = self.lock();
        let keys: Vec<PoolKey> = inner
            .free
            .keys()
            .filter(|k| k.destination == destination)
            .cloned()
            .collect();
        let mut out = Vec::new();
        for k in keys {
            out.extend(inner.free.remove(&k).unwrap_or_default());
        }
        out.sort_by_key(|b| b.id());
        out
    }

    pub fn free_count(&self) -> usize {
        self.lock().free.values().map(Vec::len).sum()
    }

    pub fn checked_out_count(&self) -> usize {
        self.lock().checked_out.len()
    }

    pub fn holder_of(&self, block: BlockId) -> Option<u64> {
        self.lock().checked_out.get(&block).map(|(h, _)| *h)
    }

    pub fn is_pooled(&self, block: BlockId) -> bool {
        self.lock().free.values().flatten().any(|b| b.id() == block)
    }

    pub fn log(&self) -> Vec<PoolLogEntry> {
        self.lock().log.clone()
    }
}

/// Replays a pool log and reports the first block that was checked out by
/// two holders at once, if any.
pub fn find_double_checkout(log: &[PoolLogEntry]) -> Option<BlockId> {
    let mut holders: HashMap<BlockId, u64> = HashMap::new();
    for e in log {
        match e.action {
            PoolAction::Checkout => {
                if holders.insert(e.block, e.holder).is_some() {
                    return Some(e.block);
                }
            }
            PoolAction::Return | PoolAction::Seal => {
                if holders.remove(&e.block) != Some(e.holder) {
                    return Some(e.block);
                }
            }
        }
    }
    None
}
