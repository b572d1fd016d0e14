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

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// What an allocation is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemoryCategory {
    /// Temporary blocks holding intermediate operator output.
    TempBlocks,
    /// Join hash tables.
    HashTables,
    /// Blocks of the final query result.
    Result,
}

/// Byte accounting for one query execution with an optional cap.
///
/// Peak tracking covers the intermediate categories (temporary blocks plus
/// hash tables); result blocks are counted against the cap but not the peak.
#[derive(Debug)]
pub struct MemoryTracker {
    cap: Option<u64>,
    temp: AtomicU64,
    hash: AtomicU64,
    result: AtomicU64,
    intermediate: AtomicU64,
    peak_intermediate: AtomicU64,
    peak_temp: AtomicU64,
    peak_hash: AtomicU64,
}

impl MemoryTracker {
    pub fn new(cap: Option<u64>) -> Self {
        MemoryTracker {
            cap,
            temp: AtomicU64::new(0),
            hash: AtomicU64::new(0),
            result: AtomicU64::new(0),
            intermediate: AtomicU64::new(0),
            peak_intermediate: AtomicU64::new(0),
            peak_temp: AtomicU64::new(0),
            peak_hash: AtomicU64::new(0),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(None)
    }

    pub fn cap(&self) -> Option<u64> {
        self.cap
    }

    pub fn in_use(&self) -> u64 {
        self.intermediate.load(Ordering::Acquire) + self.result.load(Ordering::Acquire)
    }

    pub fn alloc(&self, cat: MemoryCategory, bytes: u64) -> Result<()> {
        if bytes == 0 {
            return Ok(());
        }
        if let Some(cap) = self.cap {
            let in_use = self.in_use();
            if in_use + bytes > cap {
                return Err(Error::OutOfMemoryBudget {
                    cap,
                    requested: bytes,
                    in_use,
                });
            }
        }
        match cat {
            MemoryCategory::Result => {
                self.result.fetch_add(bytes, Ordering::AcqRel);
            }
            MemoryCategory::TempBlocks | MemoryCategory::HashTables => {
                let (counter, peak) = self.counters(cat);
                let now = counter.fetch_add(bytes, Ordering::AcqRel) + bytes;
                peak.fetch_max(now, Ordering::AcqRel);
                let total = self.intermediate.fetch_add(bytes, Ordering::AcqRel) + bytes;
                self.peak_intermediate.fetch_max(total, Ordering::AcqRel);
            }
        }
        Ok(())
    }

    pub fn free(&self, cat: MemoryCategory, bytes: u64) {
        if bytes == 0 {
            return;
        }
        match cat {
            MemoryCategory::Result => {
                self.result.fetch_sub(bytes, Ordering::AcqRel);
            }
            MemoryCategory::TempBlocks | MemoryCategory::HashTables => {
                let (counter, _) = self.counters(cat);
                counter.fetch_sub(bytes, Ordering::AcqRel);
                self.intermediate.fetch_sub(bytes, Ordering::AcqRel);
            }
        }
    }

    fn counters(&self, cat: MemoryCategory) -> (&AtomicU64, &AtomicU64) {
        match cat {
            MemoryCategory::TempBlocks => (&self.temp, &self.peak_temp),
            MemoryCategory::HashTables => (&self.hash, &self.peak_hash),
            MemoryCategory::Result => unreachable!("result bytes have no peak counter"),
        }
    }

    pub fn current(&self, cat: MemoryCategory) -> u64 {
        match cat {
            MemoryCategory::TempBlocks => self.temp.load(Ordering::Acquire),
            MemoryCategory::HashTables => self.hash.load(Ordering::Acquire),
            MemoryCategory::Result => self.result.load(Ordering::Acquire),
        }
    }

    pub fn peak_intermediate(&self) -> u64 {
        self.peak_intermediate.load(Ordering::Acquire)
    }

    pub fn peak_temp_blocks(&self) -> u64 {
        self.peak_temp.load(Ordering::Acquire)
    }

    pub fn peak_hash_tables(&self) -> u64 {
        self.peak_hash.load(Ordering::Acquire)
    }
}

impl Default for MemoryTracker {
    fn default() -> Self {
        Self::unlimited()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_tracks_sum_of_intermediate_categories() {
        let m = MemoryTracker::unlimited();
        m.alloc(MemoryCategory::TempBlocks, 100).unwrap();
        m.alloc(MemoryCategory::HashTables, 50).unwrap();
        m.free(MemoryCategory::TempBlocks, 100);
        m.alloc(MemoryCategory::Result, 1000).unwrap();
        assert_eq!(m.peak_intermediate(), 150);
        assert_eq!(m.current(MemoryCategory::HashTables), 50);
        assert_eq!(m.peak_temp_blocks(), 100);
    }

    #[test]
    fn cap_is_enforced() {
        let m = MemoryTracker::new(Some(100));
        m.alloc(MemoryCategory::TempBlocks, 60).unwrap();
        let err = m.alloc(MemoryCategory::HashTables, 50).unwrap_err();
        assert!(matches!(err, Error::OutOfMemoryBudget { cap: 100, .. }));
        m.free(MemoryCategory::TempBlocks, 60);
        m.alloc(MemoryCategory::HashTables, 50).unwrap();
    }
}
