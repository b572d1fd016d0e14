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

//! Non-partitioned join hash table.
//!
//! The bucket array is split into `S` stripes by `bucket % S`, each behind
//! its own mutex. Because the bucket count is always a multiple of `S`, an
//! entry never changes stripe when the array doubles. Inserters hold a
//! shared lock on the capacity while touching stripes; a resize takes it
//! exclusively.
//!
//! Memory is accounted as `buckets * bucket_bytes`, which is the quantity
//! the footprint model predicts. The allocator-level footprint differs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use super::hash::hash_bytes;
use crate::error::{Error, Result};
use crate::plan::HashTableConfig;
use crate::storage::{Fields, MemoryCategory, MemoryTracker, Schema};

const MAX_STRIPES: usize = 16;
const NIL: u32 = u32::MAX;

/// Bucket count reached after inserting `entries` under the doubling rule.
pub fn capacity_after(entries: usize, initial: usize, load_factor: f64) -> usize {
    let mut cap = initial;
    while entries as f64 > load_factor * cap as f64 {
        cap *= 2;
    }
    cap
}

#[derive(Debug, Default)]
struct Stripe {
    /// Head entry per local bucket; local bucket `i` is global `i * S + s`.
    heads: Vec<u32>,
    next: Vec<u32>,
    hashes: Vec<u64>,
    keys: Vec<u8>,
    payloads: Vec<u8>,
}

impl Stripe {
    fn rehash(&mut self, local_buckets: usize, stripe_shift: u32) {
        self.heads.clear();
        self.heads.resize(local_buckets, NIL);
        let mask = local_buckets - 1;
        for e in 0..self.hashes.len() {
            let local = ((self.hashes[e] >> stripe_shift) as usize) & mask;
            self.next[e] = self.heads[local];
            self.heads[local] = e as u32;
        }
    }
}

/// Key and payload layout of a table, shared by builder and sealed form.
#[derive(Debug, Clone)]
pub struct EntryLayout {
    pub key_columns: Vec<usize>,
    pub payload_columns: Vec<usize>,
    pub key_width: usize,
    pub payload_schema: Arc<Schema>,
}

impl EntryLayout {
    pub fn new(input: &Schema, key_columns: Vec<usize>, payload_columns: Vec<usize>) -> Result<Self> {
        let key_width = input.project(&key_columns)?.tuple_width();
        let payload_schema = Arc::new(input.project(&payload_columns)?);
        Ok(EntryLayout {
            key_columns,
            payload_columns,
            key_width,
            payload_schema,
        })
    }

    pub fn payload_width(&self) -> usize {
        self.payload_schema.tuple_width()
    }
}

/// Concatenates the encoded bytes of `cols` into `buf`.
#[inline]
pub fn gather<F: Fields + ?Sized>(tuple: &F, cols: &[usize], buf: &mut Vec<u8>) {
    for &c in cols {
        buf.extend_from_slice(tuple.field(c));
    }
}

/// Mutable phase: concurrent inserts, no probes.
pub struct HashTableBuilder {
    layout: EntryLayout,
    load_factor: f64,
    bucket_bytes: usize,
    stripe_count: usize,
    capacity: RwLock<usize>,
    stripes: Vec<Mutex<Stripe>>,
    entries: AtomicUsize,
    memory: Arc<MemoryTracker>,
}

impl std::fmt::Debug for HashTableBuilder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HashTableBuilder")
            .field("entries", &self.entry_count())
            .field("buckets", &self.bucket_capacity())
            .finish()
    }
}

impl HashTableBuilder {
    /// Allocates the initial bucket array, charging it to `memory`.
    pub fn new(layout: EntryLayout, config: &HashTableConfig, memory: Arc<MemoryTracker>) -> Result<Self> {
        config.validate()?;
        let bucket_bytes = config.effective_bucket_bytes(layout.key_width, layout.payload_width());
        let cap = config.initial_buckets;
        memory.alloc(MemoryCategory::HashTables, (cap * bucket_bytes) as u64)?;
        let stripe_count = cap.min(MAX_STRIPES);
        let stripes = (0..stripe_count)
            .map(|_| {
                Mutex::new(Stripe {
                    heads: vec![NIL; cap / stripe_count],
                    ..Stripe::default()
                })
            })
            .collect();
        Ok(HashTableBuilder {
            layout,
            load_factor: config.load_factor,
            bucket_bytes,
            stripe_count,
            capacity: RwLock::new(cap),
            stripes,
            entries: AtomicUsize::new(0),
            memory,
        })
    }

    pub fn layout(&self) -> &EntryLayout {
        &self.layout
    }

    pub fn entry_count(&self) -> usize {
        self.entries.load(Ordering::Acquire)
    }

    pub fn bucket_capacity(&self) -> usize {
        *self.capacity.read().unwrap_or_else(|p| p.into_inner())
    }

    pub fn bucket_bytes(&self) -> usize {
        self.bucket_bytes
    }

    pub fn memory_bytes(&self) -> usize {
        self.bucket_capacity() * self.bucket_bytes
    }

    fn stripe_shift(&self) -> u32 {
        self.stripe_count.trailing_zeros()
    }

    fn grow_to_hold(&self, entries: usize) -> Result<()> {
        let needed = |cap: usize| entries as f64 > self.load_factor * cap as f64;
        if !needed(*self.capacity.read().unwrap_or_else(|p| p.into_inner())) {
            return Ok(());
        }
        let mut cap = self.capacity.write().unwrap_or_else(|p| p.into_inner());
        let old = *cap;
        let new = capacity_after(entries, old, self.load_factor);
        if new == old {
            return Ok(());
        }
        self.memory
            .alloc(MemoryCategory::HashTables, ((new - old) * self.bucket_bytes) as u64)?;
        let local = new / self.stripe_count;
        let shift = self.stripe_shift();
        for s in &self.stripes {
            s.lock().unwrap_or_else(|p| p.into_inner()).rehash(local, shift);
        }
        *cap = new;
        Ok(())
    }

    /// Inserts one batch of tuples (typically one input block). Duplicate
    /// keys are kept.
    pub fn insert_batch<'t, F, I>(&self, tuples: I) -> Result<usize>
    where
        F: Fields + 't,
        I: IntoIterator<Item = F>,
    {
        let mut staged: Vec<Vec<(u64, usize)>> = vec![Vec::new(); self.stripe_count];
        let mut keys = Vec::new();
        let mut payloads = Vec::new();
        let mut n = 0;
        let kw = self.layout.key_width;
        for t in tuples {
            let start = keys.len();
            gather(&t, &self.layout.key_columns, &mut keys);
            gather(&t, &self.layout.payload_columns, &mut payloads);
            let h = hash_bytes(&keys[start..start + kw]);
            staged[(h as usize) & (self.stripe_count - 1)].push((h, n));
            n += 1;
        }
        if n == 0 {
            return Ok(0);
        }
        let total = self.entries.fetch_add(n, Ordering::AcqRel) + n;
        self.grow_to_hold(total)?;

        let pw = self.layout.payload_width();
        let shift = self.stripe_shift();
        let cap = self.capacity.read().unwrap_or_else(|p| p.into_inner());
        let mask = *cap / self.stripe_count - 1;
        for (s, items) in staged.iter().enumerate() {
            if items.is_empty() {
                continue;
            }
            let mut stripe = self.stripes[s].lock().unwrap_or_else(|p| p.into_inner());
            for &(h, i) in items {
                let e = stripe.hashes.len();
                if e >= NIL as usize {
                    return Err(Error::InvalidPlan("hash table stripe exceeds 2^32 entries".into()));
                }
                let local = ((h >> shift) as usize) & mask;
                let head = stripe.heads[local];
                stripe.hashes.push(h);
                stripe.next.push(head);
                stripe.keys.extend_from_slice(&keys[i * kw..(i + 1) * kw]);
                stripe.payloads.extend_from_slice(&payloads[i * pw..(i + 1) * pw]);
                stripe.heads[local] = e as u32;
            }
        }
        Ok(n)
    }

    /// Freezes the table for lock-free probing.
    pub fn seal(self) -> SealedHashTable {
        let capacity = self.capacity.into_inner().unwrap_or_else(|p| p.into_inner());
        let stripes = self
            .stripes
            .into_iter()
            .map(|m| m.into_inner().unwrap_or_else(|p| p.into_inner()))
            .collect();
        SealedHashTable {
            layout: self.layout,
            stripe_count: self.stripe_count,
            capacity,
            bucket_bytes: self.bucket_bytes,
            stripes,
            entries: self.entries.into_inner(),
        }
    }
}

/// Read-only phase. Probes need no synchronization.
#[derive(Debug)]
pub struct SealedHashTable {
    layout: EntryLayout,
    stripe_count: usize,
    capacity: usize,
    bucket_bytes: usize,
    stripes: Vec<Stripe>,
    entries: usize,
}

impl SealedHashTable {
    pub fn layout(&self) -> &EntryLayout {
        &self.layout
    }

    pub fn entry_count(&self) -> usize {
        self.entries
    }

    pub fn bucket_capacity(&self) -> usize {
        self.capacity
    }

    pub fn memory_bytes(&self) -> usize {
        self.capacity * self.bucket_bytes
    }

    /// Calls `on_match` with the payload bytes of every entry whose key
    /// equals `key`.
    #[inline]
    pub fn probe(&self, key: &[u8], mut on_match: impl FnMut(&[u8])) {
        let h = hash_bytes(key);
        let stripe = &self.stripes[(h as usize) & (self.stripe_count - 1)];
        let local = ((h >> self.stripe_count.trailing_zeros()) as usize) & (stripe.heads.len() - 1);
        let kw = self.layout.key_width;
        let pw = self.layout.payload_width();
        let mut e = stripe.heads[local];
        while e != NIL {
            let i = e as usize;
            if stripe.hashes[i] == h && &stripe.keys[i * kw..(i + 1) * kw] == key {
                on_match(&stripe.payloads[i * pw..(i + 1) * pw]);
            }
            e = stripe.next[i];
        }
    }

    /// Number of entries with the given key.
    pub fn count_matches(&self, key: &[u8]) -> usize {
        let mut n = 0;
        self.probe(key, |_| n += 1);
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::{Block, Layout, Value};
    use proptest::prelude::*;

    fn block(rows: &[(i64, i64)]) -> Block {
        let schema = Arc::new(Schema::parse("k:int,v:int").unwrap());
        let mut b = Block::new(schema, Layout::RowStore, 1 << 16).unwrap();
        for &(k, v) in rows {
            b.push_tuple(&[Value::Int(k), Value::Int(v)]).unwrap();
        }
        b
    }

    fn builder(cfg: HashTableConfig, mem: Arc<MemoryTracker>) -> HashTableBuilder {
        let s = Schema::parse("k:int,v:int").unwrap();
        HashTableBuilder::new(EntryLayout::new(&s, vec![0], vec![1]).unwrap(), &cfg, mem).unwrap()
    }

    fn insert(b: &HashTableBuilder, blk: &Block) -> usize {
        b.insert_batch((0..blk.fill_count()).map(|r| blk.row(r))).unwrap()
    }

    #[test]
    fn hundred_tuples_resize_to_256_buckets() {
        let mem = Arc::new(MemoryTracker::unlimited());
        let cfg = HashTableConfig {
            load_factor: 0.5,
            bucket_bytes: Some(64),
            initial_buckets: 64,
        };
        let b = builder(cfg, mem.clone());
        let rows: Vec<_> = (0..100).map(|i| (i, i * 10)).collect();
        insert(&b, &block(&rows));
        assert_eq!(b.bucket_capacity(), 256);
        assert_eq!(b.memory_bytes(), 16384);
        assert_eq!(mem.current(MemoryCategory::HashTables), 16384);
    }

    #[test]
    fn empty_block_leaves_count_unchanged() {
        let b = builder(HashTableConfig::default(), Arc::new(MemoryTracker::unlimited()));
        assert_eq!(insert(&b, &block(&[])), 0);
        assert_eq!(b.entry_count(), 0);
        assert_eq!(b.bucket_capacity(), 64);
    }

    #[test]
    fn duplicates_chain_in_one_bucket() {
        let b = builder(HashTableConfig::default(), Arc::new(MemoryTracker::unlimited()));
        insert(&b, &block(&[(7, 1), (7, 2), (8, 3)]));
        let t = b.seal();
        let mut got = Vec::new();
        t.probe(&7i64.to_le_bytes(), |p| got.push(i64::from_le_bytes(p.try_into().unwrap())));
        got.sort();
        assert_eq!(got, vec![1, 2]);
        assert_eq!(t.count_matches(&9i64.to_le_bytes()), 0);
    }

    #[test]
    fn default_bucket_bytes_cover_key_payload_and_pointer() {
        let b = builder(HashTableConfig::default(), Arc::new(MemoryTracker::unlimited()));
        assert_eq!(b.bucket_bytes(), 8 + 8 + 8);
    }

    #[test]
    fn resize_respects_memory_cap() {
        let cfg = HashTableConfig {
            load_factor: 1.0,
            bucket_bytes: Some(100),
            initial_buckets: 64,
        };
        let mem = Arc::new(MemoryTracker::new(Some(10_000)));
        let b = builder(cfg, mem);
        let rows: Vec<_> = (0..65).map(|i| (i, i)).collect();
        let blk = block(&rows);
        let err = b.insert_batch((0..blk.fill_count()).map(|r| blk.row(r))).unwrap_err();
        assert!(matches!(err, Error::OutOfMemoryBudget { .. }));
    }

    #[test]
    fn concurrent_inserts_are_all_retrievable() {
        let b = builder(HashTableConfig::default(), Arc::new(MemoryTracker::unlimited()));
        let blocks: Vec<Block> = (0..8)
            .map(|w| block(&(0..500).map(|i| (i % 97, w * 1000 + i)).collect::<Vec<_>>()))
            .collect();
        std::thread::scope(|s| {
            for blk in &blocks {
                let b = &b;
                s.spawn(move || insert(b, blk));
            }
        });
        assert_eq!(b.entry_count(), 4000);
        assert_eq!(b.bucket_capacity(), capacity_after(4000, 64, 0.5));
        let t = b.seal();
        let total: usize = (0..97).map(|k| t.count_matches(&(k as i64).to_le_bytes())).sum();
        assert_eq!(total, 4000);
    }

    proptest! {
        #[test]
        fn capacity_is_smallest_doubling_that_fits(n in 0usize..5000, eighths in 1u32..=8, log_init in 0u32..8) {
            let f = eighths as f64 / 8.0;
            let init = 1usize << log_init;
            let cap = capacity_after(n, init, f);
            // integer form of n <= f * cap with f = eighths / 8
            prop_assert!(n * 8 <= eighths as usize * cap);
            prop_assert!(cap == init || n * 8 > eighths as usize * (cap / 2));
        }
    }
}
