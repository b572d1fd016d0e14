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

use std::collections::BTreeMap;
use std::sync::Arc;

use super::block::check_tuple;
use super::{capacity_for, Block, BlockId, Layout, Schema, Value};
use crate::error::{Error, Result};

/// Descriptive view of a stored table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableHandle {
    pub name: String,
    pub schema: Arc<Schema>,
    pub layout: Layout,
    pub block_size: usize,
    pub block_ids: Vec<BlockId>,
    pub total_tuples: usize,
    pub is_temporary: bool,
}

impl TableHandle {
    /// Base-table bytes `M = N * C`.
    pub fn bytes(&self) -> u64 {
        self.total_tuples as u64 * self.schema.tuple_width() as u64
    }
}

/// A base table: a sequence of sealed blocks of identical shape.
#[derive(Debug, Clone)]
pub struct Table {
    name: String,
    schema: Arc<Schema>,
    layout: Layout,
    block_size: usize,
    blocks: Vec<Arc<Block>>,
    total_tuples: usize,
}

impl Table {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn blocks(&self) -> &[Arc<Block>] {
        &self.blocks
    }

    pub fn total_tuples(&self) -> usize {
        self.total_tuples
    }

    pub fn handle(&self) -> TableHandle {
        TableHandle {
            name: self.name.clone(),
            schema: self.schema.clone(),
            layout: self.layout,
            block_size: self.block_size,
            block_ids: self.blocks.iter().map(|b| b.id()).collect(),
            total_tuples: self.total_tuples,
            is_temporary: false,
        }
    }

    /// All tuples in insertion order.
    pub fn scan(&self) -> impl Iterator<Item = Vec<Value>> + '_ {
        self.blocks.iter().flat_map(|b| b.tuples())
    }

    fn last_block_mut(&mut self) -> Result<&mut Block> {
        let needs_new = self.blocks.last().is_none_or(|b| b.is_full());
        if needs_new {
            let b = Block::new(self.schema.clone(), self.layout, self.block_size)?;
            self.blocks.push(Arc::new(b));
        }
        let last = self.blocks.last_mut().expect("just ensured");
        Ok(Arc::make_mut(last))
    }
}

/// Registry of base tables.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    tables: BTreeMap<String, Table>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_table(
        &mut self,
        name: &str,
        schema: Schema,
        layout: Layout,
        block_size_bytes: usize,
    ) -> Result<TableHandle> {
        if self.tables.contains_key(name) {
            return Err(Error::DuplicateTableName(name.to_string()));
        }
        capacity_for(block_size_bytes, schema.tuple_width())?;
        let table = Table {
            name: name.to_string(),
            schema: Arc::new(schema),
            layout,
            block_size: block_size_bytes,
            blocks: Vec::new(),
            total_tuples: 0,
        };
        let handle = table.handle();
        self.tables.insert(name.to_string(), table);
        Ok(handle)
    }

    /// Appends tuples in order. All tuples are validated before any is
    /// stored. Returns how many blocks became full during this call.
    pub fn insert_tuples<I>(&mut self, name: &str, tuples: I) -> Result<usize>
    where
        I: IntoIterator,
        I::Item: AsRef<[Value]>,
    {
        let table = self
            .tables
            .get_mut(name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))?;
        let tuples: Vec<I::Item> = tuples.into_iter().collect();
        for t in &tuples {
            check_tuple(&table.schema, t.as_ref())?;
        }
        let mut filled = 0;
        for t in &tuples {
            let block = table.last_block_mut()?;
            block.push_tuple(t.as_ref())?;
            if block.is_full() {
                filled += 1;
            }
            table.total_tuples += 1;
        }
        Ok(filled)
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn handle(&self, name: &str) -> Result<TableHandle> {
        self.table(name).map(Table::handle)
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn drop_table(&mut self, name: &str) -> Option<Table> {
        self.tables.remove(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema64() -> Schema {
        // 8 + 56 = 64 bytes per tuple
        Schema::parse("k:int,pad:bytes56").unwrap()
    }

    fn tuple(i: i64) -> Vec<Value> {
        vec![Value::Int(i), Value::from("x")]
    }

    #[test]
    fn create_table_capacity() {
        let mut c = Catalog::new();
        c.create_table("t", schema64(), Layout::RowStore, 131072).unwrap();
        c.insert_tuples("t", [tuple(1)]).unwrap();
        assert_eq!(c.table("t").unwrap().blocks()[0].capacity(), 2048);
    }

    #[test]
    fn create_table_errors() {
        let mut c = Catalog::new();
        assert!(matches!(
            c.create_table("t", schema64(), Layout::RowStore, 32),
            Err(Error::BlockTooSmall { .. })
        ));
        c.create_table("t", schema64(), Layout::RowStore, 4096).unwrap();
        assert!(matches!(
            c.create_table("t", schema64(), Layout::RowStore, 4096),
            Err(Error::DuplicateTableName(_))
        ));
    }

    #[test]
    fn insert_counts_full_blocks() {
        let mut c = Catalog::new();
        c.create_table("t", schema64(), Layout::ColumnStore, 640).unwrap();
        assert_eq!(c.insert_tuples("t", Vec::<Vec<Value>>::new()).unwrap(), 0);
        assert_eq!(c.handle("t").unwrap().total_tuples, 0);
        assert_eq!(c.insert_tuples("t", (0..10).map(tuple)).unwrap(), 1);

        let mut c = Catalog::new();
        c.create_table("t", schema64(), Layout::RowStore, 640).unwrap();
        assert_eq!(c.insert_tuples("t", (0..21).map(tuple)).unwrap(), 2);
        let t = c.table("t").unwrap();
        assert_eq!(t.blocks().len(), 3);
        assert_eq!(t.blocks()[2].fill_count(), 1);
        assert_eq!(t.total_tuples(), 21);
    }

    #[test]
    fn schema_mismatch_stores_nothing() {
        let mut c = Catalog::new();
        c.create_table("t", schema64(), Layout::RowStore, 640).unwrap();
        let bad = vec![tuple(1), vec![Value::Float(1.0), Value::from("x")]];
        assert!(matches!(c.insert_tuples("t", bad), Err(Error::SchemaMismatch(_))));
        assert_eq!(c.handle("t").unwrap().total_tuples, 0);
    }

    fn arb_tuple() -> impl Strategy<Value = Vec<Value>> {
        (any::<i64>(), any::<f64>(), proptest::collection::vec(any::<u8>(), 0..=5)).prop_map(
            |(a, b, mut c)| {
                // trailing zero bytes are indistinguishable from padding
                while c.last() == Some(&0) {
                    c.pop();
                }
                let mut padded = c.clone();
                padded.resize(5, 0);
                vec![Value::Int(a), Value::Float(b), Value::Bytes(padded)]
            },
        )
    }

    proptest! {
        #[test]
        fn insert_then_scan_round_trips_in_both_layouts(
            tuples in proptest::collection::vec(arb_tuple(), 0..200),
            block_size in 21usize..400,
        ) {
            let schema = Schema::parse("a:int,b:float,c:bytes5").unwrap();
            let mut scans = Vec::new();
            for layout in [Layout::RowStore, Layout::ColumnStore] {
                let mut c = Catalog::new();
                c.create_table("t", schema.clone(), layout, block_size).unwrap();
                c.insert_tuples("t", &tuples).unwrap();
                let t = c.table("t").unwrap();
                prop_assert!(t.blocks().iter().all(|b| b.fill_count() <= b.capacity()));
                prop_assert_eq!(t.total_tuples(), t.blocks().iter().map(|b| b.fill_count()).sum::<usize>());
                let scanned: Vec<_> = t.scan().collect();
                prop_assert_eq!(&scanned, &tuples);
                scans.push(scanned);
            }
            prop_assert_eq!(&scans[0], &scans[1]);
        }
    }
}
