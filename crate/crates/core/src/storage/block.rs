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
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Schema, Value};
use crate::error::{Error, Result};

pub type BlockId = u64;

static NEXT_BLOCK_ID: AtomicU64 = AtomicU64::new(1);

fn next_block_id() -> BlockId {
    NEXT_BLOCK_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    #[serde(rename = "row", alias = "RowStore")]
    RowStore,
    #[serde(rename = "column", alias = "ColumnStore")]
    ColumnStore,
}

impl Layout {
    pub fn parse(s: &str) -> Option<Layout> {
        match s.trim().to_ascii_lowercase().as_str() {
            "row" | "rowstore" => Some(Layout::RowStore),
            "column" | "col" | "columnstore" => Some(Layout::ColumnStore),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::RowStore => "row",
            Layout::ColumnStore => "column",
        }
    }
}

/// Number of whole tuples that fit in a block. Headers are not charged
/// against the block size.
pub fn capacity_for(block_size: usize, tuple_width: usize) -> Result<usize> {
    let cap = block_size / tuple_width;
    if cap == 0 {
        return Err(Error::BlockTooSmall {
            block_size,
            tuple_width,
        });
    }
    Ok(cap)
}

/// Read access to the fields of one tuple.
pub trait Fields {
    fn field(&self, col: usize) -> &[u8];
}

/// Fixed-capacity storage unit in row-major or column-major layout.
///
/// In column layout column `j` occupies the contiguous region
/// `[capacity * offset(j), capacity * (offset(j) + width(j)))`.
#[derive(Debug, Clone)]
pub struct Block {
    id: BlockId,
    schema: Arc<Schema>,
    layout: Layout,
    block_size: usize,
    capacity: usize,
    fill: usize,
    data: Vec<u8>,
}

impl Block {
    pub fn new(schema: Arc<Schema>, layout: Layout, block_size: usize) -> Result<Block> {
        let capacity = capacity_for(block_size, schema.tuple_width())?;
        let data = vec![0u8; capacity * schema.tuple_width()];
        Ok(Block {
            id: next_block_id(),
            schema,
            layout,
            block_size,
            capacity,
            fill: 0,
            data,
        })
    }

    pub fn id(&self) -> BlockId {
        self.id
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

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn fill_count(&self) -> usize {
        self.fill
    }

    pub fn is_full(&self) -> bool {
        self.fill == self.capacity
    }

    pub fn is_empty(&self) -> bool {
        self.fill == 0
    }

    /// Bytes reserved for tuple payload (`capacity * tuple_width`).
    pub fn payload_bytes(&self) -> usize {
        self.data.len()
    }

    /// Bytes occupied by stored tuples.
    pub fn used_bytes(&self) -> usize {
        self.fill * self.schema.tuple_width()
    }

    #[inline]
    fn offset(&self, row: usize, col: usize) -> usize {
        match self.layout {
            Layout::RowStore => row * self.schema.tuple_width() + self.schema.offset(col),
            Layout::ColumnStore => {
                self.capacity * self.schema.offset(col) + row * self.schema.ty(col).width()
            }
        }
    }

    #[inline]
    pub fn field(&self, row: usize, col: usize) -> &[u8] {
        debug_assert!(row < self.fill);
        let off = self.offset(row, col);
        &self.data[off..off + self.schema.ty(col).width()]
    }

    #[inline]
    pub fn row(&self, row: usize) -> TupleRef<'_> {
        TupleRef { block: self, row }
    }

    /// Contiguous bytes of one column (column layout only).
    pub fn column_slice(&self, col: usize) -> Option<&[u8]> {
        if self.layout != Layout::ColumnStore {
            return None;
        }
        let start = self.capacity * self.schema.offset(col);
        Some(&self.data[start..start + self.fill * self.schema.ty(col).width()])
    }

    /// Appends an empty slot and returns a writer for it, or `None` when full.
    pub fn append(&mut self) -> Option<TupleSlot<'_>> {
        if self.is_full() {
            return None;
        }
        let row = self.fill;
        self.fill += 1;
        Some(TupleSlot { block: self, row })
    }

    pub fn push_tuple(&mut self, tuple: &[Value]) -> Result<()> {
        check_tuple(&self.schema, tuple)?;
        let mut slot = self
            .append()
            .ok_or_else(|| Error::SchemaMismatch("block is full".into()))?;
        for (i, v) in tuple.iter().enumerate() {
            slot.set_value(i, v);
        }
        Ok(())
    }

    pub fn tuple(&self, row: usize) -> Vec<Value> {
        (0..self.schema.len())
            .map(|c| Value::decode(self.schema.ty(c), self.field(row, c)))
            .collect()
    }

    pub fn tuples(&self) -> impl Iterator<Item = Vec<Value>> + '_ {
        (0..self.fill).map(move |r| self.tuple(r))
    }

    /// Values of one column in insertion order. Contiguous for column
    /// layout, a strided gather for row layout.
    pub fn read_column(&self, col: usize) -> Result<Vec<Value>> {
        let ty = self.schema.column(col)?.ty;
        if let Some(slice) = self.column_slice(col) {
            return Ok(slice
                .chunks_exact(ty.width())
                .map(|b| Value::decode(ty, b))
                .collect());
        }
        Ok((0..self.fill)
            .map(|r| Value::decode(ty, self.field(r, col)))
            .collect())
    }
}

pub(crate) fn check_tuple(schema: &Schema, tuple: &[Value]) -> Result<()> {
    if tuple.len() != schema.len() {
        return Err(Error::SchemaMismatch(format!(
            "tuple has {} fields, schema has {}",
            tuple.len(),
            schema.len()
        )));
    }
    for (i, v) in tuple.iter().enumerate() {
        let ty = schema.ty(i);
        if !v.fits(ty) {
            return Err(Error::SchemaMismatch(format!(
                "value {v:?} does not fit column `{}` of type {ty}",
                schema.columns()[i].name
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
pub struct TupleRef<'a> {
    block: &'a Block,
    row: usize,
}

impl Fields for TupleRef<'_> {
    #[inline]
    fn field(&self, col: usize) -> &[u8] {
        self.block.field(self.row, col)
    }
}

/// Writer for a freshly appended tuple.
pub struct TupleSlot<'a> {
    block: &'a mut Block,
    row: usize,
}

impl TupleSlot<'_> {
    #[inline]
    pub fn set_bytes(&mut self, col: usize, bytes: &[u8]) {
        let off = self.block.offset(self.row, col);
        let w = self.block.schema.ty(col).width();
        self.block.data[off..off + w].copy_from_slice(bytes);
    }

    pub fn set_value(&mut self, col: usize, v: &Value) {
        let off = self.block.offset(self.row, col);
        let w = self.block.schema.ty(col).width();
        v.encode_into(&mut self.block.data[off..off + w]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::{Column, ColumnType};

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(vec![
                Column::new("k", ColumnType::Int64),
                Column::new("s", ColumnType::Bytes(1)),
            ])
            .unwrap(),
        )
    }

    fn three_tuples(layout: Layout) -> Block {
        let mut b = Block::new(schema(), layout, 90).unwrap();
        for (k, s) in [(1, "a"), (2, "b"), (3, "c")] {
            b.push_tuple(&[Value::Int(k), Value::from(s)]).unwrap();
        }
        b
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(capacity_for(131072, 64).unwrap(), 2048);
        assert_eq!(capacity_for(2 * 1024 * 1024, 100).unwrap(), 20971);
        assert!(matches!(capacity_for(32, 64), Err(Error::BlockTooSmall { .. })));
    }

    #[test]
    fn read_column_both_layouts() {
        for layout in [Layout::RowStore, Layout::ColumnStore] {
            let b = three_tuples(layout);
            assert_eq!(
                b.read_column(0).unwrap(),
                vec![Value::Int(1), Value::Int(2), Value::Int(3)]
            );
            assert_eq!(
                b.read_column(1).unwrap(),
                vec![Value::from("a"), Value::from("b"), Value::from("c")]
            );
            assert!(matches!(b.read_column(2), Err(Error::IndexOutOfRange { .. })));
        }
    }

    #[test]
    fn empty_block_reads_empty_column() {
        let b = Block::new(schema(), Layout::ColumnStore, 90).unwrap();
        assert!(b.read_column(0).unwrap().is_empty());
    }

    #[test]
    fn append_stops_at_capacity() {
        let mut b = Block::new(schema(), Layout::RowStore, 18).unwrap();
        assert_eq!(b.capacity(), 2);
        assert!(b.append().is_some());
        assert!(b.append().is_some());
        assert!(b.append().is_none());
        assert!(b.is_full());
    }

    #[test]
    fn push_rejects_wrong_types() {
        let mut b = Block::new(schema(), Layout::RowStore, 90).unwrap();
        let err = b.push_tuple(&[Value::Float(1.0), Value::from("a")]).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
        assert!(b.push_tuple(&[Value::Int(1), Value::from("toolong")]).is_err());
        assert_eq!(b.fill_count(), 0);
    }
}
