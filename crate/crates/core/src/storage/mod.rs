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

//! Fixed-size blocks, base tables, and the temporary block pool.

mod block;
pub mod loader;
mod memory;
mod pool;
mod schema;
mod table;
mod value;

pub use block::{capacity_for, Block, BlockId, Fields, Layout, TupleRef, TupleSlot};
pub use memory::{MemoryCategory, MemoryTracker};
pub use pool::{find_double_checkout, BlockPool, PoolAction, PoolKey, PoolLogEntry};
pub use schema::{Column, Schema};
pub use table::{Catalog, Table, TableHandle};
pub use value::{read_f64, read_i64, ColumnType, Value};
