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

//! Operator logic decomposed into per-block work orders.

mod aggregate;
pub mod hash;
mod hash_table;
mod work_order;

pub use aggregate::{AggregateState, ExactSum};
pub use hash_table::{capacity_after, gather, EntryLayout, HashTableBuilder, SealedHashTable};
pub use work_order::{
    collect_rows, gen_work_orders, OperatorRuntime, OutputWriter, WorkOrder, WorkOrderId, WorkOrderResult,
};
