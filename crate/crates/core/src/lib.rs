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

//! A block-based in-memory query engine whose scheduler hands data from
//! producer to consumer operators in a configurable unit of transfer,
//! together with analytical cost and memory-footprint models.

// `!(x > 0)` rejects NaN too; expression builders mirror operator names.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

pub mod costmodel;
pub mod error;
pub mod memmodel;
pub mod num;
pub mod operators;
pub mod plan;
pub mod scheduler;
pub mod storage;

pub use error::{Error, Result};
pub use num::Scalar;

pub use costmodel::{CostParamsF32, CostParamsF64, ExactCostParams};
pub use memmodel::{ExactHashTableSpec, ExactSelectionStats, HashTableSpecF64, SelectionStatsF64};
