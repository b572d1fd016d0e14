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

use thiserror::Error;

use crate::storage::BlockId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the engine and the analytical models.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("table `{0}` already exists")]
    DuplicateTableName(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("block of {block_size} bytes cannot hold one {tuple_width}-byte tuple")]
    BlockTooSmall { block_size: usize, tuple_width: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("column index {index} out of range for {len} columns")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("memory budget of {cap} bytes exceeded (requested {requested}, in use {in_use})")]
    OutOfMemoryBudget {
        cap: u64,
        requested: u64,
        in_use: u64,
    },
    #[error("block {block} is not held by work order {holder}")]
    NotHolder { block: BlockId, holder: u64 },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("probe operator {0} scheduled before its hash table was sealed")]
    ProbeBeforeBuildSealed(usize),
    #[error("unknown operator {0}")]
    UnknownOperator(usize),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("input must be positive: {0}")]
    NonPositiveInput(&'static str),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid selection statistics: {0}")]
    InvalidStats(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("cost ratio denominator is zero")]
    ZeroDenominator,
    #[error("calibration unstable: {what} varied by {cv:.1}% across repetitions")]
    CalibrationUnstable { what: &'static str, cv: f64 },
    #[error("worker thread panicked: {0}")]
    WorkerPanic(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
