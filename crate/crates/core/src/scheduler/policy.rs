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

//! Scheduling knobs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::plan::OpId;

/// How many sealed producer blocks are handed to a consumer at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UoTPolicy {
    /// Release consumer work in batches of `k` blocks.
    Blocks(usize),
    /// Release nothing until the producer has finished.
    WholeTable,
}

impl UoTPolicy {
    pub fn blocks(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParams("unit of transfer must be at least one block".into()));
        }
        Ok(UoTPolicy::Blocks(k))
    }
}

impl Default for UoTPolicy {
    fn default() -> Self {
        UoTPolicy::Blocks(1)
    }
}

impl fmt::Display for UoTPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UoTPolicy::Blocks(k) => write!(f, "{k}"),
            UoTPolicy::WholeTable => f.write_str("whole"),
        }
    }
}

impl FromStr for UoTPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "whole" | "whole_table" | "table" => Ok(UoTPolicy::WholeTable),
            other => other
                .parse::<usize>()
                .map_err(|_| Error::InvalidParams(format!("bad unit of transfer `{s}`")))
                .and_then(UoTPolicy::blocks),
        }
    }
}

impl Serialize for UoTPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            UoTPolicy::Blocks(k) => s.serialize_u64(*k as u64),
            UoTPolicy::WholeTable => s.serialize_str("whole"),
        }
    }
}

impl<'de> Deserialize<'de> for UoTPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(k) => UoTPolicy::blocks(k as usize).map_err(serde::de::Error::custom),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Which ready work order an idle worker receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchOrder {
    /// Operators closer to the sink first, then release order.
    #[default]
    ConsumersFirst,
    /// Strict release order.
    Fifo,
    /// Uniformly random among ready work orders, seeded.
    Shuffled(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecConfig {
    pub uot: UoTPolicy,
    pub threads: usize,
    /// Block size of temporary and result tables.
    pub block_size: usize,
    pub memory_cap: Option<u64>,
    pub order: DispatchOrder,
    /// Optional per-operator limit on concurrently running work orders.
    pub dop_caps: BTreeMap<OpId, usize>,
    pub record_pool_log: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            uot: UoTPolicy::default(),
            threads: 1,
            block_size: 128 * 1024,
            memory_cap: None,
            order: DispatchOrder::default(),
            dop_caps: BTreeMap::new(),
            record_pool_log: false,
        }
    }
}

impl ExecConfig {
    pub fn new(uot: UoTPolicy, threads: usize, block_size: usize) -> Self {
        ExecConfig {
            uot,
            threads,
            block_size,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::InvalidParams("thread count must be at least 1".into()));
        }
        if let UoTPolicy::Blocks(0) = self.uot {
            return Err(Error::InvalidParams("unit of transfer must be at least one block".into()));
        }
        if let Some((op, _)) = self.dop_caps.iter().find(|(_, &c)| c == 0) {
            return Err(Error::InvalidParams(format!("DOP cap of operator {op} must be positive")));
        }
        Ok(())
    }
}
