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

//! Scheduler event log.

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::plan::OpId;
use crate::storage::BlockId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    BlockFilled,
    WorkOrderDispatched,
    WorkOrderStarted,
    WorkOrderFinished,
    OperatorFinished,
    BlockFlushed,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::BlockFilled,
        EventKind::WorkOrderDispatched,
        EventKind::WorkOrderStarted,
        EventKind::WorkOrderFinished,
        EventKind::OperatorFinished,
        EventKind::BlockFlushed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::BlockFilled => "BlockFilled",
            EventKind::WorkOrderDispatched => "WorkOrderDispatched",
            EventKind::WorkOrderStarted => "WorkOrderStarted",
            EventKind::WorkOrderFinished => "WorkOrderFinished",
            EventKind::OperatorFinished => "OperatorFinished",
            EventKind::BlockFlushed => "BlockFlushed",
        }
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("unknown event kind `{s}`"),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerEvent {
    /// Nanoseconds since query start; strictly increasing within a log.
    pub timestamp: u64,
    pub kind: EventKind,
    pub op_id: OpId,
    pub wo_id: Option<u64>,
    pub block_id: Option<BlockId>,
    pub worker_id: Option<usize>,
}

impl SchedulerEvent {
    pub fn new(kind: EventKind, op_id: OpId) -> Self {
        SchedulerEvent {
            timestamp: 0,
            kind,
            op_id,
            wo_id: None,
            block_id: None,
            worker_id: None,
        }
    }

    pub fn wo(mut self, wo: u64) -> Self {
        self.wo_id = Some(wo);
        self
    }

    pub fn block(mut self, b: BlockId) -> Self {
        self.block_id = Some(b);
        self
    }

    pub fn worker(mut self, w: usize) -> Self {
        self.worker_id = Some(w);
        self
    }
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

impl fmt::Display for SchedulerEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{}",
            self.timestamp,
            self.kind.as_str(),
            self.op_id,
            opt(&self.wo_id),
            opt(&self.block_id),
            opt(&self.worker_id)
        )
    }
}

/// Appends are serialized by one lock; the timestamp is read under it, so
/// log order and timestamp order agree.
#[derive(Debug)]
pub struct EventLog {
    start: Instant,
    inner: Mutex<(u64, Vec<SchedulerEvent>)>,
}

impl EventLog {
    pub fn new(start: Instant) -> Self {
        EventLog {
            start,
            inner: Mutex::new((0, Vec::new())),
        }
    }

    pub fn start(&self) -> Instant {
        self.start
    }

    pub fn now(&self) -> u64 {
        self.start.elapsed().as_nanos() as u64
    }

    /// Records the event and returns its timestamp.
    pub fn push(&self, mut ev: SchedulerEvent) -> u64 {
        let mut g = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let ts = self.now().max(g.0 + 1);
        g.0 = ts;
        ev.timestamp = ts;
        g.1.push(ev);
        ts
    }

    pub fn into_events(self) -> Vec<SchedulerEvent> {
        self.inner.into_inner().unwrap_or_else(|p| p.into_inner()).1
    }
}

pub const EVENT_LOG_HEADER: &str = "timestamp,kind,op_id,wo_id,block_id,worker_id";

/// Newline-delimited dump, one record per line, with a header.
pub fn dump_events(events: &[SchedulerEvent]) -> String {
    let mut out = String::with_capacity(events.len() * 48);
    out.push_str(EVENT_LOG_HEADER);
    out.push('\n');
    for e in events {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

/// Parses a dump. Blank lines, lines starting with `#` and header lines
/// are skipped.
pub fn parse_events(text: &str) -> Result<Vec<SchedulerEvent>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == EVENT_LOG_HEADER {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", f.len())));
        }
        fn num<T: FromStr>(s: &str) -> std::result::Result<Option<T>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| format!("bad number `{s}`"))
            }
        }
        let kind: EventKind = f[1].parse().map_err(|_| err(format!("unknown kind `{}`", f[1])))?;
        out.push(SchedulerEvent {
            timestamp: num(f[0]).map_err(err)?.ok_or_else(|| err("missing timestamp".into()))?,
            kind,
            op_id: num(f[2]).map_err(err)?.ok_or_else(|| err("missing op_id".into()))?,
            wo_id: num(f[3]).map_err(err)?,
            block_id: num(f[4]).map_err(err)?,
            worker_id: num(f[5]).map_err(err)?,
        });
    }
    Ok(out)
}
