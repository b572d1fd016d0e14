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

//! Work-order scheduling with a configurable unit of transfer.

mod coordinator;
mod events;
mod metrics;
mod policy;
pub mod verify;

pub use coordinator::{run_query, QueryOutput};
pub use events::{dump_events, parse_events, EventKind, EventLog, SchedulerEvent, EVENT_LOG_HEADER};
pub use metrics::{dop_timeline_from_events, span_of, DopTimeline, ExecutionMetrics, OperatorStats, WorkOrderRecord};
pub use policy::{DispatchOrder, ExecConfig, UoTPolicy};
