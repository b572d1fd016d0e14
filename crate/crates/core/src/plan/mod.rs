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

//! Query plans: the expression language and operator DAGs.

mod dag;
mod expr;
pub mod json;

pub use dag::{
    build_left_deep_plan, joined_schema, AggregateExpr, AggregateFn, Edge, EdgeKind, HashTableConfig, Input,
    JoinSpec, OpId, OperatorKind, OperatorNode, PlanBuilder, PlanDag, CHAIN_POINTER_BYTES,
};
pub use expr::{
    eval_predicate, eval_projection, ArithOp, Atom, Comparator, CompiledProjection, Expr, Predicate, Projection,
    ProjectionItem,
};
pub use json::PlanSpec;
