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

//! Hand-built operator DAGs.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Predicate, Projection};
use crate::error::{Error, Result};
use crate::storage::{Catalog, Column, ColumnType, Schema, TableHandle};

pub type OpId = usize;

/// Where an operator reads its (streamed) input from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Input {
    Table(String),
    Operator(OpId),
}

impl Input {
    pub fn table(name: impl Into<String>) -> Self {
        Input::Table(name.into())
    }

    pub fn op(id: OpId) -> Self {
        Input::Operator(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Consumer may start on individual producer blocks.
    Streamable,
    /// Consumer waits for the producer to finish (pipeline breaker).
    Blocking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: OpId,
    pub to: OpId,
    pub kind: EdgeKind,
}

/// Sizing policy of a join hash table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashTableConfig {
    /// Maximum `entries / buckets` before the bucket array doubles.
    pub load_factor: f64,
    /// Bytes charged per bucket. Defaults to key + payload + an 8-byte
    /// chain pointer.
    pub bucket_bytes: Option<usize>,
    /// Initial bucket count; a power of two.
    pub initial_buckets: usize,
}

impl Default for HashTableConfig {
    fn default() -> Self {
        HashTableConfig {
            load_factor: 0.5,
            bucket_bytes: None,
            initial_buckets: 64,
        }
    }
}

pub const CHAIN_POINTER_BYTES: usize = 8;

impl HashTableConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.load_factor > 0.0 && self.load_factor <= 1.0) {
            return Err(Error::InvalidPlan(format!(
                "load factor {} outside (0, 1]",
                self.load_factor
            )));
        }
        if !self.initial_buckets.is_power_of_two() {
            return Err(Error::InvalidPlan(format!(
                "initial bucket count {} is not a power of two",
                self.initial_buckets
            )));
        }
        if self.bucket_bytes == Some(0) {
            return Err(Error::InvalidPlan("bucket size must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_bucket_bytes(&self, key_width: usize, payload_width: usize) -> usize {
        self.bucket_bytes
            .unwrap_or(key_width + payload_width + CHAIN_POINTER_BYTES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateFn {
    Count,
    Sum,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateExpr {
    pub func: AggregateFn,
    /// Ignored for `Count`.
    pub column: Option<usize>,
    pub name: String,
}

impl AggregateExpr {
    pub fn new(func: AggregateFn, column: Option<usize>, name: impl Into<String>) -> Self {
        AggregateExpr {
            func,
            column,
            name: name.into(),
        }
    }

    pub fn count(name: impl Into<String>) -> Self {
        Self::new(AggregateFn::Count, None, name)
    }

    pub fn sum(column: usize, name: impl Into<String>) -> Self {
        Self::new(AggregateFn::Sum, Some(column), name)
    }

    pub fn min(column: usize, name: impl Into<String>) -> Self {
        Self::new(AggregateFn::Min, Some(column), name)
    }

    pub fn max(column: usize, name: impl Into<String>) -> Self {
        Self::new(AggregateFn::Max, Some(column), name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    Select {
        predicate: Predicate,
        projection: Projection,
        /// Synthetic per-tuple CPU work (mixer rounds) for microbenchmarks.
        cpu_cost_per_tuple: u32,
    },
    BuildHash {
        key_columns: Vec<usize>,
        payload_columns: Vec<usize>,
        config: HashTableConfig,
    },
    ProbeHash {
        build: OpId,
        key_columns: Vec<usize>,
        /// Over the concatenation `probe tuple ++ build payload`.
        projection: Projection,
    },
    Aggregate {
        group_by: Vec<usize>,
        aggregates: Vec<AggregateExpr>,
    },
}

impl OperatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            OperatorKind::Select { .. } => "select",
            OperatorKind::BuildHash { .. } => "build_hash",
            OperatorKind::ProbeHash { .. } => "probe_hash",
            OperatorKind::Aggregate { .. } => "aggregate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OperatorNode {
    pub id: OpId,
    pub name: String,
    pub kind: OperatorKind,
    pub input: Input,
    pub input_schema: Arc<Schema>,
    /// Tuple schema produced by the operator. For hash builds this is the
    /// stored payload schema.
    pub output_schema: Arc<Schema>,
}

impl OperatorNode {
    /// Whether the operator emits tuples into blocks.
    pub fn produces_tuples(&self) -> bool {
        !matches!(self.kind, OperatorKind::BuildHash { .. })
    }

    /// Kind of the edges leaving this operator.
    pub fn out_edge_kind(&self) -> EdgeKind {
        match self.kind {
            OperatorKind::Select { .. } | OperatorKind::ProbeHash { .. } => EdgeKind::Streamable,
            OperatorKind::BuildHash { .. } | OperatorKind::Aggregate { .. } => EdgeKind::Blocking,
        }
    }
}

/// A validated, immutable plan.
#[derive(Debug, Clone)]
pub struct PlanDag {
    nodes: Vec<OperatorNode>,
    edges: Vec<Edge>,
    sink: OpId,
}

impl PlanDag {
    pub fn nodes(&self) -> &[OperatorNode] {
        &self.nodes
    }

    pub fn node(&self, id: OpId) -> Result<&OperatorNode> {
        self.nodes.get(id).ok_or(Error::UnknownOperator(id))
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn sink(&self) -> OpId {
        self.sink
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn streamable_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Streamable)
    }

    pub fn consumers(&self, id: OpId) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == id)
    }

    pub fn producers(&self, id: OpId) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.to == id)
    }

    pub fn find(&self, name: &str) -> Option<OpId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn base_tables(&self) -> BTreeSet<&str> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.input {
                Input::Table(t) => Some(t.as_str()),
                Input::Operator(_) => None,
            })
            .collect()
    }

    /// Longest edge count from each operator to the sink.
    pub fn distance_to_sink(&self) -> Vec<usize> {
        let mut dist = vec![0usize; self.nodes.len()];
        // Node ids are in topological order (inputs always precede users).
        for id in (0..self.nodes.len()).rev() {
            for e in self.consumers(id) {
                dist[id] = dist[id].max(dist[e.to] + 1);
            }
        }
        dist
    }

    /// The chain of streamable edges ending at the sink, from its leaf
    /// producer to the sink.
    pub fn main_chain(&self) -> Vec<OpId> {
        let mut chain = vec![self.sink];
        let mut cur = self.sink;
        while let Input::Operator(p) = self.nodes[cur].input {
            if self.nodes[p].out_edge_kind() != EdgeKind::Streamable {
                break;
            }
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chain
    }
}

/// Incremental plan construction with validation at every step. Inputs
/// must refer to operators already added, so plans are acyclic by
/// construction.
pub struct PlanBuilder<'a> {
    catalog: &'a Catalog,
    nodes: Vec<OperatorNode>,
}

impl<'a> PlanBuilder<'a> {
    pub fn new(catalog: &'a Catalog) -> Self {
        PlanBuilder {
            catalog,
            nodes: Vec::new(),
        }
    }

    pub fn node(&self, id: OpId) -> Result<&OperatorNode> {
        self.nodes.get(id).ok_or(Error::UnknownOperator(id))
    }

    fn input_schema(&self, input: &Input) -> Result<Arc<Schema>> {
        match input {
            Input::Table(t) => Ok(self.catalog.table(t)?.schema().clone()),
            Input::Operator(id) => {
                let node = self.nodes.get(*id).ok_or(Error::UnknownOperator(*id))?;
                if !node.produces_tuples() {
                    return Err(Error::InvalidPlan(format!(
                        "operator `{}` builds a hash table and can only feed a probe",
                        node.name
                    )));
                }
                Ok(node.output_schema.clone())
            }
        }
    }

    fn push(&mut self, name: Option<String>, kind: OperatorKind, input: Input, input_schema: Arc<Schema>, output: Schema) -> OpId {
        let id = self.nodes.len();
        let name = name.unwrap_or_else(|| format!("{}_{id}", kind.label()));
        self.nodes.push(OperatorNode {
            id,
            name,
            kind,
            input,
            input_schema,
            output_schema: Arc::new(output),
        });
        id
    }

    pub fn select(&mut self, input: Input, predicate: Predicate, projection: Projection) -> Result<OpId> {
        self.select_named(None, input, predicate, projection, 0)
    }

    pub fn select_named(
        &mut self,
        name: Option<String>,
        input: Input,
        predicate: Predicate,
        projection: Projection,
        cpu_cost_per_tuple: u32,
    ) -> Result<OpId> {
        let schema = self.input_schema(&input)?;
        let predicate = predicate.validate(&schema)?;
        let output = projection.output_schema(&schema)?;
        Ok(self.push(
            name,
            OperatorKind::Select {
                predicate,
                projection,
                cpu_cost_per_tuple,
            },
            input,
            schema,
            output,
        ))
    }

    pub fn build_hash(
        &mut self,
        input: Input,
        key_columns: Vec<usize>,
        payload_columns: Vec<usize>,
        config: HashTableConfig,
    ) -> Result<OpId> {
        self.build_hash_named(None, input, key_columns, payload_columns, config)
    }

    pub fn build_hash_named(
        &mut self,
        name: Option<String>,
        input: Input,
        key_columns: Vec<usize>,
        payload_columns: Vec<usize>,
        config: HashTableConfig,
    ) -> Result<OpId> {
        let schema = self.input_schema(&input)?;
        if key_columns.is_empty() {
            return Err(Error::InvalidPlan("hash build needs at least one key column".into()));
        }
        config.validate()?;
        schema.project(&key_columns)?;
        let payload = if payload_columns.is_empty() {
            // Schemas cannot be empty; a payload-less table keeps a
            // zero-column view represented by the key itself.
            schema.project(&key_columns)?
        } else {
            schema.project(&payload_columns)?
        };
        let payload_columns = if payload_columns.is_empty() {
            key_columns.clone()
        } else {
            payload_columns
        };
        Ok(self.push(
            name,
            OperatorKind::BuildHash {
                key_columns,
                payload_columns,
                config,
            },
            input,
            schema,
            payload,
        ))
    }

    pub fn probe_hash(&mut self, build: OpId, input: Input, key_columns: Vec<usize>, projection: Projection) -> Result<OpId> {
        self.probe_hash_named(None, build, input, key_columns, projection)
    }

    pub fn probe_hash_named(
        &mut self,
        name: Option<String>,
        build: OpId,
        input: Input,
        key_columns: Vec<usize>,
        projection: Projection,
    ) -> Result<OpId> {
        let schema = self.input_schema(&input)?;
        let build_node = self.nodes.get(build).ok_or(Error::UnknownOperator(build))?;
        let OperatorKind::BuildHash {
            key_columns: build_keys,
            ..
        } = &build_node.kind
        else {
            return Err(Error::InvalidPlan(format!(
                "probe references `{}`, which is not a hash build",
                build_node.name
            )));
        };
        if build_keys.len() != key_columns.len() {
            return Err(Error::SchemaMismatch(format!(
                "probe uses {} key columns, build uses {}",
                key_columns.len(),
                build_keys.len()
            )));
        }
        for (&p, &b) in key_columns.iter().zip(build_keys) {
            let pt = schema.column(p)?.ty;
            let bt = build_node.input_schema.ty(b);
            if pt != bt {
                return Err(Error::SchemaMismatch(format!(
                    "probe key type {pt} does not match build key type {bt}"
                )));
            }
        }
        let joined = joined_schema(&schema, build_node);
        let output = projection.output_schema(&joined)?;
        Ok(self.push(
            name,
            OperatorKind::ProbeHash {
                build,
                key_columns,
                projection,
            },
            input,
            schema,
            output,
        ))
    }

    pub fn aggregate(&mut self, input: Input, group_by: Vec<usize>, aggregates: Vec<AggregateExpr>) -> Result<OpId> {
        self.aggregate_named(None, input, group_by, aggregates)
    }

    pub fn aggregate_named(
        &mut self,
        name: Option<String>,
        input: Input,
        group_by: Vec<usize>,
        aggregates: Vec<AggregateExpr>,
    ) -> Result<OpId> {
        let schema = self.input_schema(&input)?;
        let mut cols: Vec<Column> = group_by
            .iter()
            .map(|&g| schema.column(g).cloned())
            .collect::<Result<_>>()?;
        for a in &aggregates {
            let ty = match (a.func, a.column) {
                (AggregateFn::Count, _) => ColumnType::Int64,
                (_, None) => {
                    return Err(Error::InvalidPlan(format!("aggregate `{}` needs a column", a.name)))
                }
                (AggregateFn::Sum, Some(c)) => {
                    let ty = schema.column(c)?.ty;
                    if !ty.is_numeric() {
                        return Err(Error::SchemaMismatch(format!("SUM over non-numeric column {c}")));
                    }
                    ty
                }
                (AggregateFn::Min | AggregateFn::Max, Some(c)) => schema.column(c)?.ty,
            };
            cols.push(Column::new(a.name.clone(), ty));
        }
        let output = Schema::new(cols)
            .map_err(|_| Error::InvalidPlan("aggregate must output at least one column".into()))?;
        Ok(self.push(
            name,
            OperatorKind::Aggregate {
                group_by,
                aggregates,
            },
            input,
            schema,
            output,
        ))
    }

    /// Validates the whole graph. Without an explicit sink the unique
    /// operator with no consumers is the sink.
    pub fn finish(self, sink: Option<OpId>) -> Result<PlanDag> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidPlan("plan has no operators".into()));
        }
        let mut edges = Vec::new();
        for n in &self.nodes {
            if let Input::Operator(p) = n.input {
                edges.push(Edge {
                    from: p,
                    to: n.id,
                    kind: self.nodes[p].out_edge_kind(),
                });
            }
            if let OperatorKind::ProbeHash { build, .. } = n.kind {
                edges.push(Edge {
                    from: build,
                    to: n.id,
                    kind: EdgeKind::Blocking,
                });
            }
        }
        let mut fanout: HashMap<OpId, usize> = HashMap::new();
        for e in &edges {
            *fanout.entry(e.from).or_default() += 1;
        }
        let leaves: Vec<OpId> = (0..self.nodes.len()).filter(|i| !fanout.contains_key(i)).collect();
        let sink = match sink {
            Some(s) => {
                if s >= self.nodes.len() {
                    return Err(Error::UnknownOperator(s));
                }
                if leaves != [s] {
                    return Err(Error::InvalidPlan(format!(
                        "sink must be the only operator without consumers; found {leaves:?}"
                    )));
                }
                s
            }
            None => match leaves.as_slice() {
                [s] => *s,
                _ => {
                    return Err(Error::InvalidPlan(format!(
                        "plan must have exactly one sink; found {leaves:?}"
                    )))
                }
            },
        };
        if !self.nodes[sink].produces_tuples() {
            return Err(Error::InvalidPlan("a hash build cannot be the sink".into()));
        }
        Ok(PlanDag {
            nodes: self.nodes,
            edges,
            sink,
        })
    }
}

/// Schema a probe's projection is evaluated over: probe columns followed by
/// the build payload columns, the latter prefixed with the build's name.
pub fn joined_schema(probe_input: &Schema, build: &OperatorNode) -> Schema {
    let payload = Schema::new(
        build
            .output_schema
            .columns()
            .iter()
            .map(|c| Column::new(format!("{}.{}", build.name, c.name), c.ty))
            .collect(),
    )
    .expect("payload schema is non-empty");
    probe_input.concat(&payload)
}

/// One join stage of a left-deep cascade.
#[derive(Debug, Clone)]
pub struct JoinSpec {
    pub build_table: String,
    pub build_key: Vec<usize>,
    pub probe_key: Vec<usize>,
    /// Over `previous output ++ all build-table columns`.
    pub post_projection: Projection,
}

/// `Select(base) -> Probe_1 -> ... -> Probe_n`, with `BuildHash_i` on each
/// build table feeding `Probe_i` through a blocking edge. The build payload
/// is every column of the build table.
pub fn build_left_deep_plan(
    catalog: &Catalog,
    base: &TableHandle,
    predicate: Predicate,
    projection: Projection,
    joins: &[JoinSpec],
    hash_config: HashTableConfig,
) -> Result<PlanDag> {
    let mut b = PlanBuilder::new(catalog);
    let mut cur = b.select_named(Some("select".into()), Input::table(&base.name), predicate, projection, 0)?;
    for (i, j) in joins.iter().enumerate() {
        let build_schema = catalog.table(&j.build_table)?.schema().clone();
        let build = b.build_hash_named(
            Some(format!("build_{}", i + 1)),
            Input::table(&j.build_table),
            j.build_key.clone(),
            (0..build_schema.len()).collect(),
            hash_config,
        )?;
        cur = b.probe_hash_named(
            Some(format!("probe_{}", i + 1)),
            build,
            Input::op(cur),
            j.probe_key.clone(),
            j.post_projection.clone(),
        )?;
    }
    b.finish(Some(cur))
}
