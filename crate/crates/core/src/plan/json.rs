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

//! JSON plan files. The format is documented in `docs/plan-format.md`.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value as Json;

use super::{
    AggregateExpr, AggregateFn, Atom, Comparator, Expr, HashTableConfig, Input, OpId, PlanBuilder,
    PlanDag, Predicate, Projection,
};
use crate::error::{Error, Result};
use crate::storage::{Catalog, Schema, Value};

/// A column named either by position or by name.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl ColumnRef {
    pub fn resolve(&self, schema: &Schema) -> Result<usize> {
        match self {
            ColumnRef::Index(i) => {
                schema.column(*i)?;
                Ok(*i)
            }
            ColumnRef::Name(n) => schema
                .index_of(n)
                .ok_or_else(|| Error::InvalidPlan(format!("no column `{n}` in ({schema})"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub column: ColumnRef,
    pub op: Comparator,
    pub value: Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionItemSpec {
    pub name: Option<String>,
    pub expr: Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateSpec {
    #[serde(rename = "fn")]
    pub func: AggregateFn,
    pub column: Option<ColumnRef>,
    pub name: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Select {
        name: String,
        input: String,
        #[serde(default)]
        predicate: Vec<AtomSpec>,
        projection: Option<Vec<ProjectionItemSpec>>,
        #[serde(default)]
        cpu_cost_per_tuple: u32,
    },
    BuildHash {
        name: String,
        input: String,
        keys: Vec<ColumnRef>,
        #[serde(default)]
        payload: Vec<ColumnRef>,
        load_factor: Option<f64>,
        bucket_bytes: Option<usize>,
        initial_buckets: Option<usize>,
    },
    ProbeHash {
        name: String,
        input: String,
        build: String,
        keys: Vec<ColumnRef>,
        projection: Option<Vec<ProjectionItemSpec>>,
    },
    Aggregate {
        name: String,
        input: String,
        #[serde(default)]
        group_by: Vec<ColumnRef>,
        aggregates: Vec<AggregateSpec>,
    },
}

impl OperatorSpec {
    fn name(&self) -> &str {
        match self {
            OperatorSpec::Select { name, .. }
            | OperatorSpec::BuildHash { name, .. }
            | OperatorSpec::ProbeHash { name, .. }
            | OperatorSpec::Aggregate { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub operators: Vec<OperatorSpec>,
    pub sink: Option<String>,
}

impl PlanSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidPlan(format!("plan file: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Resolves names against the catalog and validates the plan.
    pub fn resolve(&self, catalog: &Catalog) -> Result<PlanDag> {
        let mut builder = PlanBuilder::new(catalog);
        let mut ids: HashMap<String, OpId> = HashMap::new();
        let mut schemas: HashMap<String, Schema> = HashMap::new();

        for spec in &self.operators {
            let name = spec.name().to_string();
            if ids.contains_key(&name) {
                return Err(Error::InvalidPlan(format!("duplicate operator name `{name}`")));
            }
            let input_of = |s: &str| -> Result<(Input, Schema)> {
                if let Some(&id) = ids.get(s) {
                    Ok((Input::op(id), schemas[s].clone()))
                } else {
                    let t = catalog.table(s)?;
                    Ok((Input::table(s), (**t.schema()).clone()))
                }
            };
            let id = match spec {
                OperatorSpec::Select {
                    input,
                    predicate,
                    projection,
                    cpu_cost_per_tuple,
                    ..
                } => {
                    let (input, schema) = input_of(input)?;
                    let pred = resolve_predicate(predicate, &schema)?;
                    let proj = resolve_projection(projection.as_deref(), &schema)?;
                    builder.select_named(Some(name.clone()), input, pred, proj, *cpu_cost_per_tuple)?
                }
                OperatorSpec::BuildHash {
                    input,
                    keys,
                    payload,
                    load_factor,
                    bucket_bytes,
                    initial_buckets,
                    ..
                } => {
                    let (input, schema) = input_of(input)?;
                    let defaults = HashTableConfig::default();
                    let config = HashTableConfig {
                        load_factor: load_factor.unwrap_or(defaults.load_factor),
                        bucket_bytes: *bucket_bytes,
                        initial_buckets: initial_buckets.unwrap_or(defaults.initial_buckets),
                    };
                    builder.build_hash_named(
                        Some(name.clone()),
                        input,
                        resolve_columns(keys, &schema)?,
                        resolve_columns(payload, &schema)?,
                        config,
                    )?
                }
                OperatorSpec::ProbeHash {
                    input,
                    build,
                    keys,
                    projection,
                    ..
                } => {
                    let (input, schema) = input_of(input)?;
                    let &build_id = ids
                        .get(build)
                        .ok_or_else(|| Error::InvalidPlan(format!("unknown build operator `{build}`")))?;
                    let joined = super::joined_schema(&schema, builder.node(build_id)?);
                    let proj = resolve_projection(projection.as_deref(), &joined)?;
                    builder.probe_hash_named(
                        Some(name.clone()),
                        build_id,
                        input,
                        resolve_columns(keys, &schema)?,
                        proj,
                    )?
                }
                OperatorSpec::Aggregate {
                    input,
                    group_by,
                    aggregates,
                    ..
                } => {
                    let (input, schema) = input_of(input)?;
                    let aggs = aggregates
                        .iter()
                        .enumerate()
                        .map(|(i, a)| {
                            let column = a.column.as_ref().map(|c| c.resolve(&schema)).transpose()?;
                            let default = match a.func {
                                AggregateFn::Count => "count".to_string(),
                                AggregateFn::Sum => format!("sum_{i}"),
                                AggregateFn::Min => format!("min_{i}"),
                                AggregateFn::Max => format!("max_{i}"),
                            };
                            Ok(AggregateExpr::new(a.func, column, a.name.clone().unwrap_or(default)))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    builder.aggregate_named(Some(name.clone()), input, resolve_columns(group_by, &schema)?, aggs)?
                }
            };
            schemas.insert(name.clone(), (*builder.node(id)?.output_schema).clone());
            ids.insert(name, id);
        }
        let sink = match &self.sink {
            Some(s) => Some(
                *ids.get(s)
                    .ok_or_else(|| Error::InvalidPlan(format!("unknown sink `{s}`")))?,
            ),
            None => None,
        };
        builder.finish(sink)
    }
}

fn resolve_columns(cols: &[ColumnRef], schema: &Schema) -> Result<Vec<usize>> {
    cols.iter().map(|c| c.resolve(schema)).collect()
}

fn json_literal(v: &Json) -> Result<Value> {
    match v {
        Json::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Value::Int(i))
            } else {
                n.as_f64()
                    .map(Value::Float)
                    .ok_or_else(|| Error::InvalidPlan(format!("unsupported number {n}")))
            }
        }
        Json::String(s) => Ok(Value::Bytes(s.as_bytes().to_vec())),
        other => Err(Error::InvalidPlan(format!("unsupported literal {other}"))),
    }
}

fn resolve_predicate(atoms: &[AtomSpec], schema: &Schema) -> Result<Predicate> {
    atoms
        .iter()
        .map(|a| Ok(Atom::new(a.column.resolve(schema)?, a.op, json_literal(&a.value)?)))
        .collect::<Result<Vec<_>>>()
        .map(Predicate::new)
}

/// Expression syntax: a number is a literal, a string names a column,
/// `{"col": i}` is a column by index, `{"add"|"sub"|"mul": [lhs, rhs]}` is
/// arithmetic.
pub fn parse_expr(v: &Json, schema: &Schema) -> Result<Expr> {
    match v {
        Json::Number(_) => Ok(Expr::Literal(json_literal(v)?)),
        Json::String(s) => Ok(Expr::Column(ColumnRef::Name(s.clone()).resolve(schema)?)),
        Json::Object(map) if map.len() == 1 => {
            let (k, arg) = map.iter().next().expect("one entry");
            let binary = |f: fn(Expr, Expr) -> Expr| -> Result<Expr> {
                match arg {
                    Json::Array(xs) if xs.len() == 2 => Ok(f(parse_expr(&xs[0], schema)?, parse_expr(&xs[1], schema)?)),
                    _ => Err(Error::InvalidPlan(format!("`{k}` takes two operands"))),
                }
            };
            match k.as_str() {
                "col" => {
                    let c: ColumnRef = serde_json::from_value(arg.clone())
                        .map_err(|e| Error::InvalidPlan(format!("bad column reference: {e}")))?;
                    Ok(Expr::Column(c.resolve(schema)?))
                }
                "add" => binary(Expr::add),
                "sub" => binary(Expr::sub),
                "mul" => binary(Expr::mul),
                other => Err(Error::InvalidPlan(format!("unknown expression `{other}`"))),
            }
        }
        other => Err(Error::InvalidPlan(format!("unsupported expression {other}"))),
    }
}

fn resolve_projection(items: Option<&[ProjectionItemSpec]>, schema: &Schema) -> Result<Projection> {
    let Some(items) = items else {
        return Ok(Projection::identity(schema));
    };
    let mut proj = Projection::default();
    for (i, it) in items.iter().enumerate() {
        let expr = parse_expr(&it.expr, schema)?;
        let name = match (&it.name, &expr) {
            (Some(n), _) => n.clone(),
            (None, Expr::Column(c)) => schema.columns()[*c].name.clone(),
            (None, _) => format!("expr_{i}"),
        };
        proj = proj.with(name, expr);
    }
    Ok(proj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::OperatorKind;
    use crate::storage::Layout;

    fn catalog() -> Catalog {
        let mut c = Catalog::new();
        c.create_table(
            "lineitem",
            Schema::parse("orderkey:int,price:float,discount:float,flag:int").unwrap(),
            Layout::RowStore,
            4096,
        )
        .unwrap();
        c.create_table("orders", Schema::parse("orderkey:int,prio:int").unwrap(), Layout::RowStore, 4096)
            .unwrap();
        c
    }

    const PLAN: &str = r#"{
      "operators": [
        {"type": "select", "name": "sel", "input": "lineitem",
         "predicate": [{"column": "flag", "op": "<", "value": 10}],
         "projection": [{"expr": "orderkey"},
                        {"name": "rev", "expr": {"mul": ["price", {"sub": [1, "discount"]}]}}]},
        {"type": "build_hash", "name": "b", "input": "orders", "keys": ["orderkey"], "payload": ["prio"]},
        {"type": "probe_hash", "name": "p", "input": "sel", "build": "b", "keys": [0],
         "projection": [{"expr": "b.prio"}, {"expr": "rev"}]},
        {"type": "aggregate", "name": "agg", "input": "p", "group_by": ["b.prio"],
         "aggregates": [{"fn": "sum", "column": "rev", "name": "revenue"}, {"fn": "count"}]}
      ]
    }"#;

    #[test]
    fn parses_full_plan() {
        let c = catalog();
        let plan = PlanSpec::from_json(PLAN).unwrap().resolve(&c).unwrap();
        assert_eq!(plan.len(), 4);
        assert_eq!(plan.node(plan.sink()).unwrap().name, "agg");
        let sel = plan.node(0).unwrap();
        assert_eq!(sel.output_schema.to_string(), "orderkey:int,rev:float");
        match &sel.kind {
            OperatorKind::Select { predicate, .. } => {
                assert_eq!(predicate.atoms[0].literal, Value::Int(10))
            }
            _ => panic!("expected select"),
        }
        assert_eq!(
            plan.node(plan.sink()).unwrap().output_schema.to_string(),
            "b.prio:int,revenue:float,count:int"
        );
    }

    #[test]
    fn unknown_column_rejected() {
        let c = catalog();
        let text = PLAN.replace("\"flag\"", "\"nope\"");
        assert!(PlanSpec::from_json(&text).unwrap().resolve(&c).is_err());
    }

    #[test]
    fn unknown_field_rejected() {
        let text = r#"{"operators": [{"type": "select", "name": "s", "input": "t", "bogus": 1}]}"#;
        assert!(PlanSpec::from_json(text).is_err());
    }

    #[test]
    fn missing_projection_is_identity() {
        let c = catalog();
        let text = r#"{"operators": [{"type": "select", "name": "s", "input": "orders"}]}"#;
        let plan = PlanSpec::from_json(text).unwrap().resolve(&c).unwrap();
        assert_eq!(plan.node(0).unwrap().output_schema.to_string(), "orderkey:int,prio:int");
    }
}
