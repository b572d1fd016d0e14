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

//! Predicates and projection expressions evaluated by select and probe
//! operators.
//!
//! Integer arithmetic saturates; floating point follows IEEE semantics.
//! An expression mixing an integer and a float is evaluated in floating point.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::storage::{read_f64, read_i64, Column, ColumnType, Fields, Schema, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "!=")]
    Ne,
}

impl Comparator {
    pub const ALL: [Comparator; 6] = [
        Comparator::Lt,
        Comparator::Le,
        Comparator::Eq,
        Comparator::Ge,
        Comparator::Gt,
        Comparator::Ne,
    ];

    #[inline]
    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            Comparator::Lt => ord == Ordering::Less,
            Comparator::Le => ord != Ordering::Greater,
            Comparator::Eq => ord == Ordering::Equal,
            Comparator::Ge => ord != Ordering::Less,
            Comparator::Gt => ord == Ordering::Greater,
            Comparator::Ne => ord != Ordering::Equal,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
            Comparator::Ne => "!=",
        }
    }
}

/// `column <cmp> literal`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub column: usize,
    pub cmp: Comparator,
    pub literal: Value,
}

impl Atom {
    pub fn new(column: usize, cmp: Comparator, literal: impl Into<Value>) -> Self {
        Atom {
            column,
            cmp,
            literal: literal.into(),
        }
    }
}

/// Conjunction of atoms. The empty conjunction is true.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predicate {
    pub atoms: Vec<Atom>,
}

impl Predicate {
    pub fn always_true() -> Self {
        Predicate::default()
    }

    pub fn new(atoms: Vec<Atom>) -> Self {
        Predicate { atoms }
    }

    pub fn and(mut self, atom: Atom) -> Self {
        self.atoms.push(atom);
        self
    }

    /// Checks column indices and coerces each literal to its column type.
    /// Integer literals compared with float columns become floats; byte
    /// literals are zero padded to the column width.
    pub fn validate(&self, schema: &Schema) -> Result<Predicate> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                let ty = schema.column(a.column)?.ty;
                let literal = match (&a.literal, ty) {
                    (Value::Int(v), ColumnType::Float64) => Value::Float(*v as f64),
                    (Value::Bytes(b), ColumnType::Bytes(n)) if b.len() <= n => {
                        let mut p = b.clone();
                        p.resize(n, 0);
                        Value::Bytes(p)
                    }
                    (v, ty) if v.fits(ty) => v.clone(),
                    (v, ty) => {
                        return Err(Error::SchemaMismatch(format!(
                            "literal {v} cannot be compared with column `{}` of type {ty}",
                            schema.columns()[a.column].name
                        )))
                    }
                };
                Ok(Atom {
                    column: a.column,
                    cmp: a.cmp,
                    literal,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Predicate { atoms })
    }

    /// Evaluates over raw fields. The predicate must have been validated
    /// against the tuple's schema.
    #[inline]
    pub fn eval_fields<F: Fields + ?Sized>(&self, tuple: &F) -> bool {
        self.atoms.iter().all(|a| {
            let field = tuple.field(a.column);
            let ord = match &a.literal {
                Value::Int(v) => read_i64(field).cmp(v),
                Value::Float(v) => read_f64(field).total_cmp(v),
                Value::Bytes(b) => field.cmp(b.as_slice()),
            };
            a.cmp.holds(ord)
        })
    }
}

/// True iff every atom holds on the decoded tuple.
pub fn eval_predicate(predicate: &Predicate, tuple: &[Value]) -> bool {
    predicate
        .atoms
        .iter()
        .all(|a| a.cmp.holds(tuple[a.column].cmp(&a.literal)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    fn apply_int(self, a: i64, b: i64) -> i64 {
        match self {
            ArithOp::Add => a.saturating_add(b),
            ArithOp::Sub => a.saturating_sub(b),
            ArithOp::Mul => a.saturating_mul(b),
        }
    }

    fn apply_float(self, a: f64, b: f64) -> f64 {
        match self {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Mul => a * b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(usize),
    Literal(Value),
    Binary {
        op: ArithOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    pub fn col(i: usize) -> Expr {
        Expr::Column(i)
    }

    pub fn lit(v: impl Into<Value>) -> Expr {
        Expr::Literal(v.into())
    }

    pub fn binary(op: ArithOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn add(self, rhs: Expr) -> Expr {
        Expr::binary(ArithOp::Add, self, rhs)
    }

    pub fn sub(self, rhs: Expr) -> Expr {
        Expr::binary(ArithOp::Sub, self, rhs)
    }

    pub fn mul(self, rhs: Expr) -> Expr {
        Expr::binary(ArithOp::Mul, self, rhs)
    }

    /// Result type of the expression over `schema`.
    pub fn result_type(&self, schema: &Schema) -> Result<ColumnType> {
        match self {
            Expr::Column(i) => Ok(schema.column(*i)?.ty),
            Expr::Literal(v) => Ok(v.column_type()),
            Expr::Binary { lhs, rhs, .. } => {
                let (l, r) = (lhs.result_type(schema)?, rhs.result_type(schema)?);
                match (l, r) {
                    (ColumnType::Int64, ColumnType::Int64) => Ok(ColumnType::Int64),
                    (a, b) if a.is_numeric() && b.is_numeric() => Ok(ColumnType::Float64),
                    _ => Err(Error::SchemaMismatch(format!(
                        "arithmetic on non-numeric operands ({l}, {r})"
                    ))),
                }
            }
        }
    }

    fn eval_numeric<S: FieldSource + ?Sized>(&self, src: &S) -> Numeric {
        match self {
            Expr::Column(i) => src.numeric(*i),
            Expr::Literal(Value::Int(v)) => Numeric::Int(*v),
            Expr::Literal(Value::Float(v)) => Numeric::Float(*v),
            Expr::Literal(Value::Bytes(_)) => unreachable!("validated: bytes in arithmetic"),
            Expr::Binary { op, lhs, rhs } => {
                match (lhs.eval_numeric(src), rhs.eval_numeric(src)) {
                    (Numeric::Int(a), Numeric::Int(b)) => Numeric::Int(op.apply_int(a, b)),
                    (a, b) => Numeric::Float(op.apply_float(a.as_f64(), b.as_f64())),
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(i) => write!(f, "#{i}"),
            Expr::Literal(v) => write!(f, "{v}"),
            Expr::Binary { op, lhs, rhs } => {
                let sym = match op {
                    ArithOp::Add => "+",
                    ArithOp::Sub => "-",
                    ArithOp::Mul => "*",
                };
                write!(f, "({lhs} {sym} {rhs})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Numeric {
    Int(i64),
    Float(f64),
}

impl Numeric {
    fn as_f64(self) -> f64 {
        match self {
            Numeric::Int(v) => v as f64,
            Numeric::Float(v) => v,
        }
    }
}

trait FieldSource {
    fn numeric(&self, col: usize) -> Numeric;
}

struct RawSource<'a, F: ?Sized> {
    fields: &'a F,
    schema: &'a Schema,
}

impl<F: Fields + ?Sized> FieldSource for RawSource<'_, F> {
    #[inline]
    fn numeric(&self, col: usize) -> Numeric {
        let b = self.fields.field(col);
        match self.schema.ty(col) {
            ColumnType::Int64 => Numeric::Int(read_i64(b)),
            ColumnType::Float64 => Numeric::Float(read_f64(b)),
            ColumnType::Bytes(_) => unreachable!("validated: bytes in arithmetic"),
        }
    }
}

impl FieldSource for [Value] {
    fn numeric(&self, col: usize) -> Numeric {
        match &self[col] {
            Value::Int(v) => Numeric::Int(*v),
            Value::Float(v) => Numeric::Float(*v),
            Value::Bytes(_) => unreachable!("validated: bytes in arithmetic"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionItem {
    pub name: String,
    pub expr: Expr,
}

/// Ordered output expressions of a select or probe.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Projection {
    pub items: Vec<ProjectionItem>,
}

impl Projection {
    pub fn new(items: Vec<ProjectionItem>) -> Self {
        Projection { items }
    }

    /// Every input column, unchanged.
    pub fn identity(schema: &Schema) -> Self {
        Self::columns(schema, &(0..schema.len()).collect::<Vec<_>>())
    }

    /// A pure column subset, keeping input column names.
    pub fn columns(schema: &Schema, cols: &[usize]) -> Self {
        Projection {
            items: cols
                .iter()
                .map(|&i| ProjectionItem {
                    name: schema.columns()[i].name.clone(),
                    expr: Expr::Column(i),
                })
                .collect(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, expr: Expr) -> Self {
        self.items.push(ProjectionItem {
            name: name.into(),
            expr,
        });
        self
    }

    pub fn is_pure_column_subset(&self) -> bool {
        self.items.iter().all(|i| matches!(i.expr, Expr::Column(_)))
    }

    /// Validates against the input schema and returns the output schema.
    pub fn output_schema(&self, input: &Schema) -> Result<Schema> {
        if self.items.is_empty() {
            return Err(Error::InvalidPlan("projection must produce at least one column".into()));
        }
        let cols = self
            .items
            .iter()
            .map(|it| {
                if let Expr::Literal(Value::Bytes(_)) = it.expr {
                    return Err(Error::InvalidPlan("byte-string literals cannot be projected".into()));
                }
                Ok(Column::new(it.name.clone(), it.expr.result_type(input)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Schema::new(cols)
    }
}

/// Evaluates a projection over a decoded tuple.
pub fn eval_projection(projection: &Projection, tuple: &[Value]) -> Vec<Value> {
    projection
        .items
        .iter()
        .map(|it| match &it.expr {
            Expr::Column(i) => tuple[*i].clone(),
            Expr::Literal(v) => v.clone(),
            e => match e.eval_numeric(tuple) {
                Numeric::Int(v) => Value::Int(v),
                Numeric::Float(v) => Value::Float(v),
            },
        })
        .collect()
}

/// A projection bound to concrete input and output schemas, writing
/// straight into block slots without decoding to [`Value`]s.
#[derive(Debug, Clone)]
pub struct CompiledProjection {
    items: Vec<CompiledItem>,
    input: Schema,
}

#[derive(Debug, Clone)]
enum CompiledItem {
    Copy(usize),
    Constant(Vec<u8>),
    Compute { expr: Expr, ty: ColumnType },
}

impl CompiledProjection {
    pub fn compile(projection: &Projection, input: &Schema) -> Result<(Self, Schema)> {
        let output = projection.output_schema(input)?;
        let items = projection
            .items
            .iter()
            .zip(output.columns())
            .map(|(it, col)| match &it.expr {
                Expr::Column(i) => CompiledItem::Copy(*i),
                Expr::Literal(v) => {
                    let mut buf = vec![0u8; col.width()];
                    v.encode_into(&mut buf);
                    CompiledItem::Constant(buf)
                }
                e => CompiledItem::Compute {
                    expr: e.clone(),
                    ty: col.ty,
                },
            })
            .collect();
        Ok((
            CompiledProjection {
                items,
                input: input.clone(),
            },
            output,
        ))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Evaluates output column `i` and hands its encoded bytes to `sink`.
    #[inline]
    pub fn eval_into<F: Fields + ?Sized>(&self, tuple: &F, mut sink: impl FnMut(usize, &[u8])) {
        for (i, item) in self.items.iter().enumerate() {
            match item {
                CompiledItem::Copy(c) => sink(i, tuple.field(*c)),
                CompiledItem::Constant(b) => sink(i, b),
                CompiledItem::Compute { expr, ty } => {
                    let src = RawSource {
                        fields: tuple,
                        schema: &self.input,
                    };
                    let bytes = match (expr.eval_numeric(&src), ty) {
                        (Numeric::Int(v), ColumnType::Int64) => v.to_le_bytes(),
                        (n, _) => n.as_f64().to_bits().to_le_bytes(),
                    };
                    sink(i, &bytes);
                }
            }
        }
    }
}
