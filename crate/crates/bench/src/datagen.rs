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

//! Seeded synthetic tables with exactly controlled selectivity.
//!
//! A fact table has the layout
//! `key:int, flag:int, price:float, discount:float[, proj:bytesP][, pad:bytesQ]`.
//! `flag` is a permutation of `0..rows`, so `flag < threshold` passes
//! exactly `threshold` rows. The canonical projection keeps `key` and
//! `proj`, which together are `projected_bytes` wide.
//!
//! A dimension table is `key:int, val:int[, pad:bytesQ]` with unique keys
//! `0..rows` in shuffled order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use uot_core::plan::{Atom, Comparator, Predicate, Projection};
use uot_core::storage::{Catalog, Column, ColumnType, Layout, Schema, TableHandle, Value};
use uot_core::{Error, Result};

const FIXED_FACT_WIDTH: usize = 32;
const KEY_WIDTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactSpec {
    pub name: String,
    pub rows: usize,
    /// Bytes per tuple, at least 32 plus the projected bytes beyond the key.
    pub tuple_width: usize,
    /// Fraction of rows the canonical predicate passes.
    pub selectivity: f64,
    /// Bytes kept by the canonical projection, at least the 8-byte key.
    pub projected_bytes: usize,
    /// Keys are drawn uniformly from `0..key_cardinality`.
    pub key_cardinality: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionSpec {
    pub name: String,
    pub rows: usize,
    #[serde(default = "default_dimension_width")]
    pub tuple_width: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_dimension_width() -> usize {
    16
}

/// A fact table's rows and the predicate threshold picked from them.
#[derive(Debug, Clone)]
pub struct FactData {
    pub schema: Schema,
    pub rows: Vec<Vec<Value>>,
    pub threshold: i64,
    pub passing_rows: usize,
}

#[derive(Debug, Clone)]
pub struct GeneratedTable {
    pub handle: TableHandle,
    pub threshold: i64,
    pub passing_rows: usize,
}

impl FactSpec {
    fn proj_width(&self) -> usize {
        self.projected_bytes.saturating_sub(KEY_WIDTH)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.selectivity) {
            return Err(Error::InvalidSpec(format!("selectivity {} outside [0, 1]", self.selectivity)));
        }
        if self.projected_bytes < KEY_WIDTH {
            return Err(Error::InvalidSpec("projected bytes must cover the 8-byte key".into()));
        }
        if self.tuple_width < FIXED_FACT_WIDTH + self.proj_width() {
            return Err(Error::InvalidSpec(format!(
                "tuple width {} too small for {} projected bytes",
                self.tuple_width, self.projected_bytes
            )));
        }
        if self.key_cardinality == 0 {
            return Err(Error::InvalidSpec("key cardinality must be positive".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<Schema> {
        self.validate()?;
        let mut cols = vec![
            Column::new("key", ColumnType::Int64),
            Column::new("flag", ColumnType::Int64),
            Column::new("price", ColumnType::Float64),
            Column::new("discount", ColumnType::Float64),
        ];
        if self.proj_width() > 0 {
            cols.push(Column::new("proj", ColumnType::Bytes(self.proj_width())));
        }
        let pad = self.tuple_width - FIXED_FACT_WIDTH - self.proj_width();
        if pad > 0 {
            cols.push(Column::new("pad", ColumnType::Bytes(pad)));
        }
        Schema::new(cols)
    }

    /// `flag < threshold`.
    pub fn canonical_predicate(threshold: i64) -> Predicate {
        Predicate::new(vec![Atom::new(1, Comparator::Lt, threshold)])
    }

    /// `key` plus `proj` when present.
    pub fn canonical_projection(&self, schema: &Schema) -> Projection {
        let cols: Vec<usize> = if self.proj_width() > 0 { vec![0, 4] } else { vec![0] };
        Projection::columns(schema, &cols)
    }

    pub fn generate(&self) -> Result<FactData> {
        let schema = self.schema()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut flags: Vec<i64> = (0..self.rows as i64).collect();
        flags.shuffle(&mut rng);
        let pw = self.proj_width();
        let pad = self.tuple_width - FIXED_FACT_WIDTH - pw;
        let rows: Vec<Vec<Value>> = flags
            .iter()
            .enumerate()
            .map(|(i, &flag)| {
                let mut t = vec![
                    Value::Int(rng.gen_range(0..self.key_cardinality) as i64),
                    Value::Int(flag),
                    Value::Float(rng.gen_range(100..=10_000_000) as f64 / 100.0),
                    Value::Float(rng.gen_range(0..=10) as f64 / 100.0),
                ];
                if pw > 0 {
                    t.push(Value::Bytes(label(b'p', i, pw)));
                }
                if pad > 0 {
                    t.push(Value::Bytes(label(b'x', i, pad)));
                }
                t
            })
            .collect();
        let (threshold, passing_rows) = pick_threshold(&flags, self.selectivity);
        Ok(FactData { schema, rows, threshold, passing_rows })
    }
}

/// Picks the threshold from the sorted flag column so that
/// `flag < threshold` passes `round(s · rows)` rows.
fn pick_threshold(flags: &[i64], selectivity: f64) -> (i64, usize) {
    let target = (selectivity * flags.len() as f64).round() as usize;
    let mut sorted = flags.to_vec();
    sorted.sort_unstable();
    let threshold = match sorted.get(target) {
        Some(&t) => t,
        None => sorted.last().map_or(0, |&m| m + 1),
    };
    let passing = sorted.partition_point(|&f| f < threshold);
    (threshold, passing)
}

fn label(prefix: u8, i: usize, width: usize) -> Vec<u8> {
    let mut s = format!("{}{i}", prefix as char).into_bytes();
    s.truncate(width);
    s
}

impl DimensionSpec {
    pub fn schema(&self) -> Result<Schema> {
        if self.tuple_width < 16 {
            return Err(Error::InvalidSpec("dimension tuples are at least 16 bytes".into()));
        }
        let mut cols = vec![Column::new("key", ColumnType::Int64), Column::new("val", ColumnType::Int64)];
        if self.tuple_width > 16 {
            cols.push(Column::new("pad", ColumnType::Bytes(self.tuple_width - 16)));
        }
        Schema::new(cols)
    }

    pub fn generate(&self) -> Result<(Schema, Vec<Vec<Value>>)> {
        let schema = self.schema()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut keys: Vec<i64> = (0..self.rows as i64).collect();
        keys.shuffle(&mut rng);
        let pad = self.tuple_width - 16;
        let rows = keys
            .into_iter()
            .map(|k| {
                let mut t = vec![Value::Int(k), Value::Int(rng.gen_range(0..1_000_000))];
                if pad > 0 {
                    t.push(Value::Bytes(label(b'd', k as usize, pad)));
                }
                t
            })
            .collect();
        Ok((schema, rows))
    }
}

/// Generates a fact table straight into `catalog`.
pub fn gen_table(catalog: &mut Catalog, spec: &FactSpec, layout: Layout, block_size: usize) -> Result<GeneratedTable> {
    let data = spec.generate()?;
    catalog.create_table(&spec.name, data.schema, layout, block_size)?;
    catalog.insert_tuples(&spec.name, &data.rows)?;
    Ok(GeneratedTable { handle: catalog.handle(&spec.name)?, threshold: data.threshold, passing_rows: data.passing_rows })
}

pub fn gen_dimension(catalog: &mut Catalog, spec: &DimensionSpec, layout: Layout, block_size: usize) -> Result<TableHandle> {
    let (schema, rows) = spec.generate()?;
    catalog.create_table(&spec.name, schema, layout, block_size)?;
    catalog.insert_tuples(&spec.name, &rows)?;
    catalog.handle(&spec.name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uot_core::plan::eval_predicate;

    fn spec(rows: usize, s: f64) -> FactSpec {
        FactSpec {
            name: "fact".into(),
            rows,
            tuple_width: 64,
            selectivity: s,
            projected_bytes: 32,
            key_cardinality: 1000,
            seed: 7,
        }
    }

    fn passing(d: &FactData) -> usize {
        let p = FactSpec::canonical_predicate(d.threshold);
        d.rows.iter().filter(|t| eval_predicate(&p, t)).count()
    }

    #[test]
    fn zero_selectivity_passes_nothing() {
        let d = spec(1000, 0.0).generate().unwrap();
        assert_eq!(passing(&d), 0);
        let all = spec(1000, 1.0).generate().unwrap();
        assert_eq!(passing(&all), 1000);
    }

    #[test]
    fn million_rows_at_two_point_one_percent() {
        let d = spec(1_000_000, 0.021).generate().unwrap();
        let n = passing(&d);
        assert!(n.abs_diff(21_000) <= 1, "{n}");
        assert_eq!(n, d.passing_rows);
    }

    #[test]
    fn same_seed_same_table() {
        let mut a = Catalog::new();
        let mut b = Catalog::new();
        gen_table(&mut a, &spec(5000, 0.3), Layout::RowStore, 4096).unwrap();
        gen_table(&mut b, &spec(5000, 0.3), Layout::RowStore, 4096).unwrap();
        let (ta, tb) = (a.table("fact").unwrap(), b.table("fact").unwrap());
        assert_eq!(ta.blocks().len(), tb.blocks().len());
        for (x, y) in ta.blocks().iter().zip(tb.blocks()) {
            assert_eq!(x.tuples().collect::<Vec<_>>(), y.tuples().collect::<Vec<_>>());
        }
        let mut other = spec(5000, 0.3);
        other.seed = 8;
        assert_ne!(other.generate().unwrap().rows, spec(5000, 0.3).generate().unwrap().rows);
    }

    #[test]
    fn widths_and_projection() {
        let s = FactSpec { tuple_width: 1000, projected_bytes: 131, ..spec(10, 0.5) };
        let schema = s.schema().unwrap();
        assert_eq!(schema.tuple_width(), 1000);
        let out = s.canonical_projection(&schema).output_schema(&schema).unwrap();
        assert_eq!(out.tuple_width(), 131);
        let bare = FactSpec { tuple_width: 32, projected_bytes: 8, ..spec(10, 0.5) };
        assert_eq!(bare.schema().unwrap().len(), 4);
        assert!(FactSpec { selectivity: 1.5, ..spec(10, 0.5) }.validate().is_err());
        assert!(FactSpec { tuple_width: 40, projected_bytes: 32, ..spec(10, 0.5) }.validate().is_err());
    }

    #[test]
    fn dimension_keys_are_unique() {
        let d = DimensionSpec { name: "dim".into(), rows: 500, tuple_width: 24, seed: 1 };
        let (schema, rows) = d.generate().unwrap();
        assert_eq!(schema.tuple_width(), 24);
        let mut keys: Vec<i64> = rows.iter().map(|t| t[0].as_i64().unwrap()).collect();
        keys.sort_unstable();
        assert_eq!(keys, (0..500).collect::<Vec<_>>());
    }
}
