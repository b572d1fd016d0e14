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

//! Memory footprint of the leaf-level join under the two ends of the
//! unit-of-transfer spectrum.
//!
//! With whole-table transfer the select's output is materialized before
//! the probe runs. With one block at a time nothing is materialized, but
//! every hash table of the cascade must be built before the first block
//! flows through, so they are all resident at once. The first hash table
//! is resident under both strategies and is left out of the comparison.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::operators::capacity_after;

/// Row and width statistics of a selection over one table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionStats<S> {
    pub input_rows: S,
    pub passing_rows: S,
    pub input_tuple_bytes: S,
    pub projected_tuple_bytes: S,
    pub input_bytes: S,
}

pub type SelectionStatsF64 = SelectionStats<f64>;
pub type ExactSelectionStats = SelectionStats<num_rational::Rational64>;

impl<S: Scalar> SelectionStats<S> {
    pub fn new(input_rows: S, passing_rows: S, input_tuple_bytes: S, projected_tuple_bytes: S) -> Self {
        SelectionStats {
            input_rows,
            passing_rows,
            input_tuple_bytes,
            projected_tuple_bytes,
            input_bytes: input_rows * input_tuple_bytes,
        }
    }

    /// Stats for a table of `input_bytes` described only by its
    /// selectivity and projectivity.
    pub fn from_fractions(input_bytes: S, selectivity: S, projectivity: S) -> Self {
        SelectionStats {
            input_rows: S::one(),
            passing_rows: selectivity,
            input_tuple_bytes: input_bytes,
            projected_tuple_bytes: projectivity * input_bytes,
            input_bytes,
        }
    }

    pub fn selectivity(&self) -> S {
        if self.input_rows == S::zero() {
            S::zero()
        } else {
            self.passing_rows / self.input_rows
        }
    }

    pub fn projectivity(&self) -> S {
        self.projected_tuple_bytes / self.input_tuple_bytes
    }

    pub fn validate(&self) -> Result<()> {
        let zero = S::zero();
        if !(self.passing_rows >= zero && self.passing_rows <= self.input_rows) {
            return Err(Error::InvalidStats(format!(
                "passing rows {} outside [0, {}]",
                self.passing_rows, self.input_rows
            )));
        }
        if !(self.projected_tuple_bytes > zero && self.projected_tuple_bytes <= self.input_tuple_bytes) {
            return Err(Error::InvalidStats(format!(
                "projected width {} outside (0, {}]",
                self.projected_tuple_bytes, self.input_tuple_bytes
            )));
        }
        let expected = self.input_rows * self.input_tuple_bytes;
        let diff = if expected > self.input_bytes { expected - self.input_bytes } else { self.input_bytes - expected };
        // floats only need to agree to rounding
        let tol = S::from_f64(1e-9).unwrap_or_else(S::zero) * S::max_of(expected, S::one());
        if diff > tol {
            return Err(Error::InvalidStats(format!(
                "table bytes {} differ from rows x width {}",
                self.input_bytes, expected
            )));
        }
        Ok(())
    }
}

/// `M · s · p`.
pub fn selection_output_bytes<S: Scalar>(stats: &SelectionStats<S>) -> Result<S> {
    stats.validate()?;
    Ok(stats.input_bytes * stats.selectivity() * stats.projectivity())
}

/// Sizing inputs of one hash table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashTableSpec<S> {
    /// Bytes of the table the hash table is built on.
    pub input_bytes: S,
    pub tuple_bytes: S,
    pub bucket_bytes: S,
    pub load_factor: S,
}

pub type HashTableSpecF64 = HashTableSpec<f64>;
pub type ExactHashTableSpec = HashTableSpec<num_rational::Rational64>;

impl<S: Scalar> HashTableSpec<S> {
    pub fn new(input_bytes: S, tuple_bytes: S, bucket_bytes: S, load_factor: S) -> Self {
        HashTableSpec { input_bytes, tuple_bytes, bucket_bytes, load_factor }
    }

    pub fn validate(&self) -> Result<()> {
        let zero = S::zero();
        if !(self.tuple_bytes > zero && self.bucket_bytes > zero) {
            return Err(Error::InvalidSpec("tuple and bucket widths must be positive".into()));
        }
        if !(self.load_factor > zero && self.load_factor <= S::one()) {
            return Err(Error::InvalidSpec(format!("load factor {} outside (0, 1]", self.load_factor)));
        }
        if !(self.input_bytes >= zero) {
            return Err(Error::InvalidSpec("input bytes must be non-negative".into()));
        }
        Ok(())
    }

    pub fn entries(&self) -> S {
        self.input_bytes / self.tuple_bytes
    }

    /// Bytes the engine allocates when it starts at `initial_buckets` and
    /// doubles whenever the load factor is exceeded.
    pub fn exact_engine_bytes(&self, initial_buckets: usize) -> Result<u64> {
        self.validate()?;
        let entries = self.entries().to_f64_lossy().ceil() as usize;
        let cap = capacity_after(entries, initial_buckets.max(1), self.load_factor.to_f64_lossy());
        let c = self.bucket_bytes.to_f64_lossy().ceil() as u64;
        Ok(cap as u64 * c)
    }
}

/// `(M / w) · (c / f)`.
pub fn hash_table_bytes<S: Scalar>(spec: &HashTableSpec<S>) -> Result<S> {
    spec.validate()?;
    Ok(spec.entries() * (spec.bucket_bytes / spec.load_factor))
}

/// Extra resident bytes when passing one block at a time: every hash table
/// of the cascade except the first.
pub fn footprint_low_uot<S: Scalar>(tables: &[HashTableSpec<S>]) -> Result<S> {
    tables.iter().skip(1).try_fold(S::zero(), |acc, t| Ok(acc + hash_table_bytes(t)?))
}

/// All hash tables of the cascade, the first one included.
pub fn footprint_low_uot_all<S: Scalar>(tables: &[HashTableSpec<S>]) -> Result<S> {
    tables.iter().try_fold(S::zero(), |acc, t| Ok(acc + hash_table_bytes(t)?))
}

/// Extra resident bytes when passing the whole table: the materialized
/// selection output.
pub fn footprint_high_uot<S: Scalar>(stats: &SelectionStats<S>) -> Result<S> {
    selection_output_bytes(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Winner {
    #[serde(rename = "LOW")]
    Low,
    #[serde(rename = "HIGH")]
    High,
    #[serde(rename = "EQUAL")]
    Equal,
}

impl Winner {
    /// The strategy with the smaller footprint.
    pub fn from_totals<S: Scalar>(low: S, high: S) -> Winner {
        match low.partial_cmp(&high) {
            Some(Ordering::Less) => Winner::Low,
            Some(Ordering::Greater) => Winner::High,
            _ => Winner::Equal,
        }
    }

    pub fn flipped(self) -> Winner {
        match self {
            Winner::Low => Winner::High,
            Winner::High => Winner::Low,
            Winner::Equal => Winner::Equal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Winner::Low => "LOW",
            Winner::High => "HIGH",
            Winner::Equal => "EQUAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component<S> {
    /// `"LOW"` or `"HIGH"`.
    pub strategy: &'static str,
    pub name: String,
    pub bytes: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootprintReport<S> {
    pub low_uot_bytes: S,
    pub high_uot_bytes: S,
    pub winner: Winner,
    pub components: Vec<Component<S>>,
}

/// One line of the footprint CSV: `query,strategy,component,bytes`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FootprintRow {
    pub query: String,
    pub strategy: String,
    pub component: String,
    pub bytes: f64,
}

impl<S: Scalar> FootprintReport<S> {
    /// Component rows, a `total` row per strategy, and a final row whose
    /// strategy is `winner`, whose component names the winner, and whose
    /// bytes are the winner's total.
    pub fn rows(&self, query: &str) -> Vec<FootprintRow> {
        let row = |strategy: &str, component: &str, bytes: S| FootprintRow {
            query: query.to_string(),
            strategy: strategy.to_string(),
            component: component.to_string(),
            bytes: bytes.to_f64_lossy(),
        };
        let mut out: Vec<FootprintRow> = self.components.iter().map(|c| row(c.strategy, &c.name, c.bytes)).collect();
        out.push(row("LOW", "total", self.low_uot_bytes));
        out.push(row("HIGH", "total", self.high_uot_bytes));
        let best = match self.winner {
            Winner::High => self.high_uot_bytes,
            _ => self.low_uot_bytes,
        };
        out.push(row("winner", self.winner.as_str(), best));
        out
    }
}

/// Compares the two strategies for a join cascade whose hash tables are
/// `tables` (first entry built first) and whose leaf selection is `selection`.
pub fn compare_footprints<S: Scalar>(
    tables: &[HashTableSpec<S>],
    selection: &SelectionStats<S>,
) -> Result<FootprintReport<S>> {
    let mut components = Vec::new();
    for (i, t) in tables.iter().enumerate().skip(1) {
        components.push(Component { strategy: "LOW", name: format!("hash_table_{}", i + 1), bytes: hash_table_bytes(t)? });
    }
    let low = footprint_low_uot(tables)?;
    let high = footprint_high_uot(selection)?;
    components.push(Component { strategy: "HIGH", name: "selection_output".into(), bytes: high });
    Ok(FootprintReport { low_uot_bytes: low, high_uot_bytes: high, winner: Winner::from_totals(low, high), components })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{EntryLayout, HashTableBuilder};
    use crate::plan::HashTableConfig;
    use crate::storage::{Block, Layout, MemoryTracker, Schema, Value};
    use num_rational::Rational64;
    use proptest::prelude::*;
    use std::sync::Arc;

    const GIB: f64 = 1024.0 * 1024.0 * 1024.0;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn quarter_of_a_gibibyte() {
        let s = SelectionStats::from_fractions(GIB, 0.5, 0.5);
        assert_eq!(selection_output_bytes(&s).unwrap(), 256.0 * 1024.0 * 1024.0);
        let exact = SelectionStats::from_fractions(Rational64::from_integer(1 << 30), r(1, 2), r(1, 2));
        assert_eq!(selection_output_bytes(&exact).unwrap(), Rational64::from_integer(1 << 28));
    }

    #[test]
    fn selectivity_projectivity_examples() {
        let low = SelectionStats::from_fractions(r(1, 1), r(21, 1000), r(131, 1000));
        assert_eq!(selection_output_bytes(&low).unwrap(), r(2751, 1_000_000));
        let high = SelectionStats::from_fractions(1.0f64, 0.539, 0.131);
        assert!((selection_output_bytes(&high).unwrap() - 0.070609f64).abs() < 1e-12);
    }

    #[test]
    fn row_based_stats() {
        let s = SelectionStats::new(1000.0, 250.0, 64.0, 16.0);
        assert_eq!(s.input_bytes, 64000.0);
        assert_eq!(selection_output_bytes(&s).unwrap(), 4000.0);
        let none = SelectionStats::new(1000.0, 0.0, 64.0, 16.0);
        assert_eq!(footprint_high_uot(&none).unwrap(), 0.0);
        let all = SelectionStats::new(10.0, 10.0, 8.0, 8.0);
        assert_eq!(footprint_high_uot(&all).unwrap(), 80.0);
        let empty = SelectionStats::new(0.0, 0.0, 8.0, 8.0);
        assert_eq!(selection_output_bytes(&empty).unwrap(), 0.0);
    }

    #[test]
    fn invalid_stats() {
        let too_many = SelectionStats::new(10.0, 11.0, 8.0, 8.0);
        assert!(matches!(selection_output_bytes(&too_many), Err(Error::InvalidStats(_))));
        let wide = SelectionStats::new(10.0, 1.0, 8.0, 9.0);
        assert!(wide.validate().is_err());
        let mut bytes = SelectionStats::new(10.0, 1.0, 8.0, 8.0);
        bytes.input_bytes = 81.0;
        assert!(bytes.validate().is_err());
    }

    #[test]
    fn hash_table_formula() {
        let spec = HashTableSpec::new(1_000_000.0, 100.0, 64.0, 0.5);
        assert_eq!(hash_table_bytes(&spec).unwrap(), 1_280_000.0);
        let full = HashTableSpec { load_factor: 1.0, ..spec };
        assert_eq!(hash_table_bytes(&full).unwrap(), 640_000.0);
        assert!(matches!(hash_table_bytes(&HashTableSpec { load_factor: 0.0, ..spec }), Err(Error::InvalidSpec(_))));
        assert!(hash_table_bytes(&HashTableSpec { tuple_bytes: 0.0, ..spec }).is_err());
        // 10,000 entries need 2^15 buckets at f = 0.5
        assert_eq!(spec.exact_engine_bytes(64).unwrap(), 32768 * 64);
    }

    #[test]
    fn low_footprint_sums_from_second_table() {
        let mb = HashTableSpec::new(r(1_000_000, 1), r(1, 1), r(1, 1), r(1, 1));
        assert_eq!(footprint_low_uot(&[mb]).unwrap(), r(0, 1));
        assert_eq!(footprint_low_uot(&[mb, mb, mb]).unwrap(), r(2_000_000, 1));
        assert_eq!(footprint_low_uot_all(&[mb, mb, mb]).unwrap(), r(3_000_000, 1));
        assert_eq!(footprint_low_uot::<f64>(&[]).unwrap(), 0.0);
    }

    #[test]
    fn star_schema_like_cascade_favors_low() {
        // three small dimension tables against a 6 GB fact-table selection
        let dim = HashTableSpec::new(30e6f64, 100.0, 24.0, 0.5);
        let fact = SelectionStats::from_fractions(6e9, 0.1, 0.2);
        let report = compare_footprints(&[dim, dim, dim], &fact).unwrap();
        assert_eq!(report.winner, Winner::Low);
    }

    #[test]
    fn orders_sized_second_table_favors_high() {
        // the second hash table is built on a 2.4 GB orders table; the
        // pruned lineitem selection is 224 MB
        let part = HashTableSpec::new(1e6f64, 100.0, 16.0, 1.0);
        let orders = HashTableSpec::new(2.4e9, 100.0, 100.0, 1.0);
        let pruned = SelectionStats::from_fractions(7.5e9, 224e6 / 7.5e9, 1.0);
        let report = compare_footprints(&[part, orders], &pruned).unwrap();
        assert_eq!(report.winner, Winner::High);
        assert!((report.low_uot_bytes - 2.4e9f64).abs() < 1.0);
        assert!((report.high_uot_bytes - 224e6f64).abs() < 1e-3);
        let rows = report.rows("q07");
        assert_eq!(rows.last().unwrap().strategy, "winner");
        assert_eq!(rows.last().unwrap().component, "HIGH");
        assert!(rows.iter().any(|r| r.component == "hash_table_2" && r.strategy == "LOW"));
    }

    #[test]
    fn equal_totals() {
        let t = HashTableSpec::new(100.0, 1.0, 1.0, 1.0);
        let s = SelectionStats::new(100.0, 100.0, 1.0, 1.0);
        assert_eq!(compare_footprints(&[t, t], &s).unwrap().winner, Winner::Equal);
    }

    fn build_table(rows: usize, cfg: &HashTableConfig) -> usize {
        let schema = Arc::new(Schema::parse("k:int,v:int,pad:bytes16").unwrap());
        let layout = EntryLayout::new(&schema, vec![0], vec![1]).unwrap();
        let b = HashTableBuilder::new(layout, cfg, Arc::new(MemoryTracker::unlimited())).unwrap();
        let per_block = 256;
        for chunk in (0..rows).collect::<Vec<_>>().chunks(per_block) {
            let mut blk = Block::new(schema.clone(), Layout::RowStore, per_block * 32).unwrap();
            for &i in chunk {
                blk.push_tuple(&[Value::Int(i as i64 % 97), Value::Int(i as i64), Value::Bytes(vec![0; 16])]).unwrap();
            }
            b.insert_batch((0..blk.fill_count()).map(|r| blk.row(r))).unwrap();
        }
        b.seal().memory_bytes()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn engine_hash_table_within_doubling_of_formula(rows in 64usize..5000, f_idx in 0usize..4) {
            let f = [0.25, 0.5, 0.75, 1.0][f_idx];
            let cfg = HashTableConfig { load_factor: f, bucket_bytes: None, initial_buckets: 16 };
            let measured = build_table(rows, &cfg) as f64;
            // tuple width 32, bucket = 8 key + 8 payload + 8 chain pointer
            let spec = HashTableSpec::new(rows as f64 * 32.0, 32.0, 24.0, f);
            let formula = hash_table_bytes(&spec).unwrap();
            prop_assert!(measured >= formula && measured < 2.0 * formula, "{measured} vs {formula}");
            prop_assert_eq!(measured as u64, spec.exact_engine_bytes(16).unwrap());
        }

        #[test]
        fn selection_never_exceeds_input(n in 1u32..10_000, pass in 0.0f64..=1.0, c in 1u32..512, pc in 0.0f64..=1.0) {
            let ns = (n as f64 * pass).floor();
            let cs = ((c as f64 * pc).ceil()).max(1.0);
            let s = SelectionStats::new(n as f64, ns, c as f64, cs);
            let out = selection_output_bytes(&s).unwrap();
            prop_assert!(out <= s.input_bytes);
            prop_assert_eq!(out == s.input_bytes, ns == n as f64 && cs == c as f64);
        }

        #[test]
        fn winner_is_antisymmetric(a in 0u64..1_000_000, b in 0u64..1_000_000) {
            let (a, b) = (Rational64::from_integer(a as i64), Rational64::from_integer(b as i64));
            prop_assert_eq!(Winner::from_totals(a, b), Winner::from_totals(b, a).flipped());
        }
    }
}
