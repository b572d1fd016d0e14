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

//! Hash aggregation state and exact floating-point summation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::hash_table::gather;
use crate::error::Result;
use crate::plan::{AggregateExpr, AggregateFn, CHAIN_POINTER_BYTES};
use crate::storage::{read_f64, read_i64, ColumnType, Fields, MemoryCategory, MemoryTracker, Schema, Value};

const LIMBS: usize = 72;
const LIMB_BITS: u32 = 32;
const LIMB_MASK: i64 = (1 << LIMB_BITS) - 1;
/// Exponent bias so the smallest subnormal lands on bit 0.
const MIN_EXP: i32 = -1074;
const NORMALIZE_EVERY: u32 = 1 << 20;

/// Order-independent sum of `f64` values, rounded once (to nearest, ties to
/// even) when read. Finite inputs are accumulated exactly as a fixed-point
/// integer in units of 2^-1074 spread over 32-bit limbs.
#[derive(Clone)]
pub struct ExactSum {
    limbs: Box<[i64; LIMBS]>,
    pending: u32,
    pos_inf: bool,
    neg_inf: bool,
    nan: bool,
}

impl std::fmt::Debug for ExactSum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ExactSum({})", self.value())
    }
}

impl Default for ExactSum {
    fn default() -> Self {
        ExactSum {
            limbs: Box::new([0; LIMBS]),
            pending: 0,
            pos_inf: false,
            neg_inf: false,
            nan: false,
        }
    }
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        if !x.is_finite() {
            if x.is_nan() {
                self.nan = true;
            } else if x > 0.0 {
                self.pos_inf = true;
            } else {
                self.neg_inf = true;
            }
            return;
        }
        if x == 0.0 {
            return;
        }
        let bits = x.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, e) = if exp == 0 {
            (frac, MIN_EXP)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        let shift = (e - MIN_EXP) as u32;
        let idx = (shift / LIMB_BITS) as usize;
        let v = (mant as u128) << (shift % LIMB_BITS);
        let parts = [
            (v as i64) & LIMB_MASK,
            ((v >> 32) as i64) & LIMB_MASK,
            ((v >> 64) as i64) & LIMB_MASK,
        ];
        let neg = x < 0.0;
        for (k, p) in parts.into_iter().enumerate() {
            if neg {
                self.limbs[idx + k] -= p;
            } else {
                self.limbs[idx + k] += p;
            }
        }
        self.pending += 1;
        if self.pending >= NORMALIZE_EVERY {
            self.normalize();
        }
    }

    pub fn merge(&mut self, other: &ExactSum) {
        self.normalize();
        let mut o = other.clone();
        o.normalize();
        for (a, b) in self.limbs.iter_mut().zip(o.limbs.iter()) {
            *a += *b;
        }
        self.pending = 1;
        self.normalize();
        self.pos_inf |= other.pos_inf;
        self.neg_inf |= other.neg_inf;
        self.nan |= other.nan;
    }

    /// Carries so that every limb but the last lies in `[0, 2^32)`.
    fn normalize(&mut self) {
        for i in 0..LIMBS - 1 {
            let carry = self.limbs[i] >> LIMB_BITS;
            self.limbs[i] -= carry << LIMB_BITS;
            self.limbs[i + 1] += carry;
        }
        self.pending = 0;
    }

    pub fn value(&self) -> f64 {
        if self.nan || (self.pos_inf && self.neg_inf) {
            return f64::NAN;
        }
        if self.pos_inf {
            return f64::INFINITY;
        }
        if self.neg_inf {
            return f64::NEG_INFINITY;
        }
        let mut l = self.clone();
        l.normalize();
        let negative = l.limbs[LIMBS - 1] < 0;
        if negative {
            for x in l.limbs.iter_mut() {
                *x = -*x;
            }
            l.normalize();
        }
        let magnitude = round_fixed(&l.limbs[..]);
        if negative {
            -magnitude
        } else {
            magnitude
        }
    }
}

fn bit(limbs: &[i64], i: u32) -> bool {
    (limbs[(i / LIMB_BITS) as usize] >> (i % LIMB_BITS)) & 1 == 1
}

fn any_below(limbs: &[i64], i: u32) -> bool {
    let idx = (i / LIMB_BITS) as usize;
    if limbs[..idx].iter().any(|&x| x != 0) {
        return true;
    }
    let off = i % LIMB_BITS;
    off > 0 && (limbs[idx] & ((1i64 << off) - 1)) != 0
}

fn pow2(e: i32) -> f64 {
    if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (e - MIN_EXP))
    }
}

/// Rounds a non-negative fixed-point integer (units of 2^-1074, limbs in
/// `[0, 2^32)`) to the nearest `f64`.
fn round_fixed(limbs: &[i64]) -> f64 {
    let Some(top) = limbs.iter().rposition(|&x| x != 0) else {
        return 0.0;
    };
    let bit_len = top as u32 * LIMB_BITS + (64 - limbs[top].leading_zeros());
    let read = |lo: u32, n: u32| -> u64 {
        (0..n).fold(0u64, |acc, k| acc | ((bit(limbs, lo + k) as u64) << k))
    };
    if bit_len <= 53 {
        return read(0, bit_len) as f64 * pow2(MIN_EXP);
    }
    let drop = bit_len - 53;
    let mut q = read(drop, 53);
    let half = bit(limbs, drop - 1);
    let sticky = any_below(limbs, drop - 1);
    if half && (sticky || q & 1 == 1) {
        q += 1;
    }
    let mut e = drop as i32 + MIN_EXP;
    if q == 1 << 53 {
        q >>= 1;
        e += 1;
    }
    if e + 52 > 1023 {
        return f64::INFINITY;
    }
    q as f64 * pow2(e)
}

#[derive(Debug, Clone)]
enum Acc {
    Count(i64),
    SumInt(i128),
    SumFloat(ExactSum),
    Min(Option<Value>),
    Max(Option<Value>),
}

impl Acc {
    fn merge(&mut self, other: &Acc) {
        match (self, other) {
            (Acc::Count(a), Acc::Count(b)) => *a += b,
            (Acc::SumInt(a), Acc::SumInt(b)) => *a += b,
            (Acc::SumFloat(a), Acc::SumFloat(b)) => a.merge(b),
            (Acc::Min(a), Acc::Min(b)) => {
                if let Some(b) = b {
                    if a.as_ref().is_none_or(|a| b < a) {
                        *a = Some(b.clone());
                    }
                }
            }
            (Acc::Max(a), Acc::Max(b)) => {
                if let Some(b) = b {
                    if a.as_ref().is_none_or(|a| b > a) {
                        *a = Some(b.clone());
                    }
                }
            }
            _ => unreachable!("accumulator kinds are fixed per aggregate"),
        }
    }

    fn finish(&self) -> Value {
        match self {
            Acc::Count(n) => Value::Int(*n),
            Acc::SumInt(s) => Value::Int((*s).clamp(i64::MIN as i128, i64::MAX as i128) as i64),
            Acc::SumFloat(s) => Value::Float(s.value()),
            Acc::Min(v) | Acc::Max(v) => v.clone().expect("groups hold at least one row"),
        }
    }
}

/// Shared state of one aggregate operator. Each work order aggregates its
/// block locally and merges under a single lock.
#[derive(Debug)]
pub struct AggregateState {
    input: Arc<Schema>,
    group_by: Vec<usize>,
    aggregates: Vec<AggregateExpr>,
    groups: Mutex<HashMap<Vec<u8>, Vec<Acc>>>,
    group_bytes: u64,
    memory: Arc<MemoryTracker>,
}

impl AggregateState {
    pub fn new(
        input: Arc<Schema>,
        group_by: Vec<usize>,
        aggregates: Vec<AggregateExpr>,
        output: &Schema,
        memory: Arc<MemoryTracker>,
    ) -> Self {
        AggregateState {
            input,
            group_by,
            aggregates,
            groups: Mutex::new(HashMap::new()),
            group_bytes: (output.tuple_width() + CHAIN_POINTER_BYTES) as u64,
            memory,
        }
    }

    fn fresh(&self) -> Vec<Acc> {
        self.aggregates
            .iter()
            .map(|a| match a.func {
                AggregateFn::Count => Acc::Count(0),
                AggregateFn::Sum => match self.input.ty(a.column.expect("validated")) {
                    ColumnType::Float64 => Acc::SumFloat(ExactSum::new()),
                    _ => Acc::SumInt(0),
                },
                AggregateFn::Min => Acc::Min(None),
                AggregateFn::Max => Acc::Max(None),
            })
            .collect()
    }

    fn update<F: Fields + ?Sized>(&self, accs: &mut [Acc], t: &F) {
        for (acc, a) in accs.iter_mut().zip(&self.aggregates) {
            match acc {
                Acc::Count(n) => *n += 1,
                Acc::SumInt(s) => *s += read_i64(t.field(a.column.expect("validated"))) as i128,
                Acc::SumFloat(s) => s.add(read_f64(t.field(a.column.expect("validated")))),
                Acc::Min(m) | Acc::Max(m) => {
                    let c = a.column.expect("validated");
                    let v = Value::decode(self.input.ty(c), t.field(c));
                    let better = match (&*m, a.func) {
                        (None, _) => true,
                        (Some(cur), AggregateFn::Min) => v < *cur,
                        (Some(cur), _) => v > *cur,
                    };
                    if better {
                        *m = Some(v);
                    }
                }
            }
        }
    }

    /// Aggregates one batch and merges it into the shared state. Returns the
    /// number of tuples consumed.
    pub fn consume<F, I>(&self, tuples: I) -> Result<usize>
    where
        F: Fields,
        I: IntoIterator<Item = F>,
    {
        let mut local: HashMap<Vec<u8>, Vec<Acc>> = HashMap::new();
        let mut key = Vec::new();
        let mut n = 0;
        for t in tuples {
            key.clear();
            gather(&t, &self.group_by, &mut key);
            let accs = match local.get_mut(key.as_slice()) {
                Some(a) => a,
                None => local.entry(key.clone()).or_insert_with(|| self.fresh()),
            };
            self.update(accs, &t);
            n += 1;
        }
        let mut groups = self.groups.lock().unwrap_or_else(|p| p.into_inner());
        for (k, accs) in local {
            match groups.get_mut(&k) {
                Some(g) => {
                    for (a, b) in g.iter_mut().zip(&accs) {
                        a.merge(b);
                    }
                }
                None => {
                    self.memory.alloc(MemoryCategory::HashTables, self.group_bytes)?;
                    groups.insert(k, accs);
                }
            }
        }
        Ok(n)
    }

    pub fn group_count(&self) -> usize {
        self.groups.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    /// Final output rows, ordered by encoded group key, and releases the
    /// state's memory.
    pub fn finalize(&self) -> Vec<Vec<Value>> {
        let mut groups = self.groups.lock().unwrap_or_else(|p| p.into_inner());
        let mut entries: Vec<(Vec<u8>, Vec<Acc>)> = groups.drain().collect();
        self.memory
            .free(MemoryCategory::HashTables, self.group_bytes * entries.len() as u64);
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let key_schema = self.input.project(&self.group_by).ok();
        entries
            .into_iter()
            .map(|(k, accs)| {
                let mut row = Vec::with_capacity(self.group_by.len() + accs.len());
                if let Some(ks) = &key_schema {
                    for c in 0..ks.len() {
                        let off = ks.offset(c);
                        row.push(Value::decode(ks.ty(c), &k[off..off + ks.ty(c).width()]));
                    }
                }
                row.extend(accs.iter().map(Acc::finish));
                row
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::{Block, Layout};
    use proptest::prelude::*;

    fn exact(xs: &[f64]) -> f64 {
        let mut s = ExactSum::new();
        xs.iter().for_each(|&x| s.add(x));
        s.value()
    }

    #[test]
    fn exact_sum_basics() {
        assert_eq!(exact(&[]), 0.0);
        assert_eq!(exact(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(exact(&[1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact(&[0.1, 0.2]), 0.1 + 0.2);
        assert_eq!(exact(&[f64::MAX, f64::MAX]), f64::INFINITY);
        assert_eq!(exact(&[-f64::MAX, -f64::MAX]), f64::NEG_INFINITY);
        assert_eq!(exact(&[f64::MIN_POSITIVE / 4.0, f64::MIN_POSITIVE / 4.0]), f64::MIN_POSITIVE / 2.0);
        assert!(exact(&[f64::INFINITY, f64::NEG_INFINITY]).is_nan());
        // 2^53 + 1 is a tie between 2^53 and 2^53 + 2; ties go to even
        assert_eq!(exact(&[9007199254740992.0, 1.0]), 9007199254740992.0);
        assert_eq!(exact(&[9007199254740992.0, 1.0, 1e-300]), 9007199254740994.0);
        assert_eq!(exact(&[-1.5, 0.25]), -1.25);
    }

    fn state(schema: &str, group_by: Vec<usize>, aggs: Vec<AggregateExpr>) -> (AggregateState, Arc<Schema>) {
        let s = Arc::new(Schema::parse(schema).unwrap());
        let mut cols: Vec<_> = group_by.iter().map(|&g| s.columns()[g].clone()).collect();
        for a in &aggs {
            let ty = match a.func {
                AggregateFn::Count => ColumnType::Int64,
                _ => s.ty(a.column.unwrap()),
            };
            cols.push(crate::storage::Column::new(a.name.clone(), ty));
        }
        let out = Schema::new(cols).unwrap();
        (AggregateState::new(s.clone(), group_by, aggs, &out, Arc::new(MemoryTracker::unlimited())), s)
    }

    fn block_of(schema: &Arc<Schema>, rows: &[Vec<Value>]) -> Block {
        let mut b = Block::new(schema.clone(), Layout::ColumnStore, 1 << 14).unwrap();
        rows.iter().for_each(|r| b.push_tuple(r).unwrap());
        b
    }

    fn consume(st: &AggregateState, b: &Block) {
        st.consume((0..b.fill_count()).map(|r| b.row(r))).unwrap();
    }

    #[test]
    fn count_over_empty_input_has_no_groups() {
        let (st, _) = state("a:int", vec![], vec![AggregateExpr::count("n")]);
        assert!(st.finalize().is_empty());
    }

    #[test]
    fn sum_with_constant_group() {
        let (st, s) = state("g:int,a:int", vec![0], vec![AggregateExpr::sum(1, "s")]);
        let rows: Vec<_> = [1, 2, 3].iter().map(|&v| vec![Value::Int(0), Value::Int(v)]).collect();
        consume(&st, &block_of(&s, &rows));
        assert_eq!(st.finalize(), vec![vec![Value::Int(0), Value::Int(6)]]);
    }

    #[test]
    fn integer_sum_saturates_at_finalize() {
        let (st, s) = state("a:int", vec![], vec![AggregateExpr::sum(0, "s")]);
        let rows = vec![vec![Value::Int(i64::MAX)], vec![Value::Int(i64::MAX)], vec![Value::Int(-5)]];
        consume(&st, &block_of(&s, &rows));
        assert_eq!(st.finalize(), vec![vec![Value::Int(i64::MAX)]]);
    }

    proptest! {
        #[test]
        fn min_max_order_independent(mut xs in proptest::collection::vec(-1000i64..1000, 1..200)) {
            let aggs = vec![AggregateExpr::min(0, "lo"), AggregateExpr::max(0, "hi"), AggregateExpr::sum(1, "s")];
            let run = |xs: &[i64]| {
                let (st, s) = state("a:int,f:float", vec![], aggs.clone());
                let rows: Vec<_> = xs.iter().map(|&x| vec![Value::Int(x), Value::Float(x as f64 * 0.1)]).collect();
                for chunk in rows.chunks(17) {
                    consume(&st, &block_of(&s, chunk));
                }
                st.finalize()
            };
            let shuffled = run(&xs);
            xs.sort();
            let sorted = run(&xs);
            prop_assert_eq!(shuffled, sorted);
        }

        #[test]
        fn exact_sum_matches_pairwise_exact_cases(xs in proptest::collection::vec(-1e6f64..1e6, 0..100)) {
            // integers are summed exactly by f64 when small, so the result is exact
            let ints: Vec<f64> = xs.iter().map(|x| x.trunc()).collect();
            let expect: f64 = ints.iter().map(|&x| x as i64).sum::<i64>() as f64;
            prop_assert_eq!(exact(&ints), expect);
            let mut rev = xs.clone();
            rev.reverse();
            prop_assert_eq!(exact(&xs).to_bits(), exact(&rev).to_bits());
        }
    }
}
