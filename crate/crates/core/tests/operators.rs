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

use std::sync::Arc;

use proptest::prelude::*;
use uot_core::operators::{gen_work_orders, OperatorRuntime, SealedHashTable, WorkOrder};
use uot_core::plan::{
    Atom, Comparator, Expr, HashTableConfig, Input, PlanBuilder, PlanDag, Predicate, Projection,
};
use uot_core::storage::{Block, BlockPool, Catalog, Layout, MemoryTracker, Schema, Value};
use uot_core::Error;

fn block(schema: &str, layout: Layout, size: usize, rows: &[Vec<Value>]) -> Arc<Block> {
    let mut b = Block::new(Arc::new(Schema::parse(schema).unwrap()), layout, size).unwrap();
    rows.iter().for_each(|r| b.push_tuple(r).unwrap());
    Arc::new(b)
}

fn ints(rows: &[&[i64]]) -> Vec<Vec<Value>> {
    rows.iter().map(|r| r.iter().map(|&v| Value::Int(v)).collect()).collect()
}

struct Harness {
    plan: PlanDag,
    runtimes: Vec<OperatorRuntime>,
    pool: BlockPool,
    next: u64,
}

impl Harness {
    fn new(plan: PlanDag, block_size: usize) -> Self {
        let mem = Arc::new(MemoryTracker::unlimited());
        let runtimes = plan
            .nodes()
            .iter()
            .map(|n| OperatorRuntime::new(&plan, n, block_size, &mem).unwrap())
            .collect();
        Harness {
            plan,
            runtimes,
            pool: BlockPool::new(mem),
            next: 0,
        }
    }

    fn orders(&mut self, op: usize, blocks: Vec<Arc<Block>>, table: Option<&Arc<SealedHashTable>>) -> Vec<WorkOrder> {
        gen_work_orders(self.plan.node(op).unwrap(), blocks, table, &mut self.next, 0).unwrap()
    }

    /// Runs work orders of `op` and returns every output block, sealed or
    /// still pooled.
    fn run(&mut self, op: usize, wos: &[WorkOrder]) -> (Vec<Arc<Block>>, usize, usize) {
        let mut sealed = Vec::new();
        let (mut tin, mut tout) = (0, 0);
        for wo in wos {
            let r = self.runtimes[op]
                .execute(wo, &self.pool, &mut |b| sealed.push(b))
                .unwrap();
            tin += r.tuples_in;
            tout += r.tuples_out;
        }
        sealed.extend(self.pool.drain_destination(op as u64).into_iter().map(Arc::new));
        (sealed, tin, tout)
    }
}

fn rows_of(blocks: &[Arc<Block>]) -> Vec<Vec<Value>> {
    let mut v: Vec<_> = blocks.iter().flat_map(|b| b.tuples().collect::<Vec<_>>()).collect();
    v.sort();
    v
}

fn base_catalog() -> Catalog {
    let mut c = Catalog::new();
    c.create_table("t", Schema::parse("a:int,b:int,c:int,d:int").unwrap(), Layout::RowStore, 4096)
        .unwrap();
    c.create_table("dim", Schema::parse("k:int,p:int").unwrap(), Layout::RowStore, 4096)
        .unwrap();
    c
}

#[test]
fn one_work_order_per_block() {
    let c = base_catalog();
    let s = Schema::parse("a:int,b:int,c:int,d:int").unwrap();
    let mut b = PlanBuilder::new(&c);
    b.select(Input::table("t"), Predicate::always_true(), Projection::identity(&s)).unwrap();
    let mut h = Harness::new(b.finish(None).unwrap(), 4096);
    let blocks: Vec<_> = (0..5).map(|_| block("a:int,b:int,c:int,d:int", Layout::RowStore, 4096, &[])).collect();
    let ids: Vec<_> = blocks.iter().map(|b| b.id()).collect();
    let wos = h.orders(0, blocks, None);
    assert_eq!(wos.len(), 5);
    assert_eq!(wos.iter().map(|w| w.input.id()).collect::<Vec<_>>(), ids);
    assert!(h.orders(0, vec![], None).is_empty());
}

fn probe_plan(c: &Catalog) -> PlanDag {
    let mut b = PlanBuilder::new(c);
    let build = b
        .build_hash(Input::table("dim"), vec![0], vec![1], HashTableConfig::default())
        .unwrap();
    let proj = Projection::default()
        .with("a", Expr::col(0))
        .with("b", Expr::col(1))
        .with("p", Expr::col(4));
    b.probe_hash(build, Input::table("t"), vec![0], proj).unwrap();
    b.finish(None).unwrap()
}

#[test]
fn probe_before_seal_is_rejected() {
    let c = base_catalog();
    let plan = probe_plan(&c);
    let mut next = 0;
    let err = gen_work_orders(plan.node(1).unwrap(), vec![], None, &mut next, 0).unwrap_err();
    assert_eq!(err, Error::ProbeBeforeBuildSealed(1));
}

fn build_and_seal(h: &mut Harness, dim: &[Vec<Value>]) -> Arc<SealedHashTable> {
    let blk = block("k:int,p:int", Layout::RowStore, 4096, dim);
    let wos = h.orders(0, vec![blk], None);
    h.run(0, &wos);
    h.runtimes[0].seal_hash_table().unwrap()
}

#[test]
fn probe_emits_one_row_per_duplicate() {
    let c = base_catalog();
    let mut h = Harness::new(probe_plan(&c), 4096);
    let table = build_and_seal(&mut h, &ints(&[&[5, 1], &[5, 2], &[5, 3], &[6, 9]]));
    assert_eq!(table.entry_count(), 4);
    let probe = block("a:int,b:int,c:int,d:int", Layout::ColumnStore, 4096, &ints(&[&[5, 50, 0, 0], &[7, 70, 0, 0]]));
    let wos = h.orders(1, vec![probe], Some(&table));
    let (out, tin, tout) = h.run(1, &wos);
    assert_eq!((tin, tout), (2, 3));
    assert_eq!(rows_of(&out), ints(&[&[5, 50, 1], &[5, 50, 2], &[5, 50, 3]]));
}

#[test]
fn probe_without_matches_emits_nothing() {
    let c = base_catalog();
    let mut h = Harness::new(probe_plan(&c), 4096);
    let table = build_and_seal(&mut h, &ints(&[&[1, 1]]));
    let probe = block("a:int,b:int,c:int,d:int", Layout::RowStore, 4096, &ints(&[&[2, 0, 0, 0]]));
    let wos = h.orders(1, vec![probe], Some(&table));
    let (out, _, tout) = h.run(1, &wos);
    assert_eq!(tout, 0);
    assert!(out.is_empty());
}

fn select_plan(c: &Catalog, pred: Predicate, proj: Projection) -> PlanDag {
    let mut b = PlanBuilder::new(c);
    b.select(Input::table("t"), pred, proj).unwrap();
    b.finish(None).unwrap()
}

#[test]
fn always_false_select_seals_nothing() {
    let c = base_catalog();
    let s = Schema::parse("a:int,b:int,c:int,d:int").unwrap();
    let mut h = Harness::new(
        select_plan(&c, Predicate::new(vec![Atom::new(0, Comparator::Lt, i64::MIN)]), Projection::identity(&s)),
        4096,
    );
    let input = block("a:int,b:int,c:int,d:int", Layout::RowStore, 4096, &ints(&[&[1i64, 2, 3, 4] as &[i64]; 20]));
    let wos = h.orders(0, vec![input], None);
    let (out, tin, tout) = h.run(0, &wos);
    assert_eq!((tin, tout), (20, 0));
    assert!(out.is_empty());
}

#[test]
fn half_selectivity_half_width_is_a_quarter_of_the_bytes() {
    let c = base_catalog();
    let s = Schema::parse("a:int,b:int,c:int,d:int").unwrap();
    let size = 2048 * 32;
    let mut h = Harness::new(
        select_plan(&c, Predicate::new(vec![Atom::new(0, Comparator::Lt, 1024)]), Projection::columns(&s, &[0, 1])),
        size,
    );
    // column a is a permutation of 0..2048
    let rows: Vec<Vec<Value>> = (0..2048i64).map(|i| ints(&[&[(i * 1237) % 2048, i, i, i]]).remove(0)).collect();
    let input = block("a:int,b:int,c:int,d:int", Layout::ColumnStore, size, &rows);
    assert_eq!(input.fill_count(), 2048);
    let wos = h.orders(0, vec![input.clone()], None);
    let (out, _, tout) = h.run(0, &wos);
    assert_eq!(tout, 1024);
    let used: usize = out.iter().map(|b| b.used_bytes()).sum();
    assert_eq!(used * 4, input.used_bytes());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_select_preserves_multiset(rows in proptest::collection::vec(proptest::array::uniform4(-50i64..50), 0..300)) {
        let c = base_catalog();
        let s = Schema::parse("a:int,b:int,c:int,d:int").unwrap();
        let mut h = Harness::new(select_plan(&c, Predicate::always_true(), Projection::identity(&s)), 256);
        let vals: Vec<Vec<Value>> = rows.iter().map(|r| r.iter().map(|&v| Value::Int(v)).collect()).collect();
        let inputs: Vec<_> = vals.chunks(7).map(|ch| block("a:int,b:int,c:int,d:int", Layout::ColumnStore, 4096, ch)).collect();
        let wos = h.orders(0, inputs, None);
        let (out, _, _) = h.run(0, &wos);
        let mut expect = vals.clone();
        expect.sort();
        prop_assert_eq!(rows_of(&out), expect);
    }

    #[test]
    fn probe_matches_nested_loop_join(
        dim in proptest::collection::vec((0i64..12, -100i64..100), 0..60),
        fact in proptest::collection::vec((0i64..15, -100i64..100), 0..120),
    ) {
        let c = base_catalog();
        let mut h = Harness::new(probe_plan(&c), 128);
        let dim_rows: Vec<Vec<Value>> = dim.iter().map(|&(k, p)| vec![Value::Int(k), Value::Int(p)]).collect();
        let table = build_and_seal(&mut h, &dim_rows);
        let fact_rows: Vec<Vec<Value>> = fact.iter().map(|&(a, b)| ints(&[&[a, b, 0, 0]]).remove(0)).collect();
        let inputs: Vec<_> = fact_rows.chunks(9).map(|ch| block("a:int,b:int,c:int,d:int", Layout::RowStore, 4096, ch)).collect();
        let wos = h.orders(1, inputs, Some(&table));
        let (out, _, _) = h.run(1, &wos);
        let mut expect = Vec::new();
        for &(a, b) in &fact {
            for &(k, p) in &dim {
                if a == k {
                    expect.push(vec![Value::Int(a), Value::Int(b), Value::Int(p)]);
                }
            }
        }
        expect.sort();
        prop_assert_eq!(rows_of(&out), expect);
    }
}
