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

use uot_core::plan::{
    AggregateExpr, Atom, Comparator, Expr, HashTableConfig, Input, PlanBuilder, PlanDag, Predicate, Projection,
};
use uot_core::scheduler::verify::{
    verify_build_probe_barrier, verify_monotone_availability, verify_non_pipelining, verify_promptness,
    verify_timestamps, verify_worker_conservation,
};
use uot_core::scheduler::{run_query, DispatchOrder, EventKind, ExecConfig, QueryOutput, UoTPolicy};
use uot_core::storage::{Catalog, Layout, Schema, Value};

/// 16-byte tuples, so a 160-byte block holds exactly ten.
const BS: usize = 160;

fn catalog(rows: i64, layout: Layout) -> Catalog {
    let mut c = Catalog::new();
    c.create_table("fact", Schema::parse("k:int,v:int").unwrap(), layout, BS).unwrap();
    c.insert_tuples("fact", (0..rows).map(|i| vec![Value::Int(i % 7), Value::Int(i)]))
        .unwrap();
    c.create_table("dim", Schema::parse("k:int,name:int").unwrap(), Layout::RowStore, BS)
        .unwrap();
    c.insert_tuples("dim", (0..7).map(|i| vec![Value::Int(i), Value::Int(100 + i)]))
        .unwrap();
    c
}

fn two_selects(c: &Catalog, producer_cost: u32, consumer_cost: u32) -> PlanDag {
    let s = Schema::parse("k:int,v:int").unwrap();
    let mut b = PlanBuilder::new(c);
    let p = b
        .select_named(None, Input::table("fact"), Predicate::always_true(), Projection::identity(&s), producer_cost)
        .unwrap();
    b.select_named(None, Input::op(p), Predicate::always_true(), Projection::identity(&s), consumer_cost)
        .unwrap();
    b.finish(None).unwrap()
}

fn run(c: &Catalog, plan: &PlanDag, uot: UoTPolicy, threads: usize) -> QueryOutput {
    run_query(c, plan, &ExecConfig::new(uot, threads, BS)).unwrap()
}

fn started_ops(out: &QueryOutput) -> Vec<usize> {
    out.metrics
        .events
        .iter()
        .filter(|e| e.kind == EventKind::WorkOrderStarted)
        .map(|e| e.op_id)
        .collect()
}

#[test]
fn one_worker_one_block_alternates() {
    let c = catalog(50, Layout::RowStore);
    let plan = two_selects(&c, 0, 0);
    let out = run(&c, &plan, UoTPolicy::Blocks(1), 1);
    assert_eq!(started_ops(&out), vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
    assert_eq!(out.row_count(), 50);
    assert!(verify_promptness(&out.metrics.events, &plan).is_empty());
}

#[test]
fn one_worker_whole_table_runs_producer_first() {
    let c = catalog(50, Layout::RowStore);
    let plan = two_selects(&c, 0, 0);
    let out = run(&c, &plan, UoTPolicy::WholeTable, 1);
    assert_eq!(started_ops(&out), vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    assert!(verify_non_pipelining(&out.metrics.events, &plan).is_empty());
}

#[test]
fn whole_table_releases_all_blocks_at_producer_finish() {
    let c = catalog(70, Layout::RowStore);
    let plan = two_selects(&c, 0, 0);
    let out = run(&c, &plan, UoTPolicy::WholeTable, 2);
    let ev = &out.metrics.events;
    let fin = ev
        .iter()
        .position(|e| e.kind == EventKind::OperatorFinished && e.op_id == 0)
        .unwrap();
    let before = ev[..fin]
        .iter()
        .filter(|e| e.kind == EventKind::WorkOrderDispatched && e.op_id == 1)
        .count();
    let burst = ev[fin + 1..]
        .iter()
        .take_while(|e| e.kind == EventKind::WorkOrderDispatched)
        .count();
    assert_eq!(before, 0);
    assert_eq!(burst, 7);
}

#[test]
fn below_threshold_blocks_wait_for_producer() {
    // three full blocks, k = 4: nothing released before the producer ends
    let c = catalog(30, Layout::RowStore);
    let plan = two_selects(&c, 0, 0);
    let out = run(&c, &plan, UoTPolicy::Blocks(4), 1);
    let ev = &out.metrics.events;
    let fin = ev
        .iter()
        .position(|e| e.kind == EventKind::OperatorFinished && e.op_id == 0)
        .unwrap();
    assert_eq!(ev.iter().filter(|e| e.kind == EventKind::BlockFilled && e.op_id == 0).count(), 3);
    assert!(!ev[..fin]
        .iter()
        .any(|e| e.kind == EventKind::WorkOrderDispatched && e.op_id == 1));
    assert_eq!(out.row_count(), 30);
}

#[test]
fn batches_of_k_are_released_together() {
    let c = catalog(80, Layout::RowStore);
    let plan = two_selects(&c, 0, 0);
    let out = run(&c, &plan, UoTPolicy::Blocks(4), 1);
    let ops = started_ops(&out);
    assert_eq!(ops, vec![0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1]);
}

#[test]
fn partial_block_is_flushed_then_dispatched() {
    // 55 rows: five full blocks plus one half-full block from the producer
    let c = catalog(55, Layout::RowStore);
    let plan = two_selects(&c, 0, 0);
    let out = run(&c, &plan, UoTPolicy::Blocks(1), 1);
    let ev = &out.metrics.events;
    let fin = ev
        .iter()
        .position(|e| e.kind == EventKind::OperatorFinished && e.op_id == 0)
        .unwrap();
    assert_eq!(ev[fin + 1].kind, EventKind::BlockFlushed);
    assert_eq!(ev[fin + 2].kind, EventKind::WorkOrderDispatched);
    assert_eq!(ev[fin + 2].block_id, ev[fin + 1].block_id);
    assert_eq!(out.row_count(), 55);
}

fn join_plan(c: &Catalog) -> PlanDag {
    let s = Schema::parse("k:int,v:int").unwrap();
    let mut b = PlanBuilder::new(c);
    let sel = b
        .select(Input::table("fact"), Predicate::new(vec![Atom::new(1, Comparator::Lt, 40)]), Projection::identity(&s))
        .unwrap();
    let build = b
        .build_hash(Input::table("dim"), vec![0], vec![1], HashTableConfig::default())
        .unwrap();
    let proj = Projection::default()
        .with("v", Expr::col(1))
        .with("name", Expr::col(2));
    b.probe_hash(build, Input::op(sel), vec![0], proj).unwrap();
    b.finish(None).unwrap()
}

#[test]
fn probes_wait_for_build_and_still_join_everything() {
    let c = catalog(100, Layout::ColumnStore);
    let plan = join_plan(&c);
    for uot in [UoTPolicy::Blocks(1), UoTPolicy::Blocks(4), UoTPolicy::WholeTable] {
        for t in [1, 3] {
            let out = run(&c, &plan, uot, t);
            let ev = &out.metrics.events;
            assert!(verify_build_probe_barrier(ev, &plan).is_empty());
            assert!(verify_timestamps(ev).is_empty());
            assert!(verify_worker_conservation(ev, t).is_empty());
            assert!(verify_monotone_availability(ev).is_empty());
            if uot == UoTPolicy::Blocks(1) {
                assert!(verify_promptness(ev, &plan).is_empty());
            }
            if uot == UoTPolicy::WholeTable {
                assert!(verify_non_pipelining(ev, &plan).is_empty());
            }
            let expected: Vec<Vec<Value>> = {
                let mut v: Vec<_> = (0..40).map(|i| vec![Value::Int(i), Value::Int(100 + i % 7)]).collect();
                v.sort();
                v
            };
            assert_eq!(out.sorted_rows(), expected);
        }
    }
}

#[test]
fn probe_dispatch_waits_for_build_completion() {
    // build is slow relative to the select, so select blocks pile up
    let c = catalog(100, Layout::RowStore);
    let plan = join_plan(&c);
    let out = run(&c, &plan, UoTPolicy::Blocks(1), 1);
    let ev = &out.metrics.events;
    let build_done = ev
        .iter()
        .find(|e| e.kind == EventKind::OperatorFinished && e.op_id == 1)
        .unwrap()
        .timestamp;
    assert!(ev
        .iter()
        .filter(|e| e.kind == EventKind::WorkOrderDispatched && e.op_id == 2)
        .all(|e| e.timestamp > build_done));
}

#[test]
fn one_worker_never_exceeds_dop_one() {
    let c = catalog(200, Layout::RowStore);
    let plan = join_plan(&c);
    let out = run(&c, &plan, UoTPolicy::Blocks(1), 1);
    for op in 0..plan.len() {
        assert!(out.metrics.dop_timeline(op).unwrap().peak <= 1);
    }
    assert!(out.metrics.dop_timeline(99).is_err());
}

#[test]
fn whole_table_consumer_reaches_full_dop() {
    // four producer blocks, four workers, slow consumer work orders
    let c = catalog(40, Layout::RowStore);
    let plan = two_selects(&c, 0, 2_000_000);
    let out = run(&c, &plan, UoTPolicy::WholeTable, 4);
    assert_eq!(out.metrics.dop_timeline(1).unwrap().peak, 4);
}

#[test]
fn dop_cap_limits_concurrency() {
    let c = catalog(80, Layout::RowStore);
    let plan = two_selects(&c, 0, 200_000);
    let mut cfg = ExecConfig::new(UoTPolicy::WholeTable, 4, BS);
    cfg.dop_caps.insert(1, 2);
    let out = run_query(&c, &plan, &cfg).unwrap();
    assert!(out.metrics.dop_timeline(1).unwrap().peak <= 2);
    assert_eq!(out.row_count(), 80);
}

#[test]
fn always_false_select_has_no_intermediate_bytes() {
    let c = catalog(100, Layout::RowStore);
    let s = Schema::parse("k:int,v:int").unwrap();
    let mut b = PlanBuilder::new(&c);
    b.select(Input::table("fact"), Predicate::new(vec![Atom::new(1, Comparator::Lt, -1)]), Projection::identity(&s))
        .unwrap();
    let plan = b.finish(None).unwrap();
    let out = run(&c, &plan, UoTPolicy::Blocks(1), 2);
    assert_eq!(out.row_count(), 0);
    assert_eq!(out.metrics.peak_intermediate_bytes(), 0);
}

#[test]
fn temporary_blocks_are_released_after_consumption() {
    let c = catalog(500, Layout::RowStore);
    let plan = two_selects(&c, 0, 0);
    let k1 = run(&c, &plan, UoTPolicy::Blocks(1), 1);
    let whole = run(&c, &plan, UoTPolicy::WholeTable, 1);
    // one block in flight at a time vs the whole materialized table
    assert_eq!(k1.metrics.peak_temp_block_bytes, 160);
    assert_eq!(whole.metrics.peak_temp_block_bytes, 50 * 160);
}

#[test]
fn memory_cap_aborts_query() {
    let c = catalog(500, Layout::RowStore);
    let plan = two_selects(&c, 0, 0);
    let mut cfg = ExecConfig::new(UoTPolicy::WholeTable, 2, BS);
    cfg.memory_cap = Some(1000);
    let err = run_query(&c, &plan, &cfg).unwrap_err();
    assert!(matches!(err, uot_core::Error::OutOfMemoryBudget { .. }));
}

#[test]
fn aggregate_sink_counts_groups() {
    let c = catalog(100, Layout::ColumnStore);
    let mut b = PlanBuilder::new(&c);
    b.aggregate(Input::table("fact"), vec![0], vec![AggregateExpr::count("n"), AggregateExpr::sum(1, "s")])
        .unwrap();
    let plan = b.finish(None).unwrap();
    let out = run(&c, &plan, UoTPolicy::Blocks(1), 3);
    let rows = out.sorted_rows();
    assert_eq!(rows.len(), 7);
    let members: Vec<i64> = (0..100).filter(|i| i % 7 == 3).collect();
    let expect = vec![Value::Int(3), Value::Int(members.len() as i64), Value::Int(members.iter().sum())];
    assert_eq!(rows[3], expect);
}

#[test]
fn shuffled_schedules_give_identical_results() {
    let c = catalog(300, Layout::RowStore);
    let plan = join_plan(&c);
    let base = run(&c, &plan, UoTPolicy::Blocks(1), 1).sorted_rows();
    for seed in 0..5 {
        let mut cfg = ExecConfig::new(UoTPolicy::Blocks(2), 3, BS);
        cfg.order = DispatchOrder::Shuffled(seed);
        assert_eq!(run_query(&c, &plan, &cfg).unwrap().sorted_rows(), base);
    }
}

#[test]
fn select_conservation_and_spans() {
    let c = catalog(123, Layout::RowStore);
    let plan = join_plan(&c);
    let out = run(&c, &plan, UoTPolicy::Blocks(1), 2);
    let m = &out.metrics;
    assert_eq!(m.operator(0).unwrap().tuples_in, 123);
    let q = m.query_ns;
    for op in 0..plan.len() {
        let (s, e) = m.operator_span(op).unwrap();
        assert!(s <= e && e <= q);
    }
}
