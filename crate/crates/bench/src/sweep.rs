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

//! Experiment sweeps: every (block size, unit of transfer, layout, thread
//! count) point of a configuration, run repeatedly, summarized by the mean
//! of the fastest runs.

use std::fs::File;
use std::path::Path;

use anyhow::Context;

use uot_core::plan::{Input, OpId, PlanDag};
use uot_core::scheduler::verify::{self, Violation};
use uot_core::scheduler::{dump_events, run_query, ExecConfig, QueryOutput, SchedulerEvent, UoTPolicy};
use uot_core::storage::{Catalog, Layout, Schema, Value};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigPoint {
    pub query: String,
    pub block_size: usize,
    pub uot: UoTPolicy,
    pub layout: Layout,
    pub threads: usize,
}

impl ConfigPoint {
    pub const COLUMNS: [&'static str; 5] = ["query", "block_size", "uot", "layout", "threads"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.query.clone(),
            self.block_size.to_string(),
            self.uot.to_string(),
            self.layout.as_str().to_string(),
            self.threads.to_string(),
        ]
    }

    pub fn exec_config(&self, memory_cap: Option<u64>) -> ExecConfig {
        ExecConfig { memory_cap, ..ExecConfig::new(self.uot, self.threads, self.block_size) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorRun {
    pub op_id: OpId,
    pub name: String,
    pub kind: &'static str,
    /// Reads a base table.
    pub leaf: bool,
    pub span_ns: u64,
    pub work_order_ns: Vec<u64>,
    pub peak_dop: usize,
    pub mean_dop: f64,
}

/// One execution of one configuration point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub point: ConfigPoint,
    pub repetition: usize,
    pub query_ns: u64,
    pub chain_ns: u64,
    pub operators: Vec<OperatorRun>,
    pub peak_intermediate_bytes: u64,
    pub peak_temp_block_bytes: u64,
    pub peak_hash_table_bytes: u64,
    pub result_bytes: u64,
    pub result_rows: usize,
}

impl RunRecord {
    pub fn from_output(point: &ConfigPoint, repetition: usize, dag: &PlanDag, chain: &[OpId], out: &QueryOutput) -> Self {
        let m = &out.metrics;
        let operators = dag
            .nodes()
            .iter()
            .map(|n| {
                let dop = m.dop_timeline(n.id).ok();
                OperatorRun {
                    op_id: n.id,
                    name: n.name.clone(),
                    kind: n.kind.label(),
                    leaf: matches!(n.input, Input::Table(_)),
                    span_ns: m.operator_span_ns(n.id),
                    work_order_ns: m.work_orders_of(n.id).map(|w| w.duration_ns()).collect(),
                    peak_dop: dop.as_ref().map_or(0, |d| d.peak),
                    mean_dop: dop.as_ref().map_or(0.0, |d| d.mean),
                }
            })
            .collect();
        RunRecord {
            point: point.clone(),
            repetition,
            query_ns: m.query_ns,
            chain_ns: m.chain_span_ns(chain),
            operators,
            peak_intermediate_bytes: m.peak_intermediate_bytes,
            peak_temp_block_bytes: m.peak_temp_block_bytes,
            peak_hash_table_bytes: m.peak_hash_table_bytes,
            result_bytes: m.result_bytes,
            result_rows: out.row_count(),
        }
    }
}

/// How many of `n` repetitions enter the reported mean: `ceil(0.3 n)`.
pub fn best_count(n: usize) -> usize {
    (3 * n).div_ceil(10).max(1).min(n)
}

/// Indices of the fastest `best_count(n)` runs, fastest first. Ties keep
/// repetition order.
pub fn best_runs(times: &[u64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by_key(|&i| (times[i], i));
    idx.truncate(best_count(times.len()));
    idx
}

pub fn mean_of(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(values: &[u64], p: f64) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

/// All repetitions of one point plus the chosen fastest subset.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: ConfigPoint,
    pub runs: Vec<RunRecord>,
    pub best: Vec<usize>,
}

impl PointResult {
    pub fn new(point: ConfigPoint, runs: Vec<RunRecord>) -> Self {
        let times: Vec<u64> = runs.iter().map(|r| r.query_ns).collect();
        let best = best_runs(&times);
        PointResult { point, runs, best }
    }

    fn best_mean(&self, f: impl Fn(&RunRecord) -> f64) -> f64 {
        mean_of(self.best.iter().map(|&i| f(&self.runs[i])))
    }

    pub fn query_ns(&self) -> f64 {
        self.best_mean(|r| r.query_ns as f64)
    }

    pub fn mean_all_ns(&self) -> f64 {
        mean_of(self.runs.iter().map(|r| r.query_ns as f64))
    }

    pub fn chain_ns(&self) -> f64 {
        self.best_mean(|r| r.chain_ns as f64)
    }

    pub fn operator_span_ns(&self, op: usize) -> f64 {
        self.best_mean(|r| r.operators[op].span_ns as f64)
    }

    fn fastest(&self) -> &RunRecord {
        &self.runs[self.best[0]]
    }
}

/// Every verifier that applies to a trace run under `uot` on `threads`.
pub fn check_trace(events: &[SchedulerEvent], dag: &PlanDag, uot: UoTPolicy, threads: usize) -> Vec<Violation> {
    let mut v = Vec::new();
    if uot == UoTPolicy::WholeTable {
        v.extend(verify::verify_non_pipelining(events, dag));
    }
    if uot == UoTPolicy::Blocks(1) {
        v.extend(verify::verify_promptness(events, dag));
    }
    v.extend(verify::verify_build_probe_barrier(events, dag));
    v.extend(verify::verify_worker_conservation(events, threads));
    v.extend(verify::verify_monotone_availability(events));
    v.extend(verify::verify_timestamps(events));
    v
}

/// Runs one point `repetitions` times. Also returns the first run's output.
pub fn run_point(
    catalog: &Catalog,
    dag: &PlanDag,
    chain: &[OpId],
    point: &ConfigPoint,
    repetitions: usize,
    memory_cap: Option<u64>,
) -> uot_core::Result<(PointResult, QueryOutput)> {
    let cfg = point.exec_config(memory_cap);
    let mut runs = Vec::with_capacity(repetitions);
    let mut first = None;
    for rep in 0..repetitions {
        let out = run_query(catalog, dag, &cfg)?;
        runs.push(RunRecord::from_output(point, rep, dag, chain, &out));
        if first.is_none() {
            first = Some(out);
        }
    }
    Ok((PointResult::new(point.clone(), runs), first.expect("at least one repetition")))
}

/// Sorted result rows as CSV with a header of column names.
pub fn result_csv(schema: &Schema, rows: &[Vec<Value>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(schema.columns().iter().map(|c| c.name.as_str())).expect("in-memory write");
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 values")
}

fn header(extra: &[&str]) -> Vec<String> {
    ConfigPoint::COLUMNS.iter().chain(extra).map(|s| s.to_string()).collect()
}

pub const QUERY_TIMES_COLUMNS: [&str; 5] = ["repetitions", "best_runs", "time_ns", "mean_all_ns", "result_rows"];
pub const RUNS_COLUMNS: [&str; 2] = ["repetition", "query_ns"];
pub const CHAIN_COLUMNS: [&str; 2] = ["chain", "time_ns"];
pub const WORKORDER_COLUMNS: [&str; 6] = ["operator", "kind", "work_orders", "mean_ns", "p50_ns", "p99_ns"];
pub const DOP_COLUMNS: [&str; 3] = ["operator", "peak_dop", "mean_dop"];
pub const MEMORY_COLUMNS: [&str; 4] =
    ["peak_intermediate_bytes", "peak_temp_block_bytes", "peak_hash_table_bytes", "result_bytes"];
pub const SPAN_COLUMNS: [&str; 4] = ["operator", "kind", "leaf", "span_ns"];
pub const ERROR_COLUMNS: [&str; 1] = ["error"];

/// The CSV files of one output directory.
pub struct Outputs {
    query_times: csv::Writer<File>,
    runs: csv::Writer<File>,
    chains: csv::Writer<File>,
    work_orders: csv::Writer<File>,
    dop: csv::Writer<File>,
    memory: csv::Writer<File>,
    spans: csv::Writer<File>,
    errors: csv::Writer<File>,
    events: File,
}

fn open(dir: &Path, name: &str, cols: &[&str]) -> anyhow::Result<csv::Writer<File>> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header(cols))?;
    Ok(w)
}

impl Outputs {
    pub fn create(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs {
            query_times: open(dir, "query_times.csv", &QUERY_TIMES_COLUMNS)?,
            runs: open(dir, "runs.csv", &RUNS_COLUMNS)?,
            chains: open(dir, "chain_times.csv", &CHAIN_COLUMNS)?,
            work_orders: open(dir, "workorder_times.csv", &WORKORDER_COLUMNS)?,
            dop: open(dir, "dop.csv", &DOP_COLUMNS)?,
            memory: open(dir, "memory.csv", &MEMORY_COLUMNS)?,
            spans: open(dir, "operator_spans.csv", &SPAN_COLUMNS)?,
            errors: open(dir, "errors.csv", &ERROR_COLUMNS)?,
            events: File::create(dir.join("events.log"))?,
        })
    }

    pub fn record(&mut self, r: &PointResult, chain_names: &str, events: &[SchedulerEvent]) -> anyhow::Result<()> {
        use std::io::Write;
        let base = r.point.fields();
        let row = |extra: Vec<String>| base.iter().cloned().chain(extra).collect::<Vec<_>>();
        let fastest = r.fastest();
        self.query_times.write_record(row(vec![
            r.runs.len().to_string(),
            r.best.len().to_string(),
            format!("{:.0}", r.query_ns()),
            format!("{:.0}", r.mean_all_ns()),
            fastest.result_rows.to_string(),
        ]))?;
        for run in &r.runs {
            self.runs.write_record(row(vec![run.repetition.to_string(), run.query_ns.to_string()]))?;
        }
        self.chains.write_record(row(vec![chain_names.to_string(), format!("{:.0}", r.chain_ns())]))?;
        for (op, o) in fastest.operators.iter().enumerate() {
            let all: Vec<u64> = r.runs.iter().flat_map(|run| run.operators[op].work_order_ns.iter().copied()).collect();
            self.work_orders.write_record(row(vec![
                o.name.clone(),
                o.kind.to_string(),
                o.work_order_ns.len().to_string(),
                format!("{:.0}", mean_of(all.iter().map(|&v| v as f64))),
                percentile(&all, 50.0).to_string(),
                percentile(&all, 99.0).to_string(),
            ]))?;
            self.dop.write_record(row(vec![o.name.clone(), o.peak_dop.to_string(), format!("{:.3}", o.mean_dop)]))?;
            self.spans.write_record(row(vec![
                o.name.clone(),
                o.kind.to_string(),
                o.leaf.to_string(),
                format!("{:.0}", r.operator_span_ns(op)),
            ]))?;
        }
        self.memory.write_record(row(vec![
            fastest.peak_intermediate_bytes.to_string(),
            fastest.peak_temp_block_bytes.to_string(),
            fastest.peak_hash_table_bytes.to_string(),
            fastest.result_bytes.to_string(),
        ]))?;
        writeln!(self.events, "# {}", base.join(","))?;
        self.events.write_all(dump_events(events).as_bytes())?;
        Ok(())
    }

    pub fn record_error(&mut self, point: &ConfigPoint, err: &uot_core::Error) -> anyhow::Result<()> {
        let mut row = point.fields();
        row.push(err.to_string());
        self.errors.write_record(row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> anyhow::Result<()> {
        use std::io::Write;
        for w in [
            &mut self.query_times,
            &mut self.runs,
            &mut self.chains,
            &mut self.work_orders,
            &mut self.dop,
            &mut self.memory,
            &mut self.spans,
            &mut self.errors,
        ] {
            w.flush()?;
        }
        self.events.flush()?;
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct SweepSummary {
    pub points: usize,
    pub runs: usize,
    pub aborted: usize,
    pub violations: Vec<(ConfigPoint, Violation)>,
    pub results: Vec<PointResult>,
}

/// Runs every point of `cfg`, writing CSVs into `out_dir`. Engine errors
/// abort only the point they occur in. With `check`, the first trace of
/// every point is verified.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path, check: bool) -> anyhow::Result<SweepSummary> {
    let mut outputs = Outputs::create(out_dir)?;
    let mut summary = SweepSummary::default();
    let s = &cfg.sweep;
    for &layout in &s.layouts {
        for &block_size in &s.block_sizes {
            let loaded = cfg.load_tables(layout, block_size)?;
            for q in &cfg.queries {
                let dag = cfg.plan_spec(q, &loaded.thresholds)?.resolve(&loaded.catalog)?;
                let chain = cfg.chain_of(q, &dag)?;
                let chain_names: Vec<&str> = chain.iter().map(|&c| dag.nodes()[c].name.as_str()).collect();
                for &uot in &s.uot {
                    for &threads in &s.threads {
                        let point = ConfigPoint { query: q.name.clone(), block_size, uot, layout, threads };
                        summary.points += 1;
                        match run_point(&loaded.catalog, &dag, &chain, &point, cfg.repetitions, cfg.memory_cap) {
                            Ok((result, first)) => {
                                if check {
                                    for v in check_trace(&first.metrics.events, &dag, uot, threads) {
                                        summary.violations.push((point.clone(), v));
                                    }
                                }
                                summary.runs += result.runs.len();
                                outputs.record(&result, &chain_names.join(">"), &first.metrics.events)?;
                                summary.results.push(result);
                            }
                            Err(e) => {
                                summary.aborted += 1;
                                outputs.record_error(&point, &e)?;
                            }
                        }
                    }
                }
            }
        }
    }
    outputs.flush()?;
    Ok(summary)
}
