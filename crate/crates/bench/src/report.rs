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

//! Share of query time spent in each operator.
//!
//! Spans only add up to a meaningful split when operators do not overlap,
//! so only runs that pass whole tables between operators are accepted.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use anyhow::Context;

#[derive(Debug, Clone, PartialEq)]
pub struct SpanRow {
    pub query: String,
    pub block_size: usize,
    pub uot: String,
    pub layout: String,
    pub threads: usize,
    pub operator: String,
    pub kind: String,
    pub leaf: bool,
    pub span_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitRow {
    pub query: String,
    pub block_size: usize,
    pub layout: String,
    pub threads: usize,
    pub operator: String,
    pub kind: String,
    pub leaf: bool,
    pub span_ns: f64,
    pub share: f64,
    /// `dominant`, `second`, or empty.
    pub rank: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReportError {
    /// Records came from runs that overlap operators.
    RefusesOverlappedRuns { query: String, uot: String },
}

impl fmt::Display for ReportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportError::RefusesOverlappedRuns { query, uot } => write!(
                f,
                "query `{query}` was run with unit of transfer {uot}; operator splits need whole-table runs"
            ),
        }
    }
}

impl std::error::Error for ReportError {}

pub const SPLIT_COLUMNS: [&str; 10] =
    ["query", "block_size", "layout", "threads", "operator", "kind", "leaf", "span_ns", "share", "rank"];

/// Per query and configuration, each operator's span as a fraction of the
/// summed spans, with the two largest flagged.
pub fn report_operator_split(rows: &[SpanRow]) -> Result<Vec<SplitRow>, ReportError> {
    if let Some(r) = rows.iter().find(|r| r.uot != "whole") {
        return Err(ReportError::RefusesOverlappedRuns { query: r.query.clone(), uot: r.uot.clone() });
    }
    let mut groups: BTreeMap<(String, usize, String, usize), Vec<&SpanRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.query.clone(), r.block_size, r.layout.clone(), r.threads)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((query, block_size, layout, threads), members) in groups {
        let total: f64 = members.iter().map(|r| r.span_ns).sum();
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.sort_by(|&a, &b| members[b].span_ns.total_cmp(&members[a].span_ns).then(a.cmp(&b)));
        for (i, r) in members.iter().enumerate() {
            let rank = if order.first() == Some(&i) {
                "dominant"
            } else if order.get(1) == Some(&i) {
                "second"
            } else {
                ""
            };
            out.push(SplitRow {
                query: query.clone(),
                block_size,
                layout: layout.clone(),
                threads,
                operator: r.operator.clone(),
                kind: r.kind.clone(),
                leaf: r.leaf,
                span_ns: r.span_ns,
                share: if total > 0.0 { r.span_ns / total } else { 0.0 },
                rank,
            });
        }
    }
    Ok(out)
}

/// Reads an `operator_spans.csv` written by a sweep.
pub fn read_span_rows<R: Read>(input: R) -> anyhow::Result<Vec<SpanRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).with_context(|| format!("missing column `{name}`"));
    let idx: Vec<usize> = ["query", "block_size", "uot", "layout", "threads", "operator", "kind", "leaf", "span_ns"]
        .iter()
        .map(|c| col(c))
        .collect::<anyhow::Result<_>>()?;
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f = |i: usize| rec.get(idx[i]).unwrap_or("");
        let ctx = || format!("row {}", line + 2);
        rows.push(SpanRow {
            query: f(0).to_string(),
            block_size: f(1).parse().with_context(ctx)?,
            uot: f(2).to_string(),
            layout: f(3).to_string(),
            threads: f(4).parse().with_context(ctx)?,
            operator: f(5).to_string(),
            kind: f(6).to_string(),
            leaf: f(7).parse().with_context(ctx)?,
            span_ns: f(8).parse().with_context(ctx)?,
        });
    }
    Ok(rows)
}

pub fn write_split_csv<W: std::io::Write>(out: W, rows: &[SplitRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SPLIT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.query.clone(),
            r.block_size.to_string(),
            r.layout.clone(),
            r.threads.to_string(),
            r.operator.clone(),
            r.kind.clone(),
            r.leaf.to_string(),
            format!("{:.0}", r.span_ns),
            format!("{:.6}", r.share),
            r.rank.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
