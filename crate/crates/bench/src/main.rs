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

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use uot_bench::config::{parse_size, ExperimentConfig};
use uot_bench::datagen::{DimensionSpec, FactSpec};
use uot_bench::report::{read_span_rows, report_operator_split, write_split_csv};
use uot_bench::sweep::{check_trace, result_csv, run_point, run_sweep, ConfigPoint, Outputs};
use uot_core::costmodel::{
    calibrate_params, cost_ratio, extra_cost_disk, extra_cost_high_uot, extra_cost_low_uot, format_params,
    parse_params, CostParamsF64, Param, Source, UotExtreme,
};
use uot_core::memmodel::{compare_footprints, HashTableSpecF64, SelectionStatsF64};
use uot_core::scheduler::UoTPolicy;
use uot_core::storage::{loader, Catalog, Layout, Schema};

#[derive(Parser)]
#[command(name = "uot", version, about = "Unit-of-transfer query engine benchmark harness")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for data generation
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Block size, e.g. 4096, 128K, 2M
    #[arg(long, global = true)]
    block_size: Option<String>,
    /// Unit of transfer: a block count or `whole`
    #[arg(long, global = true)]
    uot: Option<UoTPolicy>,
    /// Storage layout: row or column
    #[arg(long, global = true)]
    layout: Option<String>,
    /// Engine memory budget, e.g. 512M
    #[arg(long, global = true)]
    buffer_cap: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic table as delimited text
    Gen(GenArgs),
    /// Load a delimited table and print its storage summary
    Load(LoadArgs),
    /// Run one query of a configuration once per repetition
    Run(RunArgs),
    /// Run every point of a configuration's sweep
    Sweep(SweepArgs),
    /// Evaluate the cost model
    Costmodel(CostArgs),
    /// Evaluate the memory-footprint model
    Memmodel(MemArgs),
    /// Per-operator time split from whole-table runs
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "fact")]
    kind: String,
    #[arg(long, default_value = "fact")]
    name: String,
    #[arg(long)]
    rows: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 0.5)]
    selectivity: f64,
    #[arg(long, default_value_t = 32)]
    projected_bytes: usize,
    #[arg(long, default_value_t = 1000)]
    key_cardinality: u64,
    #[arg(long, default_value_t = '|')]
    delimiter: char,
    /// Output file; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LoadArgs {
    file: PathBuf,
    #[arg(long)]
    table: String,
    /// Column list such as `key:int,price:float,name:bytes16`
    #[arg(long)]
    schema: String,
    #[arg(long, default_value_t = '|')]
    delimiter: char,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Verify the scheduling invariants on the trace; exit 3 on violation
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct CostArgs {
    /// Parameter file of key=value lines
    #[arg(long)]
    params: Option<PathBuf>,
    /// Override one parameter, e.g. --set write_mem=10
    #[arg(long = "set")]
    sets: Vec<String>,
    /// Measure memory costs on this machine first
    #[arg(long)]
    calibrate: bool,
    /// Write the final parameters to this file
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct MemArgs {
    #[arg(long, default_value = "query")]
    query: String,
    /// Bytes of the table the leaf selection reads
    #[arg(long)]
    input_bytes: String,
    #[arg(long)]
    selectivity: f64,
    #[arg(long)]
    projectivity: f64,
    /// Hash table `input_bytes,tuple_bytes,bucket_bytes,load_factor`, in
    /// build order; repeat for each join
    #[arg(long = "hash")]
    hashes: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// operator_spans.csv from a sweep
    #[arg(long)]
    spans: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(anyhow::Error),
    Engine(anyhow::Error),
    Check(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Gen(a) => gen(&cli.global, a).map_err(Failure::from),
        Command::Load(a) => load(&cli.global, a).map_err(Failure::from),
        Command::Run(a) => run(&cli.global, a),
        Command::Sweep(a) => sweep(&cli.global, a),
        Command::Costmodel(a) => cost(&cli.global, a).map_err(Failure::from),
        Command::Memmodel(a) => mem(a).map_err(Failure::from),
        Command::Report(a) => report(a).map_err(Failure::from),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Engine(e)) => {
            eprintln!("engine error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
    }
}

fn layout_of(g: &Global) -> anyhow::Result<Option<Layout>> {
    g.layout
        .as_deref()
        .map(|l| Layout::parse(l).with_context(|| format!("unknown layout `{l}`")))
        .transpose()
}

fn block_size_of(g: &Global) -> anyhow::Result<Option<usize>> {
    g.block_size.as_deref().map(parse_size).transpose()
}

fn buffer_cap_of(g: &Global) -> anyhow::Result<Option<u64>> {
    Ok(g.buffer_cap.as_deref().map(parse_size).transpose()?.map(|b| b as u64))
}

fn open_out(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn gen(g: &Global, a: &GenArgs) -> anyhow::Result<()> {
    let seed = g.seed.unwrap_or(0);
    let (schema, rows) = match a.kind.as_str() {
        "fact" => {
            let spec = FactSpec {
                name: a.name.clone(),
                rows: a.rows,
                tuple_width: a.width,
                selectivity: a.selectivity,
                projected_bytes: a.projected_bytes,
                key_cardinality: a.key_cardinality,
                seed,
            };
            let d = spec.generate()?;
            eprintln!("threshold: flag < {} passes {} of {} rows", d.threshold, d.passing_rows, a.rows);
            (d.schema, d.rows)
        }
        "dimension" => DimensionSpec { name: a.name.clone(), rows: a.rows, tuple_width: a.width, seed }.generate()?,
        other => bail!("unknown table kind `{other}`"),
    };
    eprintln!("schema: {}", schema_spec(&schema));
    let out = std::io::BufWriter::new(open_out(&a.out)?);
    loader::write_delimited(out, rows, a.delimiter)?;
    Ok(())
}

fn schema_spec(schema: &Schema) -> String {
    schema
        .columns()
        .iter()
        .map(|c| format!("{}:{}", c.name, c.ty))
        .collect::<Vec<_>>()
        .join(",")
}

fn load(g: &Global, a: &LoadArgs) -> anyhow::Result<()> {
    let schema = Schema::parse(&a.schema)?;
    let layout = layout_of(g)?.unwrap_or(Layout::RowStore);
    let block_size = block_size_of(g)?.unwrap_or(128 * 1024);
    let file = std::fs::File::open(&a.file).with_context(|| format!("opening {}", a.file.display()))?;
    let mut catalog = Catalog::new();
    loader::load_delimited(&mut catalog, &a.table, schema, layout, block_size, std::io::BufReader::new(file), a.delimiter)?;
    let t = catalog.table(&a.table)?;
    println!("table,layout,block_size,tuple_width,rows,blocks,bytes");
    println!(
        "{},{},{},{},{},{},{}",
        t.name(),
        layout.as_str(),
        block_size,
        t.schema().tuple_width(),
        t.total_tuples(),
        t.blocks().len(),
        t.handle().bytes()
    );
    Ok(())
}

fn load_config(path: &Path, g: &Global) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(cap) = buffer_cap_of(g)? {
        cfg.memory_cap = Some(cap);
    }
    Ok(cfg)
}

fn run(g: &Global, a: &RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&a.config, g)?;
    if let Some(r) = a.repetitions {
        if r == 0 {
            return Err(Failure::Config(anyhow::anyhow!("repetitions must be at least 1")));
        }
        cfg.repetitions = r;
    }
    let q = cfg.query(&a.query)?.clone();
    let point = ConfigPoint {
        query: q.name.clone(),
        block_size: block_size_of(g)?.unwrap_or(128 * 1024),
        uot: g.uot.unwrap_or_default(),
        layout: layout_of(g)?.unwrap_or(Layout::RowStore),
        threads: g.threads.unwrap_or(1),
    };
    let loaded = cfg.load_tables(point.layout, point.block_size)?;
    let dag = cfg.plan_spec(&q, &loaded.thresholds)?.resolve(&loaded.catalog).map_err(anyhow::Error::from)?;
    let chain = cfg.chain_of(&q, &dag)?;
    let chain_names: Vec<&str> = chain.iter().map(|&c| dag.nodes()[c].name.as_str()).collect();
    let out_dir = a.out.clone().unwrap_or_else(|| cfg.resolve(&cfg.output_dir));
    let mut outputs = Outputs::create(&out_dir)?;
    let (result, first) = match run_point(&loaded.catalog, &dag, &chain, &point, cfg.repetitions, cfg.memory_cap) {
        Ok(r) => r,
        Err(e) => {
            outputs.record_error(&point, &e)?;
            outputs.flush()?;
            return Err(Failure::Engine(e.into()));
        }
    };
    outputs.record(&result, &chain_names.join(">"), &first.metrics.events)?;
    outputs.flush()?;
    std::fs::write(out_dir.join("result.csv"), result_csv(&first.schema, &first.sorted_rows()))
        .context("writing result.csv")?;
    println!(
        "{}: {} rows, {:.0} ns (mean of best {} of {})",
        q.name,
        first.row_count(),
        result.query_ns(),
        result.best.len(),
        result.runs.len()
    );
    if a.check {
        let v = check_trace(&first.metrics.events, &dag, point.uot, point.threads);
        if !v.is_empty() {
            return Err(Failure::Check(describe(v.iter().map(|x| x.to_string()))));
        }
        println!("check: trace satisfies all scheduling invariants");
    }
    Ok(())
}

fn describe(items: impl Iterator<Item = String>) -> String {
    let all: Vec<String> = items.collect();
    let shown: Vec<&String> = all.iter().take(10).collect();
    format!(
        "{} violation(s): {}",
        all.len(),
        shown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("; ")
    )
}

fn sweep(g: &Global, a: &SweepArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&a.config, g)?;
    if let Some(t) = g.threads {
        cfg.sweep.threads = vec![t];
    }
    if let Some(b) = block_size_of(g)? {
        cfg.sweep.block_sizes = vec![b];
    }
    if let Some(u) = g.uot {
        cfg.sweep.uot = vec![u];
    }
    if let Some(l) = layout_of(g)? {
        cfg.sweep.layouts = vec![l];
    }
    cfg.validate()?;
    let out_dir = a.out.clone().unwrap_or_else(|| cfg.resolve(&cfg.output_dir));
    let s = run_sweep(&cfg, &out_dir, a.check)?;
    println!(
        "{} points, {} runs, {} aborted; results in {}",
        s.points,
        s.runs,
        s.aborted,
        out_dir.display()
    );
    if a.check && !s.violations.is_empty() {
        return Err(Failure::Check(describe(
            s.violations.iter().map(|(p, v)| format!("{} uot={} T={}: {v}", p.query, p.uot, p.threads)),
        )));
    }
    if s.aborted > 0 {
        return Err(Failure::Engine(anyhow::anyhow!("{} point(s) aborted, see errors.csv", s.aborted)));
    }
    Ok(())
}

fn cost(g: &Global, a: &CostArgs) -> anyhow::Result<()> {
    let mut p = match &a.params {
        Some(path) => parse_params(&std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
        None => CostParamsF64::default(),
    };
    if a.calibrate {
        eprintln!("calibrating; keep the machine otherwise idle");
        // --block-size, else a uot_bytes from the parameter file, else 2 MiB
        let block = match block_size_of(g)? {
            Some(b) => b,
            None if p.source(Param::UotBytes) != Source::Default => p.uot_bytes.max(1.0) as usize,
            None => 2 * 1024 * 1024,
        };
        let cal = calibrate_params(block)?;
        for k in [Param::ReadL3, Param::AmortizedReadL3, Param::WriteMem, Param::L3Bytes, Param::UotBytes] {
            p.set(k, cal.get(k), Source::Calibrated);
        }
    }
    for s in &a.sets {
        let (k, v) = s.split_once('=').with_context(|| format!("expected key=value, got `{s}`"))?;
        let key = Param::from_key(k.trim()).with_context(|| format!("unknown parameter `{k}`"))?;
        let v: f64 = v.trim().parse().with_context(|| format!("bad value in `{s}`"))?;
        p.set(key, v, Source::User);
    }
    for w in p.validate()? {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &a.emit {
        std::fs::write(path, format_params(&p)).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", format_params(&p));
    let show = |r: uot_core::Result<f64>| match r {
        Ok(v) => format!("{v}"),
        Err(e) => format!("undefined ({e})"),
    };
    println!("p_prime_1={}", show(p.p_prime_1()));
    println!("extra_cost_high_uot={}", show(extra_cost_high_uot(&p)));
    println!("extra_cost_low_uot={}", show(extra_cost_low_uot(&p)));
    println!("cost_ratio_simplified={}", show(cost_ratio(&p, true)));
    println!("cost_ratio_full={}", show(cost_ratio(&p, false)));
    println!("extra_cost_disk_high={}", show(extra_cost_disk(&p, UotExtreme::High)));
    println!("extra_cost_disk_low={}", show(extra_cost_disk(&p, UotExtreme::Low)));
    if p.in_large_uot_regime() {
        println!("# regime: uot_bytes > l3_bytes / (2 threads), so p_prime_1 = 1;");
        println!("# with p2 near 0 and write_mem dominant the ratio approaches 1");
    } else {
        println!("# regime: in-flight blocks fit in L3 (uot_bytes <= l3_bytes / (2 threads));");
        println!("# the ratio is reported as is; small units may hold a slight advantage here");
    }
    Ok(())
}

fn mem(a: &MemArgs) -> anyhow::Result<()> {
    let m = parse_size(&a.input_bytes)? as f64;
    let selection = SelectionStatsF64::from_fractions(m, a.selectivity, a.projectivity);
    let mut tables = Vec::new();
    for h in &a.hashes {
        let parts: Vec<&str> = h.split(',').collect();
        if parts.len() != 4 {
            bail!("--hash expects input_bytes,tuple_bytes,bucket_bytes,load_factor, got `{h}`");
        }
        let num = |s: &str| -> anyhow::Result<f64> {
            match parse_size(s) {
                Ok(v) => Ok(v as f64),
                Err(_) => s.trim().parse::<f64>().with_context(|| format!("bad number `{s}`")),
            }
        };
        tables.push(HashTableSpecF64::new(num(parts[0])?, num(parts[1])?, num(parts[2])?, num(parts[3])?));
    }
    let report = compare_footprints(&tables, &selection)?;
    let mut w = csv::Writer::from_writer(open_out(&a.out)?);
    w.write_record(["query", "strategy", "component", "bytes"])?;
    for r in report.rows(&a.query) {
        w.write_record([r.query, r.strategy, r.component, format!("{:.0}", r.bytes)])?;
    }
    w.flush()?;
    Ok(())
}

fn report(a: &ReportArgs) -> anyhow::Result<()> {
    let file = std::fs::File::open(&a.spans).with_context(|| format!("opening {}", a.spans.display()))?;
    let rows = read_span_rows(file)?;
    let split = report_operator_split(&rows)?;
    write_split_csv(open_out(&a.out)?, &split)
}
