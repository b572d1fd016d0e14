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

//! Experiment configuration files. The format is documented in
//! `docs/config-format.md`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use serde_json::Value as Json;

use uot_core::operators::hash::mix64;
use uot_core::plan::{PlanDag, PlanSpec};
use uot_core::scheduler::UoTPolicy;
use uot_core::storage::{loader, Catalog, Layout, Schema};

use crate::datagen::{gen_dimension, gen_table, DimensionSpec, FactSpec};

pub const KIB: usize = 1024;
pub const MIB: usize = 1024 * 1024;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub tables: Vec<TableConfig>,
    pub queries: Vec<QueryConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Engine memory budget in bytes.
    pub memory_cap: Option<u64>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_repetitions() -> usize {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TableConfig {
    Fact(FactSpec),
    Dimension(DimensionSpec),
    /// Delimited text, one tuple per line.
    File {
        name: String,
        path: PathBuf,
        schema: String,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
}

fn default_delimiter() -> char {
    '|'
}

impl TableConfig {
    pub fn name(&self) -> &str {
        match self {
            TableConfig::Fact(s) => &s.name,
            TableConfig::Dimension(s) => &s.name,
            TableConfig::File { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PlanSource {
    Path(PathBuf),
    Inline(Json),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryConfig {
    pub name: String,
    pub plan: PlanSource,
    /// Operator names whose combined span is reported as the chain time.
    /// Defaults to the chain of streamable edges ending at the sink.
    pub chain: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_block_sizes")]
    pub block_sizes: Vec<usize>,
    #[serde(default = "default_uots")]
    pub uot: Vec<UoTPolicy>,
    #[serde(default = "default_layouts")]
    pub layouts: Vec<Layout>,
    #[serde(default = "default_threads")]
    pub threads: Vec<usize>,
}

fn default_block_sizes() -> Vec<usize> {
    vec![128 * KIB, 512 * KIB, 2 * MIB]
}

fn default_uots() -> Vec<UoTPolicy> {
    vec![UoTPolicy::Blocks(1), UoTPolicy::WholeTable]
}

fn default_layouts() -> Vec<Layout> {
    vec![Layout::RowStore]
}

fn default_threads() -> Vec<usize> {
    vec![1]
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            block_sizes: default_block_sizes(),
            uot: default_uots(),
            layouts: default_layouts(),
            threads: default_threads(),
        }
    }
}

/// Tables loaded for one (layout, block size) pair, plus the canonical
/// predicate threshold of every generated fact table.
#[derive(Debug)]
pub struct LoadedTables {
    pub catalog: Catalog,
    pub thresholds: HashMap<String, i64>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.repetitions == 0 {
            bail!("repetitions must be at least 1");
        }
        let s = &self.sweep;
        if s.block_sizes.is_empty() || s.uot.is_empty() || s.layouts.is_empty() || s.threads.is_empty() {
            bail!("every sweep list must be non-empty");
        }
        if s.threads.contains(&0) {
            bail!("thread counts must be positive");
        }
        if s.uot.contains(&UoTPolicy::Blocks(0)) {
            bail!("unit of transfer must be at least one block");
        }
        if self.queries.is_empty() {
            bail!("no queries configured");
        }
        let mut names: Vec<&str> = self.tables.iter().map(|t| t.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            bail!("duplicate table name");
        }
        let mut q: Vec<&str> = self.queries.iter().map(|q| q.name.as_str()).collect();
        q.sort_unstable();
        if q.windows(2).any(|w| w[0] == w[1]) {
            bail!("duplicate query name");
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn query(&self, name: &str) -> anyhow::Result<&QueryConfig> {
        self.queries
            .iter()
            .find(|q| q.name == name)
            .with_context(|| format!("no query named `{name}`"))
    }

    /// Seed of the `i`-th table: explicit per-table seeds win, otherwise
    /// one is derived from the experiment seed.
    fn table_seed(&self, i: usize, own: u64) -> u64 {
        if own != 0 {
            own
        } else {
            mix64(self.seed ^ (i as u64 + 1))
        }
    }

    pub fn load_tables(&self, layout: Layout, block_size: usize) -> anyhow::Result<LoadedTables> {
        let mut catalog = Catalog::new();
        let mut thresholds = HashMap::new();
        for (i, t) in self.tables.iter().enumerate() {
            match t {
                TableConfig::Fact(spec) => {
                    let spec = FactSpec { seed: self.table_seed(i, spec.seed), ..spec.clone() };
                    let g = gen_table(&mut catalog, &spec, layout, block_size)?;
                    thresholds.insert(spec.name.clone(), g.threshold);
                }
                TableConfig::Dimension(spec) => {
                    let spec = DimensionSpec { seed: self.table_seed(i, spec.seed), ..spec.clone() };
                    gen_dimension(&mut catalog, &spec, layout, block_size)?;
                }
                TableConfig::File { name, path, schema, delimiter } => {
                    let schema = Schema::parse(schema)?;
                    let path = self.resolve(path);
                    let file = std::fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
                    loader::load_delimited(
                        &mut catalog,
                        name,
                        schema,
                        layout,
                        block_size,
                        std::io::BufReader::new(file),
                        *delimiter,
                    )?;
                }
            }
        }
        Ok(LoadedTables { catalog, thresholds })
    }

    /// Reads a query's plan, substituting `"$<table>.threshold"` strings.
    pub fn plan_spec(&self, query: &QueryConfig, thresholds: &HashMap<String, i64>) -> anyhow::Result<PlanSpec> {
        let json = match &query.plan {
            PlanSource::Path(p) => {
                let path = self.resolve(p);
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            PlanSource::Inline(j) => j.clone(),
        };
        let json = substitute(json, thresholds)?;
        serde_json::from_value(json).with_context(|| format!("plan of query `{}`", query.name))
    }

    /// Operators of the reported chain, in plan order.
    pub fn chain_of(&self, query: &QueryConfig, dag: &PlanDag) -> anyhow::Result<Vec<usize>> {
        match &query.chain {
            None => Ok(dag.main_chain()),
            Some(names) => names
                .iter()
                .map(|n| dag.find(n).with_context(|| format!("chain operator `{n}` not in plan")))
                .collect(),
        }
    }
}

fn substitute(json: Json, thresholds: &HashMap<String, i64>) -> anyhow::Result<Json> {
    Ok(match json {
        Json::String(s) => match s.strip_prefix('$').and_then(|r| r.strip_suffix(".threshold")) {
            Some(table) => match thresholds.get(table) {
                Some(&t) => Json::from(t),
                None => bail!("`{s}` names no generated fact table"),
            },
            None => Json::String(s),
        },
        Json::Array(items) => Json::Array(items.into_iter().map(|j| substitute(j, thresholds)).collect::<anyhow::Result<_>>()?),
        Json::Object(map) => Json::Object(
            map.into_iter()
                .map(|(k, v)| Ok((k, substitute(v, thresholds)?)))
                .collect::<anyhow::Result<_>>()?,
        ),
        other => other,
    })
}

/// Parses byte sizes such as `4096`, `128K`, `128KiB`, or `2M`.
pub fn parse_size(s: &str) -> anyhow::Result<usize> {
    let t = s.trim();
    let upper = t.to_ascii_uppercase();
    let (digits, mult) = if let Some(d) = upper.strip_suffix("KIB").or_else(|| upper.strip_suffix('K')) {
        (d.to_string(), KIB)
    } else if let Some(d) = upper.strip_suffix("MIB").or_else(|| upper.strip_suffix('M')) {
        (d.to_string(), MIB)
    } else if let Some(d) = upper.strip_suffix("GIB").or_else(|| upper.strip_suffix('G')) {
        (d.to_string(), 1024 * MIB)
    } else {
        (upper.clone(), 1)
    };
    let n: usize = digits.trim().parse().with_context(|| format!("bad size `{s}`"))?;
    Ok(n * mult)
}
