//! Experiment configuration files.
//!
//! One experiment per file, written as flat TOML `key = value` pairs. Grids
//! are either TOML arrays or comma-separated strings:
//!
//! ```text
//! task = "TUNE_REG"
//! generator = "block"
//! n = 600
//! k = 3
//! lambda = 5
//! beta = 0.2
//! degree_corrected = true
//! tau_grid = "0.1,0.2,0.3"
//! replications = 50
//! seed = 7
//! ```
//!
//! Unknown keys are rejected so that typos do not silently fall back to
//! defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ecv_core::ecv::Loss;
use ecv_core::simgen::{BlockDesign, GraphonKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

pub const DEFAULT_STABILITY_REPS: usize = 20;
pub const DEFAULT_REPLICATIONS: usize = 50;
pub const DEFAULT_KMAX: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Task {
    SelectModel,
    SelectRank,
    TuneReg,
    TuneGraphon,
    SweepPn,
    Concentration,
}

impl FromStr for Task {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "SELECT_MODEL" => Task::SelectModel,
            "SELECT_RANK" => Task::SelectRank,
            "TUNE_REG" => Task::TuneReg,
            "TUNE_GRAPHON" => Task::TuneGraphon,
            "SWEEP_PN" => Task::SweepPn,
            "CONCENTRATION" => Task::Concentration,
            _ => bail!("unknown task `{s}`"),
        })
    }
}

/// Which variants of each ECV method to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    None,
    Mode,
    Avg,
    Both,
}

impl Stability {
    pub fn mode(self) -> bool {
        matches!(self, Stability::Mode | Stability::Both)
    }

    pub fn avg(self) -> bool {
        matches!(self, Stability::Avg | Stability::Both)
    }
}

impl FromStr for Stability {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "none" => Stability::None,
            "mode" => Stability::Mode,
            "avg" | "average" => Stability::Avg,
            "both" => Stability::Both,
            _ => bail!("unknown stability mode `{s}` (expected none, mode, avg or both)"),
        })
    }
}

pub fn parse_loss(s: &str) -> Result<Loss> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "l2" | "sse" => Loss::L2,
        "deviance" | "dev" => Loss::Deviance,
        "auc" => Loss::Auc,
        _ => bail!("unknown loss `{s}` (expected l2, sse, deviance or auc)"),
    })
}

pub fn parse_graphon(s: &str) -> Result<GraphonKind> {
    Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "piecewise" | "piecewise_k3" => GraphonKind::PiecewiseK3,
        "smooth" | "smooth_rankfull" => GraphonKind::Smooth,
        _ => bail!("unknown graphon `{s}` (expected piecewise or smooth)"),
    })
}

/// Where each replication's network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Block(BlockDesign),
    Rdpg {
        n: usize,
        k: usize,
    },
    Graphon {
        n: usize,
        graphon: GraphonKind,
    },
    /// A fixed network; replications differ only in their ECV randomness.
    EdgeList {
        path: PathBuf,
        directed: bool,
        weighted: bool,
    },
}

impl Source {
    pub fn n(&self) -> Option<usize> {
        match self {
            Source::Block(d) => Some(d.n),
            Source::Rdpg { n, .. } | Source::Graphon { n, .. } => Some(*n),
            Source::EdgeList { .. } => None,
        }
    }

    /// Planted `K`, when there is one.
    pub fn k_true(&self) -> Option<usize> {
        match self {
            Source::Block(d) => Some(d.k),
            Source::Rdpg { k, .. } => Some(*k),
            _ => None,
        }
    }

    pub fn model_tag(&self) -> &'static str {
        match self {
            Source::Block(d) if d.degree_corrected => "DCSBM",
            Source::Block(_) => "SBM",
            Source::Rdpg { .. } => "RDPG",
            Source::Graphon {
                graphon: GraphonKind::PiecewiseK3,
                ..
            } => "GRAPHON_PIECEWISE",
            Source::Graphon {
                graphon: GraphonKind::Smooth,
                ..
            } => "GRAPHON_SMOOTH",
            Source::EdgeList { .. } => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub source: Source,
    /// Largest `K` on the block-model and rank menus.
    pub kmax: usize,
    /// Number of clusters for regularization tuning.
    pub k: Option<usize>,
    /// Largest completion rank tried inside graphon tuning.
    pub completion_kmax: usize,
    pub tau_grid: Vec<f64>,
    pub loss: Loss,
    pub p: f64,
    pub n_splits: usize,
    pub stability: Stability,
    pub stability_reps: usize,
    pub replications: usize,
    pub seed: u64,
    pub sweep_p: Vec<f64>,
    pub sweep_n: Vec<usize>,
    /// CSV path; the JSON summary goes next to it.
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for `task` on `source`; callers overwrite fields as needed.
    pub fn new(task: Task, source: Source) -> Self {
        let rdpg = matches!(source, Source::Rdpg { .. });
        Self {
            task,
            source,
            kmax: DEFAULT_KMAX,
            k: None,
            completion_kmax: DEFAULT_KMAX,
            tau_grid: match task {
                Task::TuneReg => (1..=20).map(|i| i as f64 / 10.0).collect(),
                _ => Vec::new(),
            },
            loss: match task {
                Task::SelectRank if rdpg => Loss::Auc,
                _ => Loss::L2,
            },
            p: 0.9,
            n_splits: 3,
            stability: Stability::None,
            stability_reps: DEFAULT_STABILITY_REPS,
            replications: DEFAULT_REPLICATIONS,
            seed: 0,
            sweep_p: vec![0.85, 0.9, 0.95],
            sweep_n: vec![3],
            output: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = text
            .parse()
            .with_context(|| format!("parsing config {}", path.display()))?;
        // Relative paths inside a config are relative to the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(cfg.rebased(base))
    }

    fn rebased(mut self, base: &Path) -> Self {
        if let Source::EdgeList { path, .. } = &mut self.source {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let Some(out) = &mut self.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            bail!("replications must be at least 1");
        }
        check_p(self.p)?;
        if self.n_splits == 0 {
            bail!("n_splits must be at least 1");
        }
        if self.kmax == 0 || self.completion_kmax == 0 {
            bail!("kmax and completion_kmax must be at least 1");
        }
        if self.stability != Stability::None && self.stability_reps == 0 {
            bail!("stability_reps must be at least 1");
        }
        if let Source::Block(d) = &self.source {
            d.validate()?;
        }
        match (self.task, &self.source) {
            (Task::SelectModel | Task::SweepPn | Task::TuneReg, Source::Rdpg { .. }) => {
                bail!("{} needs an undirected network", self.task)
            }
            (
                Task::SelectModel | Task::SweepPn | Task::TuneReg,
                Source::EdgeList { directed: true, .. },
            ) => {
                bail!("{} needs an undirected network", self.task)
            }
            (Task::Concentration, Source::EdgeList { .. }) => {
                bail!("CONCENTRATION needs a generator with known probabilities")
            }
            _ => {}
        }
        match self.task {
            Task::TuneReg | Task::TuneGraphon if self.tau_grid.is_empty() => {
                bail!("tau_grid must not be empty")
            }
            Task::TuneReg if self.k.or(self.source.k_true()).is_none() => {
                bail!("TUNE_REG needs `k` when the source has no planted K")
            }
            Task::SweepPn if self.sweep_p.is_empty() || self.sweep_n.is_empty() => {
                bail!("sweep_p and sweep_n must not be empty")
            }
            Task::SweepPn => {
                for &p in &self.sweep_p {
                    check_p(p)?;
                }
                if self.sweep_n.contains(&0) {
                    bail!("sweep_n entries must be at least 1");
                }
            }
            _ => {}
        }
        if self.tau_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            bail!("tau_grid entries must be finite and non-negative");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        bail!("p must be in (0, 1), got {p}");
    }
    Ok(())
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self).expect("task serializes");
        f.write_str(name.as_str().expect("unit variant"))
    }
}

impl FromStr for ExperimentConfig {
    type Err = anyhow::Error;

    fn from_str(text: &str) -> Result<Self> {
        let table: Table = text.parse()?;
        let mut f = Fields(table);
        let task: Task = f
            .string("task")?
            .ok_or_else(|| anyhow!("missing `task`"))?
            .parse()?;
        let source = read_source(&mut f)?;
        let mut cfg = Self::new(task, source);
        if let Some(v) = f.usize("kmax")? {
            cfg.kmax = v;
        }
        cfg.k = f.usize("k_cluster")?;
        cfg.completion_kmax = f.usize("completion_kmax")?.unwrap_or(cfg.kmax);
        if let Some(v) = f.list("tau_grid")? {
            cfg.tau_grid = v;
        }
        if let Some(v) = f.string("loss")? {
            cfg.loss = parse_loss(&v)?;
        }
        if let Some(v) = f.float("p")? {
            cfg.p = v;
        }
        if let Some(v) = f.usize("n_splits")? {
            cfg.n_splits = v;
        }
        if let Some(v) = f.string("stability")? {
            cfg.stability = v.parse()?;
        }
        if let Some(v) = f.usize("stability_reps")? {
            cfg.stability_reps = v;
        }
        if let Some(v) = f.usize("replications")? {
            cfg.replications = v;
        }
        if let Some(v) = f.usize("seed")? {
            cfg.seed = v as u64;
        }
        if let Some(v) = f.list("sweep_p")? {
            cfg.sweep_p = v;
        }
        if let Some(v) = f.list::<f64>("sweep_n")? {
            cfg.sweep_n = v
                .into_iter()
                .map(|x| whole(x).ok_or_else(|| anyhow!("sweep_n entries must be whole numbers")))
                .collect::<Result<_>>()?;
        }
        cfg.output = f.string("output")?.map(PathBuf::from);
        f.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_source(f: &mut Fields) -> Result<Source> {
    let generator = f.string("generator")?.unwrap_or_else(|| "block".into());
    let n = || -> Result<usize> { Err(anyhow!("missing `n`")) };
    Ok(match generator.to_ascii_lowercase().as_str() {
        "block" => {
            let design = BlockDesign {
                n: f.usize("n")?.map_or_else(n, Ok)?,
                k: f.usize("k")?.ok_or_else(|| anyhow!("missing `k`"))?,
                lambda: f
                    .float("lambda")?
                    .ok_or_else(|| anyhow!("missing `lambda`"))?,
                t: f.float("t")?.unwrap_or(0.0),
                beta: f.float("beta")?.unwrap_or(0.2),
                degree_corrected: f.bool("degree_corrected")?.unwrap_or(false),
            };
            Source::Block(design)
        }
        "rdpg" => Source::Rdpg {
            n: f.usize("n")?.map_or_else(n, Ok)?,
            k: f.usize("k")?.ok_or_else(|| anyhow!("missing `k`"))?,
        },
        "graphon" => Source::Graphon {
            n: f.usize("n")?.map_or_else(n, Ok)?,
            graphon: parse_graphon(
                &f.string("graphon")?
                    .ok_or_else(|| anyhow!("missing `graphon`"))?,
            )?,
        },
        "edge_list" | "edgelist" | "file" => Source::EdgeList {
            path: f
                .string("input")?
                .ok_or_else(|| anyhow!("missing `input`"))?
                .into(),
            directed: f.bool("directed")?.unwrap_or(false),
            weighted: f.bool("weighted")?.unwrap_or(false),
        },
        other => bail!("unknown generator `{other}` (expected block, rdpg, graphon or edge_list)"),
    })
}

/// Typed, consuming access to the parsed table.
struct Fields(Table);

impl Fields {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.0.remove(key)
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => bail!("`{key}` must be a string, got {other}"),
        }
    }

    fn float(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => {
                Ok(Some(number(&v).ok_or_else(|| {
                    anyhow!("`{key}` must be a number, got {v}")
                })?))
            }
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as usize)),
            Some(other) => bail!("`{key}` must be a non-negative integer, got {other}"),
        }
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(b)),
            Some(other) => bail!("`{key}` must be true or false, got {other}"),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        let items: Vec<String> = match self.take(key) {
            None => return Ok(None),
            Some(Value::String(s)) => s.split(',').map(|x| x.trim().to_string()).collect(),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| number(v).map(|x| x.to_string()))
                .collect::<Option<_>>()
                .ok_or_else(|| anyhow!("`{key}` must hold numbers"))?,
            Some(other) => bail!("`{key}` must be a comma list or an array, got {other}"),
        };
        items
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| anyhow!("`{key}`: bad entry `{s}`: {e}"))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.0.keys().next() {
            bail!("unknown key `{key}`");
        }
        Ok(())
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Float(x) => Some(*x),
        _ => None,
    }
}

fn whole(x: f64) -> Option<usize> {
    (x >= 0.0 && x.fract() == 0.0).then_some(x as usize)
}
