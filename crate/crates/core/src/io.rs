//! Edge-list ingestion, experiment config files, and result files.
//!
//! Edge lists follow the SNAP convention: one edge per line as two
//! whitespace-separated integer ids, `#` lines ignored. Configs are TOML.
//! Result CSVs carry numbers at 12 significant digits and every output
//! directory gets a `manifest.json` of SHA-256 content hashes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{AdditionMode, DynamicsConfig, RemovalBudget, RemovalMode};
use crate::equilibrium::DEFAULT_TOL;
use crate::error::{Error, Result};
use crate::experiment::{
    ExperimentConfig, ExperimentResult, GraphSource, Snapshot, DEFAULT_SNAPSHOT_TIMES,
};
use crate::graph::Graph;
use crate::synthesis::OpinionKind;

/// Formats a float with 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(u64, u64)>> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |column: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            column,
            message,
        };
        if fields.len() != 2 {
            return Err(parse_err(
                1,
                format!("expected two node ids, found {} fields", fields.len()),
            ));
        }
        let mut ids = [0u64; 2];
        for (slot, field) in ids.iter_mut().zip(&fields) {
            let column = line.find(field).unwrap_or(0) + 1;
            *slot = field
                .parse()
                .map_err(|_| parse_err(column, format!("invalid node id `{field}`")))?;
        }
        pairs.push((ids[0], ids[1]));
    }
    Ok(pairs)
}

/// Reads a SNAP-style edge list into a simple graph (ids compacted, labels
/// keep the file's ids).
pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Graph::from_edge_list(&parse_pairs(&text, path)?, None)
}

/// Writes `g` as an edge list in its original labels, edges sorted.
pub fn write_edge_list(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut edges: Vec<(u64, u64)> = g
        .edges()
        .iter()
        .map(|e| {
            let (a, b) = (g.label(e.u()), g.label(e.v()));
            (a.min(b), a.max(b))
        })
        .collect();
    edges.sort_unstable();
    let mut out = format!("# nodes: {} edges: {}\n", g.node_count(), g.edge_count());
    for (a, b) in edges {
        let _ = writeln!(out, "{a}\t{b}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `new_id,original_id` for every node.
pub fn write_relabeling(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("node,original_id\n");
    for (i, l) in g.labels().iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub source: PathBuf,
    pub raw_nodes: usize,
    pub raw_edges: usize,
    pub processed_nodes: usize,
    pub processed_edges: usize,
    pub preprocessed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relabeling: Option<PathBuf>,
}

/// Reads an edge list and optionally reduces it to the largest connected
/// component of its 2-core.
pub fn ingest(
    path: impl AsRef<Path>,
    apply_preprocess: bool,
) -> Result<(Graph, DatasetDescriptor)> {
    let path = path.as_ref();
    let raw = read_edge_list(path)?;
    let g = if apply_preprocess {
        raw.preprocess()?
    } else {
        raw.clone()
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let descriptor = DatasetDescriptor {
        name,
        source: path.to_path_buf(),
        raw_nodes: raw.node_count(),
        raw_edges: raw.edge_count(),
        processed_nodes: g.node_count(),
        processed_edges: g.edge_count(),
        preprocessed: apply_preprocess,
        relabeling: None,
    };
    Ok((g, descriptor))
}

// ---------------------------------------------------------------------------
// Config files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snapshot_times: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trajectories: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preprocess: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    graph: GraphSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    opinions: Option<OpinionKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dynamics: Option<DynamicsSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    sweep: Vec<SweepAxis>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    removal: Option<RemovalMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    addition: Option<AdditionMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_remove: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    removal_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    removal_schedule: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixed_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    forbid_readd: Option<bool>,
}

/// One axis of a parameter grid: `key` names a config field by its dotted
/// path (for example `graph.n` or `dynamics.fixed_fraction`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<toml::Value>,
}

pub const SWEEP_KEYS: &[&str] = &[
    "seed",
    "trials",
    "iterations",
    "graph.n",
    "graph.p",
    "graph.degree",
    "graph.m",
    "graph.blocks",
    "graph.p_in",
    "graph.p_out",
    "opinions.mu",
    "opinions.sigma",
    "dynamics.removal",
    "dynamics.addition",
    "dynamics.p_remove",
    "dynamics.removal_count",
    "dynamics.fixed_fraction",
];

/// A base experiment plus an optional grid of variations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub base: ExperimentConfig,
    pub sweep: Vec<SweepAxis>,
}

/// One grid point of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    /// Directory-safe label, empty for a plan without a sweep.
    pub label: String,
    pub config: ExperimentConfig,
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::Config(format!(
            "sweep `{key}` needs numeric values, got {v}"
        ))),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::Config(format!(
            "sweep `{key}` needs non-negative integers, got {v}"
        ))),
    }
}

fn as_enum<T: for<'de> Deserialize<'de>>(key: &str, v: &toml::Value) -> Result<T> {
    v.clone()
        .try_into()
        .map_err(|e| Error::Config(format!("sweep `{key}`: {e}")))
}

fn apply_axis(cfg: &mut ExperimentConfig, key: &str, v: &toml::Value) -> Result<()> {
    let mismatch = || {
        Error::Config(format!(
            "sweep key `{key}` does not apply to this graph model"
        ))
    };
    match key {
        "seed" => cfg.dynamics.base_seed = as_usize(key, v)? as u64,
        "trials" => cfg.trials = as_usize(key, v)?,
        "iterations" => cfg.dynamics.iterations = as_usize(key, v)?,
        "graph.n" => match &mut cfg.graph {
            GraphSource::Er { n, .. } | GraphSource::Ba { n, .. } | GraphSource::Sbm { n, .. } => {
                *n = as_usize(key, v)?
            }
            GraphSource::File { .. } => return Err(mismatch()),
        },
        "graph.p" | "graph.degree" => match &mut cfg.graph {
            GraphSource::Er { p, degree, .. } => {
                let x = Some(as_f64(key, v)?);
                if key == "graph.p" {
                    (*p, *degree) = (x, None);
                } else {
                    (*p, *degree) = (None, x);
                }
            }
            _ => return Err(mismatch()),
        },
        "graph.m" => match &mut cfg.graph {
            GraphSource::Ba { m, .. } => *m = as_usize(key, v)?,
            _ => return Err(mismatch()),
        },
        "graph.blocks" | "graph.p_in" | "graph.p_out" => match &mut cfg.graph {
            GraphSource::Sbm {
                blocks,
                p_in,
                p_out,
                ..
            } => match key {
                "graph.blocks" => *blocks = as_usize(key, v)?,
                "graph.p_in" => *p_in = as_f64(key, v)?,
                _ => *p_out = as_f64(key, v)?,
            },
            _ => return Err(mismatch()),
        },
        "opinions.mu" | "opinions.sigma" => match &mut cfg.opinions {
            OpinionKind::Bimodal { mu, sigma } => {
                let x = as_f64(key, v)?;
                if key == "opinions.mu" {
                    *mu = x;
                } else {
                    *sigma = x;
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "sweep key `{key}` needs bimodal opinions"
                )))
            }
        },
        "dynamics.removal" => cfg.dynamics.removal_mode = as_enum(key, v)?,
        "dynamics.addition" => cfg.dynamics.addition_mode = as_enum(key, v)?,
        "dynamics.p_remove" => {
            cfg.dynamics.removal_budget = RemovalBudget::Fraction(as_f64(key, v)?)
        }
        "dynamics.removal_count" => {
            cfg.dynamics.removal_budget = RemovalBudget::Count(as_usize(key, v)?)
        }
        "dynamics.fixed_fraction" => cfg.dynamics.fixed_fraction = as_f64(key, v)?,
        _ => {
            return Err(Error::Config(format!(
                "unknown sweep key `{key}` (expected one of {})",
                SWEEP_KEYS.join(", ")
            )))
        }
    }
    Ok(())
}

impl ExperimentPlan {
    pub fn single(config: ExperimentConfig) -> Self {
        ExperimentPlan {
            base: config,
            sweep: Vec::new(),
        }
    }

    /// Expands the cartesian product of the sweep axes, first axis slowest.
    pub fn runs(&self) -> Result<Vec<PlannedRun>> {
        let mut runs = vec![PlannedRun {
            label: String::new(),
            config: self.base.clone(),
        }];
        for axis in &self.sweep {
            if axis.values.is_empty() {
                return Err(Error::Config(format!("sweep `{}` has no values", axis.key)));
            }
            let mut next = Vec::with_capacity(runs.len() * axis.values.len());
            for run in &runs {
                for v in &axis.values {
                    let mut config = run.config.clone();
                    apply_axis(&mut config, &axis.key, v)?;
                    let short = axis.key.rsplit('.').next().unwrap_or(&axis.key);
                    let part = format!("{short}-{}", value_label(v));
                    let label = if run.label.is_empty() {
                        part
                    } else {
                        format!("{}_{part}", run.label)
                    };
                    config.name = format!("{}/{label}", self.base.name);
                    next.push(PlannedRun { label, config });
                }
            }
            runs = next;
        }
        for run in &runs {
            run.config.validate()?;
        }
        Ok(runs)
    }
}

fn resolve(file: ConfigFile, default_name: &str) -> Result<ExperimentPlan> {
    let dyn_section = file.dynamics.unwrap_or_default();
    let budget = match (
        dyn_section.p_remove,
        dyn_section.removal_count,
        dyn_section.removal_schedule,
    ) {
        (None, None, None) => RemovalBudget::Fraction(0.10),
        (Some(p), None, None) => RemovalBudget::Fraction(p),
        (None, Some(k), None) => RemovalBudget::Count(k),
        (None, None, Some(list)) => RemovalBudget::Schedule(list),
        _ => {
            return Err(Error::Config(
                "give at most one of p_remove, removal_count, removal_schedule".into(),
            ))
        }
    };
    let iterations = file.iterations;
    let dynamics = DynamicsConfig {
        removal_mode: dyn_section.removal.unwrap_or(RemovalMode::ConfirmationBias),
        addition_mode: dyn_section.addition.unwrap_or(AdditionMode::FriendOfFriend),
        removal_budget: budget,
        fixed_fraction: dyn_section.fixed_fraction.unwrap_or(0.0),
        iterations,
        base_seed: file.seed.unwrap_or(0),
        forbid_readd: dyn_section.forbid_readd.unwrap_or(false),
        solver_tol: file.tol.unwrap_or(DEFAULT_TOL),
    };
    let snapshot_times = file.snapshot_times.unwrap_or_else(|| {
        DEFAULT_SNAPSHOT_TIMES
            .iter()
            .copied()
            .filter(|&t| t <= iterations)
            .collect()
    });
    let base = ExperimentConfig {
        name: file.name.unwrap_or_else(|| default_name.to_string()),
        graph: file.graph,
        opinions: file.opinions.unwrap_or(OpinionKind::Uniform),
        dynamics,
        trials: file.trials.unwrap_or(5),
        snapshot_times,
        trajectory_capture: file.trajectories.unwrap_or(false),
        preprocess: file.preprocess.unwrap_or(false),
    };
    base.validate()?;
    let plan = ExperimentPlan {
        base,
        sweep: file.sweep,
    };
    plan.runs()?;
    Ok(plan)
}

/// Parses config text; `origin` only labels error messages.
pub fn parse_config(text: &str, origin: &Path) -> Result<ExperimentPlan> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|span| {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                (line, column)
            })
            .unwrap_or((0, 0));
        Error::Parse {
            path: origin.to_path_buf(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let default_name = origin
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".into());
    resolve(file, &default_name)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentPlan> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut plan = parse_config(&text, path)?;
    // Edge-list paths are relative to the config file.
    if let GraphSource::File { path: data } = &mut plan.base.graph {
        if data.is_relative() {
            if let Some(dir) = path.parent() {
                *data = dir.join(&*data);
            }
        }
    }
    Ok(plan)
}

/// Fully resolved TOML for `cfg` (every default spelled out).
pub fn config_to_toml(cfg: &ExperimentConfig, sweep: &[SweepAxis]) -> String {
    let d = &cfg.dynamics;
    let (p_remove, removal_count, removal_schedule) = match &d.removal_budget {
        RemovalBudget::Fraction(p) => (Some(*p), None, None),
        RemovalBudget::Count(k) => (None, Some(*k), None),
        RemovalBudget::Schedule(list) => (None, None, Some(list.clone())),
    };
    let file = ConfigFile {
        name: Some(cfg.name.clone()),
        seed: Some(d.base_seed),
        trials: Some(cfg.trials),
        iterations: d.iterations,
        snapshot_times: Some(cfg.snapshot_times.clone()),
        trajectories: Some(cfg.trajectory_capture),
        preprocess: Some(cfg.preprocess),
        tol: Some(d.solver_tol),
        graph: cfg.graph.clone(),
        opinions: Some(cfg.opinions),
        dynamics: Some(DynamicsSection {
            removal: Some(d.removal_mode),
            addition: Some(d.addition_mode),
            p_remove,
            removal_count,
            removal_schedule,
            fixed_fraction: Some(d.fixed_fraction),
            forbid_readd: Some(d.forbid_readd),
        }),
        sweep: sweep.to_vec(),
    };
    toml::to_string(&file).expect("config serializes to TOML")
}

pub fn save_config(plan: &ExperimentPlan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, config_to_toml(&plan.base, &plan.sweep)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Result files

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn paths(&self) -> Vec<&str> {
        self.files.iter().map(|f| f.path.as_str()).collect()
    }

    /// Adds `bytes` under `path` (after writing them). Keeps entries sorted.
    fn record(&mut self, path: String, bytes: &[u8]) {
        self.files.push(ManifestEntry {
            path,
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
    }

    /// Nests another manifest under the directory `prefix`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &Manifest) {
        for f in &other.files {
            self.files.push(ManifestEntry {
                path: format!("{prefix}/{}", f.path),
                ..f.clone()
            });
        }
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path,
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMESERIES_HEADER: &str = "t,P_raw,D_raw,PD_raw,P_per_node,D_per_edge,MSE,k,r";

struct OutputWriter<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl OutputWriter<'_> {
    fn put(&mut self, name: String, contents: String) -> Result<()> {
        let path = self.dir.join(&name);
        fs::write(&path, &contents).map_err(|e| Error::io(&path, e))?;
        self.manifest.record(name, contents.as_bytes());
        Ok(())
    }
}

fn timeseries_csv(records: &[crate::dynamics::StepRecord]) -> String {
    let mut out = String::from(TIMESERIES_HEADER);
    out.push('\n');
    for r in records {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            fmt_num(m.polarization_raw),
            fmt_num(m.disagreement_raw),
            fmt_num(m.pd_raw),
            fmt_num(m.polarization_per_node),
            fmt_num(m.disagreement_per_edge),
            fmt_num(m.mse),
            r.attempted_removals,
            r.successful_removals
        );
    }
    out
}

fn mean_csv(result: &ExperimentResult) -> String {
    const METRICS: [&str; 6] = [
        "P_raw",
        "D_raw",
        "PD_raw",
        "P_per_node",
        "D_per_edge",
        "MSE",
    ];
    let mut out = String::from("t");
    for m in METRICS {
        let _ = write!(out, ",{m},{m}_min,{m}_max");
    }
    out.push_str(",k,r\n");
    for row in &result.series.aggregate {
        let _ = write!(out, "{}", row.t);
        for env in [
            row.polarization_raw,
            row.disagreement_raw,
            row.pd_raw,
            row.polarization_per_node,
            row.disagreement_per_edge,
            row.mse,
        ] {
            let _ = write!(
                out,
                ",{},{},{}",
                fmt_num(env.mean),
                fmt_num(env.min),
                fmt_num(env.max)
            );
        }
        let _ = writeln!(
            out,
            ",{},{}",
            fmt_num(row.attempted_removals.mean),
            fmt_num(row.successful_removals.mean)
        );
    }
    out
}

fn snapshot_csv(snap: &Snapshot) -> String {
    let mut out = String::from("bin_left,count\n");
    for (left, count) in Snapshot::bin_lefts().into_iter().zip(&snap.counts) {
        let _ = writeln!(out, "{},{count}", fmt_num(left));
    }
    out
}

fn trajectories_csv(traj: &[Vec<f32>], n: usize) -> String {
    let mut out = String::from("t");
    for i in 0..n {
        let _ = write!(out, ",z_{i}");
    }
    out.push('\n');
    for (t, z) in traj.iter().enumerate() {
        let _ = write!(out, "{t}");
        for x in z {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    out
}

fn innate_csv(trial: &crate::experiment::TrialResult) -> String {
    let mut out = String::from("node,s\n");
    for (i, s) in trial.innate.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", fmt_num(*s));
    }
    out
}

#[derive(Serialize)]
struct AuditFile<'a> {
    total_violations: usize,
    audit: &'a crate::experiment::BoundAudit,
    trials: Vec<TrialAuditEntry<'a>>,
}

#[derive(Serialize)]
struct TrialAuditEntry<'a> {
    trial: usize,
    seed: u64,
    nodes: usize,
    edges: usize,
    fixed_edges: usize,
    innate_norm_sq: f64,
    fixed_graph_pd: Option<f64>,
    audit: &'a crate::experiment::BoundAudit,
}

/// Writes every result file of `result` into `dir` (created if needed)
/// together with `manifest.json`, and returns the manifest.
pub fn write_outputs(result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = OutputWriter {
        dir,
        manifest: Manifest::default(),
    };
    for trial in &result.trials {
        w.put(
            format!("timeseries_trial_{}.csv", trial.trial),
            timeseries_csv(&trial.records),
        )?;
        for snap in &trial.snapshots {
            w.put(
                format!("snapshot_t{}_trial{}.csv", snap.t, snap.trial),
                snapshot_csv(snap),
            )?;
        }
        if let Some(traj) = &trial.trajectories {
            w.put(
                format!("trajectories_trial{}.csv", trial.trial),
                trajectories_csv(traj, trial.node_count),
            )?;
            w.put(
                format!("innate_trial{}.csv", trial.trial),
                innate_csv(trial),
            )?;
        }
    }
    w.put("timeseries_mean.csv".into(), mean_csv(result))?;
    let audit = AuditFile {
        total_violations: result.audit.violations(),
        audit: &result.audit,
        trials: result
            .trials
            .iter()
            .map(|t| TrialAuditEntry {
                trial: t.trial,
                seed: t.seed,
                nodes: t.node_count,
                edges: t.edge_count,
                fixed_edges: t.fixed_count,
                innate_norm_sq: t.innate_norm_sq,
                fixed_graph_pd: t.fixed_pd,
                audit: &t.audit,
            })
            .collect(),
    };
    w.put(
        "bound_audit.json".into(),
        serde_json::to_string_pretty(&audit).expect("audit serializes") + "\n",
    )?;
    w.put("config.toml".into(), config_to_toml(&result.config, &[]))?;
    w.manifest.write(dir)?;
    Ok(w.manifest)
}

/// One parsed time-series row: `t`, the six metric columns, `k`, `r`.
pub type TimeseriesRow = (usize, [f64; 6], usize, usize);

/// Parses a per-trial time-series CSV back into rows.
pub fn read_timeseries_csv(path: impl AsRef<Path>) -> Result<Vec<TimeseriesRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            column: 1,
            message,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(format!("expected 9 columns, found {}", f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("`{s}`: {e}")));
        let mut m = [0.0; 6];
        for (slot, s) in m.iter_mut().zip(&f[1..7]) {
            *slot = s.parse().map_err(|e| bad(format!("`{s}`: {e}")))?;
        }
        rows.push((int(f[0])?, m, int(f[7])?, int(f[8])?));
    }
    Ok(rows)
}

/// Default output directory for a run.
pub fn default_output_dir(name: &str) -> PathBuf {
    PathBuf::from("runs").join(name.replace('/', "_"))
}
