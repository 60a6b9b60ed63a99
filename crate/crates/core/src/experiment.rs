//! Multi-trial experiments: build the graph and opinions for each trial, run
//! the step loop, capture snapshots and trajectories, audit the polarization
//! bounds at every step, and aggregate across trials.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{fix_random_edges, step, DynamicsConfig, StepRecord};
use crate::equilibrium::{compute_metrics, fixed_graph_pd, solve_expressed, MetricsRecord};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{stream_rng, streams, trial_seed};
use crate::synthesis::{
    er_probability_for_degree, gen_ba, gen_er, gen_opinions, gen_sbm, CommunityAssignment,
    OpinionKind,
};

pub const DEFAULT_SNAPSHOT_TIMES: [usize; 3] = [20, 60, 400];
pub const HISTOGRAM_BINS: usize = 50;
pub const HISTOGRAM_RANGE: (f64, f64) = (-1.25, 1.25);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    /// G(n, p), given either `p` directly or an expected `degree`.
    Er {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        degree: Option<f64>,
    },
    Ba {
        n: usize,
        m: usize,
    },
    Sbm {
        n: usize,
        blocks: usize,
        p_in: f64,
        p_out: f64,
    },
    /// A SNAP-style edge list supplied by the user.
    File {
        path: PathBuf,
    },
}

impl GraphSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            GraphSource::Er { n, p, degree } => {
                if *n < 2 {
                    return Err(Error::Config(format!("er graph needs n >= 2, got {n}")));
                }
                match (p, degree) {
                    (Some(p), None) if *p > 0.0 && *p <= 1.0 => Ok(()),
                    (None, Some(d)) if *d > 0.0 && *d <= (*n - 1) as f64 => Ok(()),
                    (Some(_), Some(_)) | (None, None) => Err(Error::Config(
                        "er graph needs exactly one of `p` or `degree`".into(),
                    )),
                    _ => Err(Error::Config(format!(
                        "er graph parameter out of range: p = {p:?}, degree = {degree:?}"
                    ))),
                }
            }
            GraphSource::Ba { n, m } => {
                if *m == 0 || m >= n {
                    return Err(Error::Config(format!(
                        "ba graph needs 1 <= m < n, got m = {m}, n = {n}"
                    )));
                }
                Ok(())
            }
            GraphSource::Sbm {
                n,
                blocks,
                p_in,
                p_out,
            } => {
                let prob = |x: f64| (0.0..=1.0).contains(&x);
                if *blocks < 2 || blocks > n || !prob(*p_in) || !prob(*p_out) {
                    return Err(Error::Config(format!(
                        "sbm parameters out of range: n = {n}, blocks = {blocks}, p_in = {p_in}, p_out = {p_out}"
                    )));
                }
                Ok(())
            }
            GraphSource::File { .. } => Ok(()),
        }
    }

    /// Builds one realization. Generator sources draw from `seed`; file
    /// sources ignore it.
    pub fn build(&self, seed: u64) -> Result<(Graph, Option<CommunityAssignment>)> {
        let mut rng = stream_rng(seed, streams::GRAPH);
        match self {
            GraphSource::Er { n, p, degree } => {
                let p = match (p, degree) {
                    (Some(p), _) => *p,
                    (None, Some(d)) => er_probability_for_degree(*n, *d),
                    (None, None) => {
                        return Err(Error::Config("er graph needs `p` or `degree`".into()))
                    }
                };
                Ok((gen_er(*n, p, &mut rng)?, None))
            }
            GraphSource::Ba { n, m } => Ok((gen_ba(*n, *m, &mut rng)?, None)),
            GraphSource::Sbm {
                n,
                blocks,
                p_in,
                p_out,
            } => {
                let (g, a) = gen_sbm(*n, *blocks, *p_in, *p_out, &mut rng)?;
                Ok((g, Some(a)))
            }
            GraphSource::File { path } => Ok((crate::io::read_edge_list(path)?, None)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub graph: GraphSource,
    pub opinions: OpinionKind,
    pub dynamics: DynamicsConfig,
    pub trials: usize,
    pub snapshot_times: Vec<usize>,
    pub trajectory_capture: bool,
    /// Apply 2-core and largest-component preprocessing to each graph.
    pub preprocess: bool,
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, graph: GraphSource) -> Self {
        ExperimentConfig {
            name: name.into(),
            graph,
            opinions: OpinionKind::Uniform,
            dynamics: DynamicsConfig::default(),
            trials: 5,
            snapshot_times: DEFAULT_SNAPSHOT_TIMES.to_vec(),
            trajectory_capture: false,
            preprocess: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        self.dynamics
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if let Some(&t) = self
            .snapshot_times
            .iter()
            .find(|&&t| t > self.dynamics.iterations)
        {
            return Err(Error::Config(format!(
                "snapshot time {t} exceeds iterations = {}",
                self.dynamics.iterations
            )));
        }
        if self.opinions == OpinionKind::SplitUniform
            && !matches!(self.graph, GraphSource::Sbm { .. })
        {
            return Err(Error::Config(
                "split_uniform opinions need an sbm graph".into(),
            ));
        }
        Ok(())
    }
}

/// Expressed-opinion histogram of one trial at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: usize,
    pub trial: usize,
    pub counts: Vec<usize>,
    pub z: Option<Vec<f64>>,
}

impl Snapshot {
    pub fn bin_lefts() -> Vec<f64> {
        let (lo, hi) = HISTOGRAM_RANGE;
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        (0..HISTOGRAM_BINS).map(|i| lo + i as f64 * width).collect()
    }

    pub fn mass(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// 50 equal bins over `[-1.25, 1.25]`; values outside land in the end bins.
pub fn histogram(z: &[f64]) -> Vec<usize> {
    let (lo, hi) = HISTOGRAM_RANGE;
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut counts = vec![0; HISTOGRAM_BINS];
    for &x in z {
        let bin = ((x - lo) / width).floor();
        let bin = if bin.is_nan() {
            0.0
        } else {
            bin.clamp(0.0, (HISTOGRAM_BINS - 1) as f64)
        };
        counts[bin as usize] += 1;
    }
    counts
}

/// Time-0 record plus one record per step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub node_count: usize,
    pub edge_count: usize,
    pub fixed_count: usize,
    pub innate: Vec<f64>,
    pub innate_norm_sq: f64,
    /// PD of the fixed subgraph, when any edge is fixed.
    pub fixed_pd: Option<f64>,
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    /// Expressed opinions per recorded time, when captured.
    pub trajectories: Option<Vec<Vec<f32>>>,
    pub audit: BoundAudit,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundAudit {
    /// `P <= |s|^2` at every record.
    pub variance_bound_checks: usize,
    pub variance_bound_violations: usize,
    pub max_variance_ratio: f64,
    /// `P <= PD(L_F)` at every record of runs with fixed edges.
    pub fixed_bound_checks: usize,
    pub fixed_bound_violations: usize,
    pub max_fixed_ratio: f64,
    /// `|P + D - PD| <= 10 tol |s|^2` at every record.
    pub pd_identity_checks: usize,
    pub pd_identity_violations: usize,
    pub max_pd_identity_error: f64,
}

impl BoundAudit {
    pub fn violations(&self) -> usize {
        self.variance_bound_violations + self.fixed_bound_violations + self.pd_identity_violations
    }

    fn observe(&mut self, m: &MetricsRecord, innate_norm_sq: f64, fixed_pd: Option<f64>, tol: f64) {
        let slack = 10.0 * tol * innate_norm_sq;
        self.variance_bound_checks += 1;
        if innate_norm_sq > 0.0 {
            self.max_variance_ratio = self
                .max_variance_ratio
                .max(m.polarization_raw / innate_norm_sq);
        }
        self.variance_bound_violations += usize::from(m.polarization_raw > innate_norm_sq + slack);
        if let Some(bound) = fixed_pd {
            self.fixed_bound_checks += 1;
            if bound > 0.0 {
                self.max_fixed_ratio = self.max_fixed_ratio.max(m.polarization_raw / bound);
            }
            self.fixed_bound_violations += usize::from(m.polarization_raw > bound + slack);
        }
        let identity_error = (m.polarization_raw + m.disagreement_raw - m.pd_raw).abs();
        self.pd_identity_checks += 1;
        self.max_pd_identity_error = self.max_pd_identity_error.max(identity_error);
        self.pd_identity_violations += usize::from(identity_error > slack);
    }

    fn merge(&mut self, o: &BoundAudit) {
        self.variance_bound_checks += o.variance_bound_checks;
        self.variance_bound_violations += o.variance_bound_violations;
        self.max_variance_ratio = self.max_variance_ratio.max(o.max_variance_ratio);
        self.fixed_bound_checks += o.fixed_bound_checks;
        self.fixed_bound_violations += o.fixed_bound_violations;
        self.max_fixed_ratio = self.max_fixed_ratio.max(o.max_fixed_ratio);
        self.pd_identity_checks += o.pd_identity_checks;
        self.pd_identity_violations += o.pd_identity_violations;
        self.max_pd_identity_error = self.max_pd_identity_error.max(o.max_pd_identity_error);
    }
}

fn prepare_graph(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(Graph, Option<CommunityAssignment>)> {
    let (g, assignment) = cfg.graph.build(seed)?;
    if !cfg.preprocess {
        return Ok((g, assignment));
    }
    let p = g.preprocess()?;
    // Generated graphs label node i as i, so labels index the assignment.
    let assignment = assignment.map(|a| {
        let blocks: Vec<usize> = p.labels().iter().map(|&l| a.block_of(l as usize)).collect();
        CommunityAssignment::from_blocks(blocks, a.blocks())
    });
    Ok((p, assignment))
}

pub fn run_trial(cfg: &ExperimentConfig, trial_index: usize) -> Result<TrialResult> {
    let seed = trial_seed(cfg.dynamics.base_seed, trial_index as u64);
    let (mut g, assignment) = prepare_graph(cfg, seed)?;
    let n = g.node_count();
    let tol = cfg.dynamics.solver_tol;
    let fixed_count = if cfg.dynamics.fixed_fraction > 0.0 {
        fix_random_edges(
            &mut g,
            cfg.dynamics.fixed_fraction,
            &mut stream_rng(seed, streams::FIXED_EDGES),
        )?
    } else {
        0
    };
    let s = gen_opinions(
        n,
        cfg.opinions,
        assignment.as_ref(),
        &mut stream_rng(seed, streams::OPINIONS),
    )?;
    let innate_norm_sq = s.norm_sq();
    let fixed_pd = if fixed_count > 0 {
        Some(fixed_graph_pd(&g, &s, tol)?)
    } else {
        None
    };

    let iterations = cfg.dynamics.iterations;
    let mut audit = BoundAudit::default();
    let mut records = Vec::with_capacity(iterations + 1);
    let mut snapshots = Vec::new();
    let mut trajectories = cfg
        .trajectory_capture
        .then(|| Vec::with_capacity(iterations + 1));
    let edge_count = g.edge_count();

    let mut z = solve_expressed(&g, &s, tol, None)?;
    let metrics = compute_metrics(&g, &s, &z)?;
    records.push(StepRecord {
        t: 0,
        attempted_removals: 0,
        successful_removals: 0,
        additions: 0,
        clamped: false,
        fallback_uniform: false,
        readded: 0,
        solver_iterations: z.iterations(),
        metrics,
    });
    let mut rng = stream_rng(seed, streams::DYNAMICS);
    for t in 0..=iterations {
        if t > 0 {
            let (z_next, record) = step(&mut g, &s, &z, &cfg.dynamics, &mut rng, t)?;
            z = z_next;
            records.push(record);
        }
        audit.observe(&records[t].metrics, innate_norm_sq, fixed_pd, tol);
        if cfg.snapshot_times.contains(&t) {
            snapshots.push(Snapshot {
                t,
                trial: trial_index,
                counts: histogram(z.values()),
                z: cfg.trajectory_capture.then(|| z.values().to_vec()),
            });
        }
        if let Some(traj) = trajectories.as_mut() {
            traj.push(z.values().iter().map(|&x| x as f32).collect());
        }
    }

    Ok(TrialResult {
        trial: trial_index,
        seed,
        node_count: n,
        edge_count,
        fixed_count,
        innate: s.into_values(),
        innate_norm_sq,
        fixed_pd,
        records,
        snapshots,
        trajectories,
        audit,
    })
}

/// Cross-trial mean, min and max of one metric at one time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Envelope {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Envelope {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (mut sum, mut count) = (0.0, 0usize);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            sum += v;
            count += 1;
            min = min.min(v);
            max = max.max(v);
        }
        Envelope {
            mean: sum / count as f64,
            min,
            max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub t: usize,
    pub polarization_raw: Envelope,
    pub disagreement_raw: Envelope,
    pub pd_raw: Envelope,
    pub polarization_per_node: Envelope,
    pub disagreement_per_edge: Envelope,
    pub mse: Envelope,
    pub attempted_removals: Envelope,
    pub successful_removals: Envelope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub per_trial: Vec<Vec<StepRecord>>,
    pub aggregate: Vec<AggregateRow>,
}

impl TimeSeries {
    pub fn from_trials(per_trial: Vec<Vec<StepRecord>>) -> Self {
        let len = per_trial.first().map_or(0, Vec::len);
        debug_assert!(per_trial.iter().all(|r| r.len() == len));
        let aggregate = (0..len)
            .map(|t| {
                let env =
                    |f: fn(&StepRecord) -> f64| Envelope::of(per_trial.iter().map(|r| f(&r[t])));
                AggregateRow {
                    t: per_trial[0][t].t,
                    polarization_raw: env(|r| r.metrics.polarization_raw),
                    disagreement_raw: env(|r| r.metrics.disagreement_raw),
                    pd_raw: env(|r| r.metrics.pd_raw),
                    polarization_per_node: env(|r| r.metrics.polarization_per_node),
                    disagreement_per_edge: env(|r| r.metrics.disagreement_per_edge),
                    mse: env(|r| r.metrics.mse),
                    attempted_removals: env(|r| r.attempted_removals as f64),
                    successful_removals: env(|r| r.successful_removals as f64),
                }
            })
            .collect();
        TimeSeries {
            per_trial,
            aggregate,
        }
    }

    pub fn final_row(&self) -> &AggregateRow {
        self.aggregate
            .last()
            .expect("time series has at least the t = 0 record")
    }

    pub fn row(&self, t: usize) -> Option<&AggregateRow> {
        self.aggregate.iter().find(|r| r.t == t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub series: TimeSeries,
    pub audit: BoundAudit,
}

impl ExperimentResult {
    pub fn snapshots(&self) -> impl Iterator<Item = &Snapshot> {
        self.trials.iter().flat_map(|t| t.snapshots.iter())
    }
}

/// Runs every trial (at most `parallel` at once; `None` uses all cores) and
/// aggregates. Any failing trial fails the experiment.
pub fn run_experiment(cfg: &ExperimentConfig, parallel: Option<usize>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let run = || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|i| {
                run_trial(cfg, i).map_err(|e| Error::Trial {
                    trial: i as u64,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let trials = match parallel {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let mut audit = BoundAudit::default();
    for t in &trials {
        audit.merge(&t.audit);
    }
    let series = TimeSeries::from_trials(trials.iter().map(|t| t.records.clone()).collect());
    Ok(ExperimentResult {
        config: cfg.clone(),
        trials,
        series,
        audit,
    })
}

/// Descriptive markers of the polarization stages. No thresholds are
/// applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    /// Time of peak mean disagreement per edge.
    pub peak_t: usize,
    pub peak_disagreement: f64,
    pub final_disagreement: f64,
    /// Final over peak mean disagreement per edge (1 when the peak is 0).
    pub final_over_peak: f64,
    /// Final over initial mean MSE (1 when the initial MSE is 0).
    pub mse_final_over_initial: f64,
    pub initial_polarization: f64,
    pub final_polarization: f64,
}

pub fn stage_summary(ts: &TimeSeries) -> StageSummary {
    let rows = &ts.aggregate;
    let (peak_idx, peak) =
        rows.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, r)| {
                let v = r.disagreement_per_edge.mean;
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
    let first = &rows[0];
    let last = rows.last().expect("nonempty time series");
    let ratio = |a: f64, b: f64| if b == 0.0 { 1.0 } else { a / b };
    StageSummary {
        peak_t: rows[peak_idx].t,
        peak_disagreement: peak,
        final_disagreement: last.disagreement_per_edge.mean,
        final_over_peak: ratio(last.disagreement_per_edge.mean, peak),
        mse_final_over_initial: ratio(last.mse.mean, first.mse.mean),
        initial_polarization: first.polarization_per_node.mean,
        final_polarization: last.polarization_per_node.mean,
    }
}
