//! Closed-form PD changes under single-edge additions, deletions and swaps.
//!
//! Each prediction costs one or two sparse solves against `I + L` and never
//! forms an inverse. The [`certify`] suite checks every prediction against a
//! from-scratch dense recomputation on random graphs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{dense_pd, solve_expressed, solve_shifted, ExpressedOpinions};
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::rng::{stream_rng, streams, trial_seed, SimRng};
use crate::synthesis::{gen_er, gen_opinions, OpinionKind, OpinionVector};

/// Threshold ratio `|delta_2| / |delta_1|` above which a swap is guaranteed
/// to raise PD: `3 * sqrt(3) / 4`.
pub const SWAP_RATIO_THRESHOLD: f64 = 1.299_038_105_676_658;

/// Deletions with `r` this close to one are refused.
const BRIDGE_EPS: f64 = 1e-12;

fn check_pair(g: &Graph, e: Edge) -> Result<()> {
    if e.v() >= g.node_count() {
        return Err(Error::NodeOutOfRange {
            node: e.v(),
            n: g.node_count(),
        });
    }
    Ok(())
}

/// `(I + L)^{-1} chi` for the indicator of `e`.
fn indicator_solve(g: &Graph, e: Edge, tol: f64) -> Result<Vec<f64>> {
    Ok(solve_shifted(g, &e.indicator(g.node_count()), tol, None)?.x)
}

/// `chi^T (I + L)^{-1} chi`.
pub fn resistance_form(g: &Graph, e: Edge, tol: f64) -> Result<f64> {
    check_pair(g, e)?;
    Ok(e.difference(&indicator_solve(g, e, tol)?))
}

fn pd_of(s: &OpinionVector, z: &ExpressedOpinions) -> f64 {
    s.values().iter().zip(z.values()).map(|(a, b)| a * b).sum()
}

/// PD after inserting `e`: `PD(L) - delta^2 / (1 + r)`.
pub fn pd_after_add(
    g: &Graph,
    s: &OpinionVector,
    z: &ExpressedOpinions,
    e: Edge,
    tol: f64,
) -> Result<f64> {
    check_pair(g, e)?;
    if g.contains(e) {
        return Err(Error::EdgePresent(e.u(), e.v()));
    }
    let delta = e.difference(z.values());
    let r = resistance_form(g, e, tol)?;
    Ok(pd_of(s, z) - delta * delta / (1.0 + r))
}

/// PD after deleting `e`: `PD(L) + delta^2 / (1 - r)`.
pub fn pd_after_delete(
    g: &Graph,
    s: &OpinionVector,
    z: &ExpressedOpinions,
    e: Edge,
    tol: f64,
) -> Result<f64> {
    if !g.contains(e) {
        return Err(Error::EdgeAbsent(e.u(), e.v()));
    }
    let delta = e.difference(z.values());
    let r = resistance_form(g, e, tol)?;
    if r >= 1.0 - BRIDGE_EPS {
        return Err(Error::BridgeLimit(r));
    }
    let pd = pd_of(s, z);
    let after = pd + delta * delta / (1.0 - r);
    debug_assert!(after >= pd + delta * delta - 1e-12 * pd.abs().max(1.0));
    Ok(after)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapAnalysis {
    /// `z(u1) - z(v1)` across the added pair.
    pub delta1: f64,
    /// `z(u2) - z(v2)` across the removed edge.
    pub delta2: f64,
    pub r1: f64,
    pub r2: f64,
    /// Resistance form of the removed edge after the addition.
    pub r21: f64,
    pub alpha: f64,
    pub pd_lower_bound_increase: f64,
}

impl SwapAnalysis {
    /// `sqrt(r1 r2) / (1 + r1)`, the Cauchy-Schwarz cap on `|alpha|`.
    pub fn alpha_bound(&self) -> f64 {
        (self.r1 * self.r2).sqrt() / (1.0 + self.r1)
    }
}

/// Analyzes adding `add` and removing `remove` in one swap.
///
/// With `y1 = (I + L)^{-1} chi_1` and `y2 = (I + L)^{-1} chi_2`, the cross
/// term `chi_2 . y1` gives both `alpha` and, by Sherman-Morrison,
/// `r21 = r2 - (chi_2 . y1)^2 / (1 + r1)`.
pub fn analyze_swap(
    g: &Graph,
    _s: &OpinionVector,
    z: &ExpressedOpinions,
    add: Edge,
    remove: Edge,
    tol: f64,
) -> Result<SwapAnalysis> {
    check_pair(g, add)?;
    if g.contains(add) {
        return Err(Error::EdgePresent(add.u(), add.v()));
    }
    if !g.contains(remove) {
        return Err(Error::EdgeAbsent(remove.u(), remove.v()));
    }
    let y1 = indicator_solve(g, add, tol)?;
    let y2 = indicator_solve(g, remove, tol)?;
    let r1 = add.difference(&y1);
    let r2 = remove.difference(&y2);
    let cross = remove.difference(&y1);
    let alpha = cross / (1.0 + r1);
    let r21 = r2 - cross * cross / (1.0 + r1);
    if r21 >= 1.0 - BRIDGE_EPS {
        return Err(Error::BridgeLimit(r21));
    }
    let delta1 = add.difference(z.values());
    let delta2 = remove.difference(z.values());
    let pd_lower_bound_increase =
        -delta1 * delta1 / (1.0 + r1) + (delta2 - alpha * delta1).powi(2) / (1.0 - r21);
    Ok(SwapAnalysis {
        delta1,
        delta2,
        r1,
        r2,
        r21,
        alpha,
        pd_lower_bound_increase,
    })
}

/// `|delta_2| > 3 sqrt(3) / 4 * |delta_1|`: sufficient for the swap to raise PD.
pub fn swap_improves(a: &SwapAnalysis) -> bool {
    a.delta2.abs() > SWAP_RATIO_THRESHOLD * a.delta1.abs()
}

/// Parameters of the certification suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub n: usize,
    pub p: f64,
    pub instances: usize,
    /// Total swaps, spread evenly over the instances.
    pub swaps: usize,
    /// Additions and deletions checked per instance (each).
    pub edges_per_instance: usize,
    pub seed: u64,
    /// Solver tolerance for the sparse predictions.
    pub solver_tol: f64,
    /// Allowed relative deviation between prediction and recomputation.
    pub formula_tol: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            n: 50,
            p: 0.2,
            instances: 100,
            swaps: 10_000,
            edges_per_instance: 10,
            seed: 0,
            solver_tol: 1e-13,
            formula_tol: 1e-8,
        }
    }
}

/// Summary of a certification run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TheoryReport {
    pub config: Option<CertifyConfig>,
    pub instances: usize,
    pub add_checks: usize,
    pub delete_checks: usize,
    pub max_add_rel_deviation: f64,
    pub max_delete_rel_deviation: f64,
    pub formula_failures: usize,
    /// Additions that did not lower PD, or deletions that did not raise it,
    /// among those with nonzero disagreement across the edge.
    pub monotonicity_violations: usize,
    /// Additions outside `PD - delta^2 <= PD(L + E) <= PD - delta^2 / 3`,
    /// deletions below `PD + delta^2`.
    pub single_edge_bound_violations: usize,
    pub resistance_range_violations: usize,
    pub swap_checks: usize,
    pub swap_bound_violations: usize,
    /// Largest `(PD + bound) - PD_true`, relative to `|PD|`; at most
    /// round-off since the bound is attained.
    pub max_swap_bound_excess: f64,
    pub alpha_bound_violations: usize,
    pub predicate_true: usize,
    pub predicate_counterexamples: usize,
    /// Swaps below the threshold that still raised PD (reported only).
    pub below_threshold_increasing: usize,
    pub below_threshold_total: usize,
}

impl TheoryReport {
    pub fn max_formula_deviation(&self) -> f64 {
        self.max_add_rel_deviation
            .max(self.max_delete_rel_deviation)
    }

    pub fn passed(&self) -> bool {
        self.formula_failures == 0
            && self.monotonicity_violations == 0
            && self.single_edge_bound_violations == 0
            && self.resistance_range_violations == 0
            && self.swap_bound_violations == 0
            && self.alpha_bound_violations == 0
            && self.predicate_counterexamples == 0
    }

    fn merge(&mut self, o: &TheoryReport) {
        self.instances += o.instances;
        self.add_checks += o.add_checks;
        self.delete_checks += o.delete_checks;
        self.max_add_rel_deviation = self.max_add_rel_deviation.max(o.max_add_rel_deviation);
        self.max_delete_rel_deviation = self
            .max_delete_rel_deviation
            .max(o.max_delete_rel_deviation);
        self.formula_failures += o.formula_failures;
        self.monotonicity_violations += o.monotonicity_violations;
        self.single_edge_bound_violations += o.single_edge_bound_violations;
        self.resistance_range_violations += o.resistance_range_violations;
        self.swap_checks += o.swap_checks;
        self.swap_bound_violations += o.swap_bound_violations;
        self.max_swap_bound_excess = self.max_swap_bound_excess.max(o.max_swap_bound_excess);
        self.alpha_bound_violations += o.alpha_bound_violations;
        self.predicate_true += o.predicate_true;
        self.predicate_counterexamples += o.predicate_counterexamples;
        self.below_threshold_increasing += o.below_threshold_increasing;
        self.below_threshold_total += o.below_threshold_total;
    }
}

fn random_absent_pair(g: &Graph, rng: &mut SimRng) -> Option<Edge> {
    let n = g.node_count();
    if g.edge_count() >= n * (n - 1) / 2 {
        return None;
    }
    loop {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && !g.has_edge(a, b) {
            return Some(Edge::new(a, b).expect("distinct endpoints"));
        }
    }
}

fn random_present_edge(g: &Graph, rng: &mut SimRng) -> Option<Edge> {
    (g.edge_count() > 0).then(|| g.edges()[rng.random_range(0..g.edge_count())])
}

fn with_edit(g: &Graph, add: Option<Edge>, remove: Option<Edge>) -> Result<Graph> {
    let mut h = g.clone();
    if let Some(e) = add {
        h.add_edge(e)?;
    }
    if let Some(e) = remove {
        h.remove_edge(e)?;
    }
    Ok(h)
}

fn rel_dev(predicted: f64, truth: f64) -> f64 {
    (predicted - truth).abs() / truth.abs().max(f64::MIN_POSITIVE)
}

fn certify_instance(cfg: &CertifyConfig, index: usize, swaps: usize) -> Result<TheoryReport> {
    let seed = trial_seed(cfg.seed, index as u64);
    let g = gen_er(cfg.n, cfg.p, &mut stream_rng(seed, streams::GRAPH))?;
    let s = gen_opinions(
        cfg.n,
        OpinionKind::Uniform,
        None,
        &mut stream_rng(seed, streams::OPINIONS),
    )?;
    let mut rng = stream_rng(seed, streams::SAMPLING);
    let z = solve_expressed(&g, &s, cfg.solver_tol, None)?;
    let pd = pd_of(&s, &z);
    let slack = 1e-10 * pd.abs().max(1.0);
    let mut rep = TheoryReport {
        instances: 1,
        ..Default::default()
    };

    for _ in 0..cfg.edges_per_instance {
        if let Some(e) = random_absent_pair(&g, &mut rng) {
            let predicted = pd_after_add(&g, &s, &z, e, cfg.solver_tol)?;
            let truth = dense_pd(&with_edit(&g, Some(e), None)?, &s)?;
            let dev = rel_dev(predicted, truth);
            let delta = e.difference(z.values());
            let r = resistance_form(&g, e, cfg.solver_tol)?;
            rep.add_checks += 1;
            rep.max_add_rel_deviation = rep.max_add_rel_deviation.max(dev);
            rep.formula_failures += usize::from(dev.is_nan() || dev > cfg.formula_tol);
            rep.monotonicity_violations +=
                usize::from(delta != 0.0 && (truth.is_nan() || truth >= pd));
            rep.single_edge_bound_violations += usize::from(
                truth < pd - delta * delta - slack || truth > pd - delta * delta / 3.0 + slack,
            );
            rep.resistance_range_violations += usize::from(!(r > 0.0 && r <= 2.0));
        }
        if let Some(e) = random_present_edge(&g, &mut rng) {
            let predicted = pd_after_delete(&g, &s, &z, e, cfg.solver_tol)?;
            let truth = dense_pd(&with_edit(&g, None, Some(e))?, &s)?;
            let dev = rel_dev(predicted, truth);
            let delta = e.difference(z.values());
            let r = resistance_form(&g, e, cfg.solver_tol)?;
            rep.delete_checks += 1;
            rep.max_delete_rel_deviation = rep.max_delete_rel_deviation.max(dev);
            rep.formula_failures += usize::from(dev.is_nan() || dev > cfg.formula_tol);
            rep.monotonicity_violations +=
                usize::from(delta != 0.0 && (truth.is_nan() || truth <= pd));
            rep.single_edge_bound_violations += usize::from(truth < pd + delta * delta - slack);
            rep.resistance_range_violations += usize::from(!(r > 0.0 && r <= 1.0));
        }
    }

    for _ in 0..swaps {
        let (Some(add), Some(remove)) = (
            random_absent_pair(&g, &mut rng),
            random_present_edge(&g, &mut rng),
        ) else {
            break;
        };
        let a = analyze_swap(&g, &s, &z, add, remove, cfg.solver_tol)?;
        let truth = dense_pd(&with_edit(&g, Some(add), Some(remove))?, &s)?;
        let excess = (pd + a.pd_lower_bound_increase - truth) / pd.abs().max(f64::MIN_POSITIVE);
        rep.swap_checks += 1;
        rep.max_swap_bound_excess = rep.max_swap_bound_excess.max(excess);
        rep.swap_bound_violations += usize::from(excess > cfg.formula_tol);
        rep.alpha_bound_violations +=
            usize::from(a.alpha.abs() > a.alpha_bound() * (1.0 + 1e-9) + 1e-15);
        rep.resistance_range_violations += usize::from(
            !(a.r1 > 0.0 && a.r1 <= 2.0 && a.r2 > 0.0 && a.r2 <= 1.0 && a.r21 > 0.0 && a.r21 < 1.0),
        );
        if swap_improves(&a) {
            rep.predicate_true += 1;
            rep.predicate_counterexamples += usize::from(truth.is_nan() || truth <= pd);
        } else {
            rep.below_threshold_total += 1;
            rep.below_threshold_increasing += usize::from(truth > pd);
        }
    }
    Ok(rep)
}

/// Runs the single-edge and swap checks over `cfg.instances` random
/// `G(n, p)` graphs with uniform innate opinions.
pub fn certify(cfg: &CertifyConfig) -> Result<TheoryReport> {
    if cfg.instances == 0 || cfg.n < 3 {
        return Err(Error::InvalidParameter(
            "certification needs at least one instance and n >= 3".into(),
        ));
    }
    let per_instance = cfg.swaps.div_ceil(cfg.instances);
    let parts: Vec<TheoryReport> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let remaining = cfg.swaps.saturating_sub(i * per_instance);
            certify_instance(cfg, i, per_instance.min(remaining))
        })
        .collect::<Result<_>>()?;
    let mut report = TheoryReport {
        config: Some(*cfg),
        ..Default::default()
    };
    for part in &parts {
        report.merge(part);
    }
    Ok(report)
}
