//! One timestep of the coevolution: weighted edge removals under a degree
//! guard, then friend-of-friend (or uniformly random) additions, then a
//! warm-started re-solve of the equilibrium.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    compute_metrics, solve_expressed, ExpressedOpinions, MetricsRecord, DEFAULT_TOL,
};
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph, TwoHopScratch};
use crate::rng::SimRng;
use crate::synthesis::OpinionVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalMode {
    /// Probability proportional to `|z(u) - z(v)|`.
    ConfirmationBias,
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdditionMode {
    FriendOfFriend,
    UniformRandom,
}

/// How many removals to attempt per step.
#[derive(Debug, Clone, PartialEq)]
pub enum RemovalBudget {
    /// `floor(p * e)` of the current edge count.
    Fraction(f64),
    Count(usize),
    /// Per-step counts; steps past the end reuse the last entry.
    Schedule(Vec<usize>),
}

impl RemovalBudget {
    /// Attempted removals at (1-based) step `t` for a graph with `edges` edges.
    pub fn attempts(&self, t: usize, edges: usize) -> usize {
        match self {
            RemovalBudget::Fraction(p) => (p * edges as f64).floor() as usize,
            RemovalBudget::Count(k) => *k,
            RemovalBudget::Schedule(list) => {
                let i = t.saturating_sub(1).min(list.len().saturating_sub(1));
                list.get(i).copied().unwrap_or(0)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = match self {
            RemovalBudget::Fraction(p) => !(*p > 0.0 && *p <= 0.5),
            RemovalBudget::Count(k) => *k == 0,
            RemovalBudget::Schedule(list) => list.is_empty() || list.contains(&0),
        };
        if bad {
            return Err(Error::InvalidParameter(format!(
                "removal budget {self:?} out of range (fraction in (0, 0.5], counts >= 1)"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsConfig {
    pub removal_mode: RemovalMode,
    pub addition_mode: AdditionMode,
    pub removal_budget: RemovalBudget,
    pub fixed_fraction: f64,
    pub iterations: usize,
    pub base_seed: u64,
    /// Refuse to re-add an edge removed earlier in the same step.
    pub forbid_readd: bool,
    pub solver_tol: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            removal_mode: RemovalMode::ConfirmationBias,
            addition_mode: AdditionMode::FriendOfFriend,
            removal_budget: RemovalBudget::Fraction(0.10),
            fixed_fraction: 0.0,
            iterations: 500,
            base_seed: 0,
            forbid_readd: false,
            solver_tol: DEFAULT_TOL,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        self.removal_budget.validate()?;
        if !(0.0..1.0).contains(&self.fixed_fraction) {
            return Err(Error::InvalidParameter(format!(
                "fixed_fraction = {} must lie in [0, 1)",
                self.fixed_fraction
            )));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "solver tolerance {} must lie in (0, 1)",
                self.solver_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Removals attempted (`k`), after clamping to the available candidates.
    pub attempted_removals: usize,
    /// Removals that passed the degree guard (`r`).
    pub successful_removals: usize,
    pub additions: usize,
    /// Requested `k` exceeded the number of removable edges.
    pub clamped: bool,
    /// All removal weights were zero and sampling fell back to uniform.
    pub fallback_uniform: bool,
    /// Additions that restored an edge removed in the same step.
    pub readded: usize,
    pub solver_iterations: usize,
    pub metrics: MetricsRecord,
}

/// Marks `floor(fraction * e)` edges, chosen uniformly, as fixed. Returns the
/// number fixed.
pub fn fix_random_edges(g: &mut Graph, fraction: f64, rng: &mut SimRng) -> Result<usize> {
    let count = (fraction * g.edge_count() as f64).floor() as usize;
    let chosen: Vec<Edge> = index::sample(rng, g.edge_count(), count)
        .into_iter()
        .map(|i| g.edges()[i])
        .collect();
    for e in &chosen {
        g.set_fixed(*e, true)?;
    }
    Ok(count)
}

/// Removal weight for each edge of `g`, aligned with `g.edges()`. Fixed
/// edges always get zero.
pub fn removal_weights(g: &Graph, z: &ExpressedOpinions, mode: RemovalMode) -> Vec<f64> {
    let z = z.values();
    g.edges_with_flags()
        .map(|(e, fixed)| match (fixed, mode) {
            (true, _) => 0.0,
            (false, RemovalMode::ConfirmationBias) => e.difference(z).abs(),
            (false, RemovalMode::UniformRandom) => 1.0,
        })
        .collect()
}

/// Weighted sampling without replacement by exponential keys: every positive
/// weight `w_i` gets `-ln(U_i) / w_i` and the `k` smallest keys win. The
/// result lists indices into `weights` in key order; `k` is clamped to the
/// number of positive weights (second return value reports clamping).
pub fn sample_removals(weights: &[f64], k: usize, rng: &mut SimRng) -> (Vec<usize>, bool) {
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        // Draw for every slot so the stream does not depend on which weights
        // happen to be zero.
        let u = 1.0 - rng.random::<f64>();
        if w > 0.0 {
            keyed.push((-u.ln() / w, i));
        }
    }
    let clamped = k > keyed.len();
    let k = k.min(keyed.len());
    if k == 0 {
        return (Vec::new(), clamped);
    }
    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < keyed.len() {
        keyed.select_nth_unstable_by(k - 1, by_key);
        keyed.truncate(k);
    }
    keyed.sort_unstable_by(by_key);
    (keyed.into_iter().map(|(_, i)| i).collect(), clamped)
}

/// Removes candidates in order, skipping any whose removal would leave an
/// endpoint with no edges at that moment. Returns the removed edges.
pub fn apply_removals(g: &mut Graph, candidates: &[Edge]) -> Result<Vec<Edge>> {
    let mut removed = Vec::with_capacity(candidates.len());
    for &e in candidates {
        if g.degree(e.u()) <= 1 || g.degree(e.v()) <= 1 {
            continue;
        }
        g.remove_edge(e)?;
        removed.push(e);
    }
    Ok(removed)
}

/// Draw attempts allowed per requested addition.
const DRAWS_PER_ADDITION: usize = 100;
/// Total two-hop members memoized per call; nodes drawn after the cache is
/// full are recomputed on every draw.
const TWO_HOP_CACHE_ENTRIES: usize = 1 << 23;

/// Proposes `r` distinct new edges absent from `g` and not in `exclude`.
///
/// Friend-of-friend: draw a node uniformly, then a uniform member of its
/// two-hop set; empty sets and repeats are redrawn. Uniform: rejection-sample
/// absent pairs. Either way at most `100 * r` draws are made.
pub fn propose_additions(
    g: &Graph,
    r: usize,
    mode: AdditionMode,
    exclude: &HashSet<Edge>,
    rng: &mut SimRng,
) -> Result<Vec<Edge>> {
    let n = g.node_count();
    let mut chosen = HashSet::with_capacity(r);
    let mut out = Vec::with_capacity(r);
    if r == 0 {
        return Ok(out);
    }
    let budget = DRAWS_PER_ADDITION * r;
    let mut draws = 0;
    let mut scratch = TwoHopScratch::new(n);
    // The graph does not change while additions are proposed, so each
    // node's two-hop set is computed at most once per call.
    let mut cache: Vec<Option<Box<[u32]>>> = Vec::new();
    let mut cached = 0usize;
    while out.len() < r {
        if draws == budget {
            return Err(match mode {
                AdditionMode::FriendOfFriend => Error::FofSaturated,
                AdditionMode::UniformRandom => Error::RandomSaturated,
            });
        }
        draws += 1;
        let candidate = match mode {
            AdditionMode::FriendOfFriend => {
                let v = rng.random_range(0..n);
                if cache.is_empty() {
                    cache.resize(n, None);
                }
                let w = match &cache[v] {
                    Some(hop) if hop.is_empty() => continue,
                    Some(hop) => hop[rng.random_range(0..hop.len())] as usize,
                    None => {
                        let hop = scratch.collect(g, v);
                        if cached + hop.len() <= TWO_HOP_CACHE_ENTRIES {
                            cached += hop.len();
                            cache[v] = Some(hop.iter().map(|&x| x as u32).collect());
                        }
                        if hop.is_empty() {
                            continue;
                        }
                        hop[rng.random_range(0..hop.len())]
                    }
                };
                Edge::new(v, w)?
            }
            AdditionMode::UniformRandom => {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a == b || g.has_edge(a, b) {
                    continue;
                }
                Edge::new(a, b)?
            }
        };
        if exclude.contains(&candidate) || !chosen.insert(candidate) {
            continue;
        }
        out.push(candidate);
    }
    Ok(out)
}

/// Advances `g` by one timestep `t` and returns the new equilibrium with its
/// step record.
pub fn step(
    g: &mut Graph,
    s: &OpinionVector,
    z_prev: &ExpressedOpinions,
    cfg: &DynamicsConfig,
    rng: &mut SimRng,
    t: usize,
) -> Result<(ExpressedOpinions, StepRecord)> {
    let requested = cfg.removal_budget.attempts(t, g.edge_count());
    let mut weights = removal_weights(g, z_prev, cfg.removal_mode);
    let mut fallback_uniform = false;
    if requested > 0 && weights.iter().all(|&w| w == 0.0) {
        weights = removal_weights(g, z_prev, RemovalMode::UniformRandom);
        fallback_uniform = weights.iter().any(|&w| w > 0.0);
    }
    let (picked, clamped) = sample_removals(&weights, requested, rng);
    let candidates: Vec<Edge> = picked.iter().map(|&i| g.edges()[i]).collect();
    let removed = apply_removals(g, &candidates)?;

    let removed_set: HashSet<Edge> = removed.iter().copied().collect();
    let empty = HashSet::new();
    let exclude = if cfg.forbid_readd {
        &removed_set
    } else {
        &empty
    };
    let additions = propose_additions(g, removed.len(), cfg.addition_mode, exclude, rng)?;
    let readded = additions.iter().filter(|e| removed_set.contains(e)).count();
    for &e in &additions {
        g.add_edge(e)?;
    }

    let z = solve_expressed(g, s, cfg.solver_tol, Some(z_prev))?;
    let metrics = compute_metrics(g, s, &z)?;
    let record = StepRecord {
        t,
        attempted_removals: candidates.len(),
        successful_removals: removed.len(),
        additions: additions.len(),
        clamped,
        fallback_uniform,
        readded,
        solver_iterations: z.iterations(),
        metrics,
    };
    Ok((z, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::synthesis::{gen_er, gen_opinions, OpinionKind};

    fn e(a: usize, b: usize) -> Edge {
        Edge::new(a, b).unwrap()
    }

    fn path3() -> Graph {
        Graph::from_pairs(3, [(0, 1), (1, 2)]).unwrap()
    }

    fn triangle() -> Graph {
        Graph::from_pairs(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn budget_attempts() {
        assert_eq!(RemovalBudget::Fraction(0.1).attempts(1, 12487), 1248);
        assert_eq!(RemovalBudget::Count(50).attempts(7, 10), 50);
        let sched = RemovalBudget::Schedule(vec![5, 6, 7]);
        assert_eq!(
            (1..=5).map(|t| sched.attempts(t, 0)).collect::<Vec<_>>(),
            vec![5, 6, 7, 7, 7]
        );
        assert!(RemovalBudget::Fraction(0.9).validate().is_err());
        assert!(RemovalBudget::Fraction(0.0).validate().is_err());
        assert!(RemovalBudget::Count(0).validate().is_err());
        assert!(RemovalBudget::Fraction(0.5).validate().is_ok());
    }

    #[test]
    fn weights_from_two_node_equilibrium() {
        let g = Graph::from_pairs(2, [(0, 1)]).unwrap();
        let s = OpinionVector::new(vec![1.0, -1.0]).mean_center();
        let z = solve_expressed(&g, &s, 1e-12, None).unwrap();
        let w = removal_weights(&g, &z, RemovalMode::ConfirmationBias);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            removal_weights(&g, &z, RemovalMode::UniformRandom),
            vec![1.0]
        );
    }

    #[test]
    fn fixed_edges_have_zero_weight() {
        let mut g = triangle();
        for x in g.edges().to_vec() {
            g.set_fixed(x, true).unwrap();
        }
        let s = OpinionVector::new(vec![1.0, 0.0, -1.0]).mean_center();
        let z = solve_expressed(&g, &s, 1e-10, None).unwrap();
        assert!(removal_weights(&g, &z, RemovalMode::ConfirmationBias)
            .iter()
            .all(|&w| w == 0.0));

        // The uniform fallback cannot pick anything either.
        let cfg = DynamicsConfig::default();
        let mut rng = stream_rng(0, 3);
        let before = g.clone();
        let (_, rec) = step(&mut g, &s, &z, &cfg, &mut rng, 1).unwrap();
        assert_eq!(rec.attempted_removals, 0);
        assert!(!rec.fallback_uniform);
        assert_eq!(g, before);
    }

    #[test]
    fn constant_opinions_fall_back_to_uniform() {
        let mut g = gen_er(30, 0.3, &mut stream_rng(1, 0)).unwrap();
        let s = OpinionVector::new(vec![0.0; 30]);
        let z = solve_expressed(&g, &s, 1e-10, None).unwrap();
        let cfg = DynamicsConfig::default();
        let (_, rec) = step(&mut g, &s, &z, &cfg, &mut stream_rng(1, 3), 1).unwrap();
        assert!(rec.fallback_uniform);
        assert!(rec.attempted_removals > 0);
    }

    #[test]
    fn sampling_edge_cases() {
        let mut rng = stream_rng(2, 3);
        let (all, clamped) = sample_removals(&[1.0; 6], 6, &mut rng);
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        assert!(!clamped);

        let (one, _) = sample_removals(&[0.0, 3.0, 0.0], 1, &mut rng);
        assert_eq!(one, vec![1]);

        let (few, clamped) = sample_removals(&[0.0, 3.0, 1.0], 5, &mut rng);
        assert_eq!(few.len(), 2);
        assert!(clamped);
    }

    #[test]
    fn first_draw_frequency_matches_weight_ratio() {
        // P(heavy edge drawn first) = w1 / (w1 + w2) = 2/3.
        let mut rng = stream_rng(3, 3);
        let trials = 100_000;
        let heavy_first = (0..trials)
            .filter(|_| sample_removals(&[2.0, 1.0], 2, &mut rng).0[0] == 0)
            .count();
        let freq = heavy_first as f64 / trials as f64;
        assert!((freq - 2.0 / 3.0).abs() < 0.01, "{freq}");
    }

    #[test]
    fn degree_guard_examples() {
        // Both path edges touch a leaf, so neither may go.
        let mut g = path3();
        assert_eq!(
            apply_removals(&mut g, &[e(0, 1), e(1, 2)]).unwrap().len(),
            0
        );

        // After (0,1) goes, nodes 0 and 1 are down to degree one.
        let mut g = triangle();
        let removed = apply_removals(&mut g, &[e(0, 1), e(1, 2), e(0, 2)]).unwrap();
        assert_eq!(removed, vec![e(0, 1)]);

        let mut g = Graph::from_pairs(2, [(0, 1)]).unwrap();
        assert!(apply_removals(&mut g, &[e(0, 1)]).unwrap().is_empty());
    }

    #[test]
    fn fof_on_path_adds_closing_edge() {
        let g = path3();
        for seed in 0..20 {
            let add = propose_additions(
                &g,
                1,
                AdditionMode::FriendOfFriend,
                &HashSet::new(),
                &mut stream_rng(seed, 3),
            )
            .unwrap();
            assert_eq!(add, vec![e(0, 2)]);
        }
    }

    #[test]
    fn fof_saturates_on_complete_graph() {
        let k5 = gen_er(5, 1.0, &mut stream_rng(0, 0)).unwrap();
        let err = propose_additions(
            &k5,
            1,
            AdditionMode::FriendOfFriend,
            &HashSet::new(),
            &mut stream_rng(0, 3),
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "graph saturated for FoF additions");
        assert!(propose_additions(
            &k5,
            0,
            AdditionMode::FriendOfFriend,
            &HashSet::new(),
            &mut stream_rng(0, 3)
        )
        .unwrap()
        .is_empty());
    }

    #[test]
    fn random_addition_finds_missing_edge() {
        let g = Graph::from_pairs(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)]).unwrap();
        let add = propose_additions(
            &g,
            1,
            AdditionMode::UniformRandom,
            &HashSet::new(),
            &mut stream_rng(5, 3),
        )
        .unwrap();
        assert_eq!(add, vec![e(2, 3)]);
        let exclude: HashSet<Edge> = [e(2, 3)].into();
        assert!(matches!(
            propose_additions(
                &g,
                1,
                AdditionMode::UniformRandom,
                &exclude,
                &mut stream_rng(5, 3)
            ),
            Err(Error::RandomSaturated)
        ));
    }

    #[test]
    fn zero_budget_step_is_identity() {
        let mut g = gen_er(40, 0.08, &mut stream_rng(6, 0)).unwrap();
        let s = gen_opinions(40, OpinionKind::Uniform, None, &mut stream_rng(6, 1)).unwrap();
        let z = solve_expressed(&g, &s, 1e-10, None).unwrap();
        // floor(0.01 * e) = 0 for fewer than 100 edges.
        assert!(g.edge_count() < 100);
        let cfg = DynamicsConfig {
            removal_budget: RemovalBudget::Fraction(0.01),
            ..Default::default()
        };
        let before = g.clone();
        let (z1, rec) = step(&mut g, &s, &z, &cfg, &mut stream_rng(6, 3), 1).unwrap();
        assert_eq!(g, before);
        assert_eq!((rec.attempted_removals, rec.successful_removals), (0, 0));
        let drift: f64 = z
            .values()
            .iter()
            .zip(z1.values())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(drift < 1e-8);
    }

    #[test]
    fn step_invariants_hold_over_a_run() {
        let mut g = gen_er(200, 0.06, &mut stream_rng(7, 0)).unwrap();
        let g0 = g.clone();
        assert!(g.min_degree() >= 1);
        fix_random_edges(&mut g, 0.1, &mut stream_rng(7, 2)).unwrap();
        let fixed: Vec<Edge> = g.edges_with_flags().filter(|x| x.1).map(|x| x.0).collect();
        assert_eq!(fixed.len(), (0.1 * g0.edge_count() as f64).floor() as usize);
        let s = gen_opinions(200, OpinionKind::Uniform, None, &mut stream_rng(7, 1)).unwrap();
        let cfg = DynamicsConfig::default();
        let mut rng = stream_rng(7, 3);
        let mut z = solve_expressed(&g, &s, cfg.solver_tol, None).unwrap();
        for t in 1..=40 {
            let before = g.edge_count();
            let (z1, rec) = step(&mut g, &s, &z, &cfg, &mut rng, t).unwrap();
            z = z1;
            assert_eq!(g.edge_count(), before);
            assert_eq!(rec.additions, rec.successful_removals);
            assert!(rec.successful_removals <= rec.attempted_removals);
            assert!(g.min_degree() >= 1);
            assert!(fixed.iter().all(|&f| g.contains(f) && g.is_fixed(f)));
            assert!(rec.metrics.polarization_raw <= s.norm_sq());
        }
        let simple: HashSet<Edge> = g.edges().iter().copied().collect();
        assert_eq!(simple.len(), g.edge_count());
    }

    #[test]
    fn forbid_readd_excludes_removed_edges() {
        let mut g = gen_er(60, 0.15, &mut stream_rng(8, 0)).unwrap();
        let s = gen_opinions(60, OpinionKind::Uniform, None, &mut stream_rng(8, 1)).unwrap();
        let cfg = DynamicsConfig {
            forbid_readd: true,
            removal_budget: RemovalBudget::Fraction(0.5),
            ..Default::default()
        };
        let mut z = solve_expressed(&g, &s, cfg.solver_tol, None).unwrap();
        let mut rng = stream_rng(8, 3);
        for t in 1..=10 {
            let (z1, rec) = step(&mut g, &s, &z, &cfg, &mut rng, t).unwrap();
            assert_eq!(rec.readded, 0);
            z = z1;
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut g = gen_er(150, 0.05, &mut stream_rng(9, 0)).unwrap();
            let s = gen_opinions(150, OpinionKind::Uniform, None, &mut stream_rng(9, 1)).unwrap();
            let cfg = DynamicsConfig::default();
            let mut rng = stream_rng(9, 3);
            let mut z = solve_expressed(&g, &s, cfg.solver_tol, None).unwrap();
            let mut records = Vec::new();
            for t in 1..=15 {
                let (z1, rec) = step(&mut g, &s, &z, &cfg, &mut rng, t).unwrap();
                z = z1;
                records.push(rec);
            }
            records
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn biased_candidates_are_more_disagreeable_than_average() {
        let g = gen_er(300, 0.05, &mut stream_rng(10, 0)).unwrap();
        let s = gen_opinions(300, OpinionKind::Uniform, None, &mut stream_rng(10, 1)).unwrap();
        let z = solve_expressed(&g, &s, 1e-10, None).unwrap();
        let w = removal_weights(&g, &z, RemovalMode::ConfirmationBias);
        let avg = w.iter().sum::<f64>() / w.len() as f64;
        let k = g.edge_count() / 10;
        let mut rng = stream_rng(10, 3);
        let mut total = 0.0;
        let resamples = 1000;
        for _ in 0..resamples {
            let (picked, _) = sample_removals(&w, k, &mut rng);
            total += picked.iter().map(|&i| w[i]).sum::<f64>() / k as f64;
        }
        assert!(total / resamples as f64 >= avg);
    }
}
