//! Seeded generators for synthetic graphs and innate opinions.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::SimRng;

/// Innate opinions, one per node.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionVector {
    values: Vec<f64>,
    centered: bool,
}

impl OpinionVector {
    pub fn new(values: Vec<f64>) -> Self {
        OpinionVector {
            values,
            centered: false,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum()
    }

    /// Subtracts the arithmetic mean. Values may leave `[-1, 1]` slightly.
    pub fn mean_center(mut self) -> Self {
        let mean = self.mean();
        for x in &mut self.values {
            *x -= mean;
        }
        self.centered = true;
        self
    }
}

/// Block membership of each node in a stochastic block model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunityAssignment {
    block_of: Vec<usize>,
    blocks: usize,
}

impl CommunityAssignment {
    /// Contiguous blocks of size `n / blocks`; the first `n % blocks` blocks
    /// get one extra node.
    pub fn balanced(n: usize, blocks: usize) -> Self {
        let base = n / blocks;
        let extra = n % blocks;
        let mut block_of = Vec::with_capacity(n);
        for b in 0..blocks {
            let size = base + usize::from(b < extra);
            block_of.extend(std::iter::repeat_n(b, size));
        }
        CommunityAssignment { block_of, blocks }
    }

    pub fn from_blocks(block_of: Vec<usize>, blocks: usize) -> Self {
        debug_assert!(block_of.iter().all(|&b| b < blocks));
        CommunityAssignment { block_of, blocks }
    }

    pub fn block_of(&self, node: usize) -> usize {
        self.block_of[node]
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn len(&self) -> usize {
        self.block_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block_of.is_empty()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.blocks];
        for &b in &self.block_of {
            sizes[b] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OpinionKind {
    Uniform,
    Bimodal {
        #[serde(default = "default_bimodal_mu")]
        mu: f64,
        #[serde(default = "default_bimodal_sigma")]
        sigma: f64,
    },
    SplitUniform,
}

fn default_bimodal_mu() -> f64 {
    0.5
}

fn default_bimodal_sigma() -> f64 {
    0.2
}

impl OpinionKind {
    pub fn bimodal() -> Self {
        OpinionKind::Bimodal {
            mu: default_bimodal_mu(),
            sigma: default_bimodal_sigma(),
        }
    }
}

fn check_probability(name: &str, p: f64, allow_zero: bool) -> Result<()> {
    let ok = p.is_finite() && p <= 1.0 && if allow_zero { p >= 0.0 } else { p > 0.0 };
    if !ok {
        return Err(Error::InvalidParameter(format!(
            "{name} = {p} is not a valid probability"
        )));
    }
    Ok(())
}

/// Calls `emit` with each index in `0..total` selected independently with
/// probability `p`, jumping between selections with geometric skips.
fn bernoulli_indices(total: u64, p: f64, rng: &mut SimRng, mut emit: impl FnMut(u64)) {
    if p <= 0.0 || total == 0 {
        return;
    }
    if p >= 1.0 {
        (0..total).for_each(emit);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut idx: u64 = 0;
    loop {
        // u in (0, 1]
        let u = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / log_q).floor();
        if skip >= (total - idx) as f64 {
            return;
        }
        idx += skip as u64;
        emit(idx);
        idx += 1;
        if idx >= total {
            return;
        }
    }
}

/// Maps a linear index to the pair `(v, w)` with `w < v`, enumerating
/// `(1,0), (2,0), (2,1), (3,0), ...`.
fn triangle_pair(idx: u64) -> (usize, usize) {
    let mut v = ((1.0 + (1.0 + 8.0 * idx as f64).sqrt()) / 2.0) as u64;
    while v * (v - 1) / 2 > idx {
        v -= 1;
    }
    while (v + 1) * v / 2 <= idx {
        v += 1;
    }
    let w = idx - v * (v - 1) / 2;
    (v as usize, w as usize)
}

fn pair_count(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

/// Erdős-Rényi G(n, p).
pub fn gen_er(n: usize, p: f64, rng: &mut SimRng) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("ER needs n >= 2, got {n}")));
    }
    check_probability("p", p, false)?;
    let mut pairs = Vec::new();
    bernoulli_indices(pair_count(n), p, rng, |i| pairs.push(triangle_pair(i)));
    Graph::from_pairs(n, pairs)
}

/// Edge probability giving expected degree `degree` in G(n, p).
pub fn er_probability_for_degree(n: usize, degree: f64) -> f64 {
    degree / (n as f64 - 1.0)
}

/// Barabási-Albert preferential attachment, seeded with a star on `m + 1`
/// nodes. Each later node attaches to `m` distinct existing nodes drawn
/// proportionally to degree (duplicates rejected), for `m * (n - m)` edges.
pub fn gen_ba(n: usize, m: usize, rng: &mut SimRng) -> Result<Graph> {
    if m == 0 || m >= n {
        return Err(Error::InvalidParameter(format!(
            "BA needs 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    let mut pairs = Vec::with_capacity(m * (n - m));
    // Each endpoint appears once per incident edge, so a uniform draw from
    // this list is a degree-proportional draw over nodes.
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * m * (n - m));
    for leaf in 1..=m {
        pairs.push((0, leaf));
        endpoints.extend([0, leaf]);
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    for v in (m + 1)..n {
        chosen.clear();
        while chosen.len() < m {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if !chosen.contains(&t) {
                chosen.push(t);
            }
        }
        for &t in &chosen {
            pairs.push((v, t));
            endpoints.extend([v, t]);
        }
    }
    Graph::from_pairs(n, pairs)
}

/// Stochastic block model with `blocks` balanced contiguous blocks.
pub fn gen_sbm(
    n: usize,
    blocks: usize,
    p_in: f64,
    p_out: f64,
    rng: &mut SimRng,
) -> Result<(Graph, CommunityAssignment)> {
    if blocks < 2 || blocks > n {
        return Err(Error::InvalidParameter(format!(
            "SBM needs 2 <= blocks <= n, got blocks = {blocks}, n = {n}"
        )));
    }
    check_probability("p_in", p_in, true)?;
    check_probability("p_out", p_out, true)?;
    let assignment = CommunityAssignment::balanced(n, blocks);
    let sizes = assignment.block_sizes();
    let starts: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &s| {
            let start = *acc;
            *acc += s;
            Some(start)
        })
        .collect();
    let mut pairs = Vec::new();
    for a in 0..blocks {
        let sa = starts[a];
        bernoulli_indices(pair_count(sizes[a]), p_in, rng, |i| {
            let (v, w) = triangle_pair(i);
            pairs.push((sa + v, sa + w));
        });
        for b in (a + 1)..blocks {
            let sb = starts[b];
            let width = sizes[b] as u64;
            bernoulli_indices(sizes[a] as u64 * width, p_out, rng, |i| {
                pairs.push((sa + (i / width) as usize, sb + (i % width) as usize));
            });
        }
    }
    Ok((Graph::from_pairs(n, pairs)?, assignment))
}

/// Draws innate opinions and mean-centers them. Bimodal draws are clipped
/// to `[-1, 1]` before centering.
pub fn gen_opinions(
    n: usize,
    kind: OpinionKind,
    assignment: Option<&CommunityAssignment>,
    rng: &mut SimRng,
) -> Result<OpinionVector> {
    Ok(gen_raw_opinions(n, kind, assignment, rng)?.mean_center())
}

/// Same as [`gen_opinions`] without the final centering.
pub fn gen_raw_opinions(
    n: usize,
    kind: OpinionKind,
    assignment: Option<&CommunityAssignment>,
    rng: &mut SimRng,
) -> Result<OpinionVector> {
    let values = match kind {
        OpinionKind::Uniform => (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        OpinionKind::Bimodal { mu, sigma } => {
            if !(sigma >= 0.0 && sigma.is_finite() && mu.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "bimodal needs finite mu and sigma >= 0, got mu = {mu}, sigma = {sigma}"
                )));
            }
            (0..n)
                .map(|_| {
                    let centre = if rng.random_bool(0.5) { mu } else { -mu };
                    let z: f64 = StandardNormal.sample(rng);
                    (centre + sigma * z).clamp(-1.0, 1.0)
                })
                .collect()
        }
        OpinionKind::SplitUniform => {
            let assignment = assignment.ok_or_else(|| {
                Error::InvalidParameter("split_uniform opinions need a community assignment".into())
            })?;
            if assignment.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: assignment.len(),
                });
            }
            (0..n)
                .map(|v| {
                    if assignment.block_of(v) % 2 == 0 {
                        rng.random_range(-1.0..=0.0)
                    } else {
                        rng.random_range(0.0..=1.0)
                    }
                })
                .collect()
        }
    };
    Ok(OpinionVector::new(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn variance(x: &[f64]) -> f64 {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn triangle_pair_enumerates_in_order() {
        let mut expected = Vec::new();
        for v in 1..40 {
            for w in 0..v {
                expected.push((v, w));
            }
        }
        let got: Vec<_> = (0..expected.len() as u64).map(triangle_pair).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn er_complete_at_p_one() {
        let g = gen_er(5, 1.0, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(g.edge_count(), 10);
        assert!(gen_er(1, 0.5, &mut stream_rng(1, 0)).is_err());
        assert!(gen_er(5, 0.0, &mut stream_rng(1, 0)).is_err());
    }

    #[test]
    fn er_degree_probability() {
        assert_eq!(er_probability_for_degree(1000, 25.0), 25.0 / 999.0);
    }

    #[test]
    fn er_edge_count_matches_binomial() {
        // Binomial(C(n,2), p): mean and sd computed analytically.
        for &(n, p) in &[(1000usize, 25.0 / 999.0), (200, 0.05), (60, 0.5)] {
            let trials = pair_count(n) as f64;
            let mean = trials * p;
            let sd = (trials * p * (1.0 - p)).sqrt();
            for seed in 0..50 {
                let e = gen_er(n, p, &mut stream_rng(seed, 0)).unwrap().edge_count() as f64;
                assert!(
                    (e - mean).abs() <= 5.0 * sd,
                    "n={n} p={p} seed={seed}: {e} vs {mean}"
                );
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_er(300, 0.03, &mut stream_rng(9, 0)).unwrap();
        let b = gen_er(300, 0.03, &mut stream_rng(9, 0)).unwrap();
        let c = gen_er(300, 0.03, &mut stream_rng(10, 0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(
            gen_ba(200, 3, &mut stream_rng(4, 0)).unwrap(),
            gen_ba(200, 3, &mut stream_rng(4, 0)).unwrap()
        );
        let s1 = gen_opinions(100, OpinionKind::bimodal(), None, &mut stream_rng(2, 1)).unwrap();
        let s2 = gen_opinions(100, OpinionKind::bimodal(), None, &mut stream_rng(2, 1)).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn ba_sizes() {
        // Star seed on m + 1 = 3 nodes leaves nothing to attach.
        let g = gen_ba(3, 2, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.degree(0), 2);
        let g = gen_ba(1000, 10, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(g.edge_count(), 9900);
        assert!(g.min_degree() >= 10);
        assert!(gen_ba(5, 5, &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn ba_is_heavy_tailed() {
        for seed in 0..5 {
            let g = gen_ba(5000, 5, &mut stream_rng(seed, 0)).unwrap();
            let mean = 2.0 * g.edge_count() as f64 / 5000.0;
            let max = (0..5000).map(|v| g.degree(v)).max().unwrap() as f64;
            assert!(max / mean > 5.0, "seed {seed}: max/mean = {}", max / mean);
        }
    }

    #[test]
    fn sbm_structure() {
        let (g, a) = gen_sbm(10, 2, 1.0, 0.0, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(g.edge_count(), 2 * 10);
        assert_eq!(g.components().len(), 2);
        assert_eq!(a.block_sizes(), vec![5, 5]);

        let a = CommunityAssignment::balanced(11, 4);
        assert_eq!(a.block_sizes(), vec![3, 3, 3, 2]);

        for blocks in [2, 4, 8, 10, 20] {
            assert!(gen_sbm(200, blocks, 0.1, 0.01, &mut stream_rng(0, 0)).is_ok());
        }
        assert!(gen_sbm(200, 1, 0.1, 0.01, &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn sbm_edge_counts_match_binomial_means() {
        let (g, a) = gen_sbm(5000, 2, 0.01, 0.001, &mut stream_rng(5, 0)).unwrap();
        let (mut within, mut cross) = (0.0f64, 0.0f64);
        for e in g.edges() {
            if a.block_of(e.u()) == a.block_of(e.v()) {
                within += 1.0;
            } else {
                cross += 1.0;
            }
        }
        let within_mean = 2.0 * pair_count(2500) as f64 * 0.01;
        let within_sd = (2.0 * pair_count(2500) as f64 * 0.01 * 0.99).sqrt();
        let cross_mean = 2500.0 * 2500.0 * 0.001;
        let cross_sd = (2500.0f64 * 2500.0 * 0.001 * 0.999).sqrt();
        assert!(
            (within - within_mean).abs() < 5.0 * within_sd,
            "{within} vs {within_mean}"
        );
        assert!(
            (cross - cross_mean).abs() < 5.0 * cross_sd,
            "{cross} vs {cross_mean}"
        );
    }

    #[test]
    fn uniform_variance_is_one_third() {
        let s =
            gen_raw_opinions(100_000, OpinionKind::Uniform, None, &mut stream_rng(3, 1)).unwrap();
        let var = variance(s.values());
        assert!((var - 1.0 / 3.0).abs() < 0.02 / 3.0, "{var}");
        assert!(s.values().iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn bimodal_variance_and_range() {
        let s =
            gen_raw_opinions(100_000, OpinionKind::bimodal(), None, &mut stream_rng(3, 1)).unwrap();
        // mu^2 + sigma^2 = 0.29 before the (rare) clipping.
        assert!((variance(s.values()) - 0.29).abs() < 0.01);
        assert!(s.values().iter().all(|x| (-1.0..=1.0).contains(x)));

        let s = gen_raw_opinions(
            200,
            OpinionKind::Bimodal {
                mu: 0.5,
                sigma: 0.0,
            },
            None,
            &mut stream_rng(3, 1),
        )
        .unwrap();
        assert!(s.values().iter().all(|&x| x == 0.5 || x == -0.5));
    }

    #[test]
    fn split_uniform_sign_by_block() {
        let a = CommunityAssignment::balanced(100, 4);
        let s = gen_raw_opinions(
            100,
            OpinionKind::SplitUniform,
            Some(&a),
            &mut stream_rng(0, 1),
        )
        .unwrap();
        for v in 0..100 {
            if a.block_of(v).is_multiple_of(2) {
                assert!(s.values()[v] <= 0.0);
            } else {
                assert!(s.values()[v] >= 0.0);
            }
        }
        assert!(gen_opinions(100, OpinionKind::SplitUniform, None, &mut stream_rng(0, 1)).is_err());
    }

    #[test]
    fn mean_center_examples() {
        let c = OpinionVector::new(vec![1.0, -1.0]).mean_center();
        assert_eq!(c.values(), &[1.0, -1.0]);
        let c = OpinionVector::new(vec![1.0, 0.0]).mean_center();
        assert_eq!(c.values(), &[0.5, -0.5]);
        let c = OpinionVector::new(vec![0.3; 7]).mean_center();
        assert!(c.values().iter().all(|&x| x.abs() < 1e-15));
        assert!(c.is_centered());

        let s = gen_opinions(10_000, OpinionKind::Uniform, None, &mut stream_rng(8, 1)).unwrap();
        assert!(s.mean().abs() <= 1e-12);
    }
}
