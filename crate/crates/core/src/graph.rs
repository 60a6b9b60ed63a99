//! Undirected, unweighted simple graphs.
//!
//! Nodes are dense ids `0..n`. Every node also carries the label it had in
//! the source it was ingested from, so preprocessing and export can map back
//! to the original ids. Edges are stored three ways: adjacency lists for
//! neighbor iteration, an indexable edge sequence (with a parallel fixed flag)
//! for weighted sampling, and a hash index for membership tests.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};

/// An unordered node pair, normalized so that `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    u: usize,
    v: usize,
}

impl Edge {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::SelfLoop(a));
        }
        Ok(Self::ordered(a, b))
    }

    fn ordered(a: usize, b: usize) -> Self {
        debug_assert_ne!(a, b);
        if a < b {
            Edge { u: a, v: b }
        } else {
            Edge { u: b, v: a }
        }
    }

    pub fn u(&self) -> usize {
        self.u
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn endpoints(&self) -> (usize, usize) {
        (self.u, self.v)
    }

    /// The edge indicator vector: `+1` at `u`, `-1` at `v`.
    pub fn indicator(&self, n: usize) -> Vec<f64> {
        let mut chi = vec![0.0; n];
        chi[self.u] = 1.0;
        chi[self.v] = -1.0;
        chi
    }

    /// `chi . x`, i.e. `x(u) - x(v)`.
    pub fn difference(&self, x: &[f64]) -> f64 {
        x[self.u] - x[self.v]
    }
}

#[derive(Debug, Clone)]
pub struct Graph {
    labels: Vec<u64>,
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge>,
    fixed: Vec<bool>,
    index: HashMap<Edge, usize>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels && {
            let mut a: Vec<_> = self.edges_with_flags().collect();
            let mut b: Vec<_> = other.edges_with_flags().collect();
            a.sort();
            b.sort();
            a == b
        }
    }
}

impl Graph {
    /// A graph on `n` isolated nodes labelled `0..n`.
    pub fn empty(n: usize) -> Self {
        Graph {
            labels: (0..n as u64).collect(),
            adj: vec![Vec::new(); n],
            edges: Vec::new(),
            fixed: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Builds a simple graph from raw pairs: self-loops are dropped and
    /// duplicate (or reversed duplicate) pairs merged.
    ///
    /// With `n = None` the distinct ids appearing in `pairs` are compacted,
    /// in increasing order, to `0..n`; ids that are already dense keep their
    /// value. With `n = Some(n)` ids must be `< n` and are kept as-is, so
    /// isolated nodes are allowed. The original id of node `i` is
    /// `graph.label(i)`.
    pub fn from_edge_list(pairs: &[(u64, u64)], n: Option<usize>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let labels: Vec<u64> = match n {
            Some(n) => {
                if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a.max(b) >= n as u64) {
                    return Err(Error::NodeOutOfRange {
                        node: a.max(b) as usize,
                        n,
                    });
                }
                (0..n as u64).collect()
            }
            None => {
                let mut ids: Vec<u64> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
                ids.sort_unstable();
                ids.dedup();
                ids
            }
        };
        let position: HashMap<u64, usize> =
            labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let mut g = Graph::empty(labels.len());
        g.labels = labels;
        for &(a, b) in pairs {
            if a == b {
                continue;
            }
            let e = Edge::ordered(position[&a], position[&b]);
            if !g.index.contains_key(&e) {
                g.insert(e, false);
            }
        }
        Ok(g)
    }

    /// Builds a graph on `0..n` from already-dense pairs, rejecting self-loops
    /// and silently merging duplicates.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Graph::empty(n);
        for (a, b) in pairs {
            g.check_node(a)?;
            g.check_node(b)?;
            let e = Edge::new(a, b)?;
            if !g.index.contains_key(&e) {
                g.insert(e, false);
            }
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn fixed_count(&self) -> usize {
        self.fixed.iter().filter(|&&f| f).count()
    }

    pub fn label(&self, node: usize) -> u64 {
        self.labels[node]
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adj[node].len()
    }

    pub fn min_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adj[node]
    }

    /// The edge sequence. Order is stable between mutations but not across
    /// removals (removal swaps the last edge into the vacated slot).
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edges_with_flags(&self) -> impl Iterator<Item = (Edge, bool)> + '_ {
        self.edges.iter().copied().zip(self.fixed.iter().copied())
    }

    pub fn fixed_flags(&self) -> &[bool] {
        &self.fixed
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a != b && self.index.contains_key(&Edge::ordered(a, b))
    }

    pub fn contains(&self, e: Edge) -> bool {
        self.index.contains_key(&e)
    }

    pub fn is_fixed(&self, e: Edge) -> bool {
        self.index.get(&e).is_some_and(|&i| self.fixed[i])
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.node_count() {
            return Err(Error::NodeOutOfRange {
                node,
                n: self.node_count(),
            });
        }
        Ok(())
    }

    fn insert(&mut self, e: Edge, fixed: bool) {
        self.index.insert(e, self.edges.len());
        self.edges.push(e);
        self.fixed.push(fixed);
        self.adj[e.u].push(e.v);
        self.adj[e.v].push(e.u);
    }

    pub fn add_edge(&mut self, e: Edge) -> Result<()> {
        self.check_node(e.v)?;
        if self.contains(e) {
            return Err(Error::EdgePresent(e.u, e.v));
        }
        self.insert(e, false);
        Ok(())
    }

    pub fn remove_edge(&mut self, e: Edge) -> Result<()> {
        let i = self.index.remove(&e).ok_or(Error::EdgeAbsent(e.u, e.v))?;
        self.edges.swap_remove(i);
        self.fixed.swap_remove(i);
        if let Some(&moved) = self.edges.get(i) {
            self.index.insert(moved, i);
        }
        for (a, b) in [(e.u, e.v), (e.v, e.u)] {
            let list = &mut self.adj[a];
            let pos = list
                .iter()
                .position(|&x| x == b)
                .expect("adjacency out of sync");
            list.swap_remove(pos);
        }
        Ok(())
    }

    pub fn set_fixed(&mut self, e: Edge, fixed: bool) -> Result<()> {
        let &i = self.index.get(&e).ok_or(Error::EdgeAbsent(e.u, e.v))?;
        self.fixed[i] = fixed;
        Ok(())
    }

    /// The spanning subgraph holding only the fixed edges.
    pub fn fixed_subgraph(&self) -> Graph {
        let mut g = Graph::empty(self.node_count());
        g.labels = self.labels.clone();
        for (e, f) in self.edges_with_flags() {
            if f {
                g.insert(e, true);
            }
        }
        g
    }

    /// Every node at graph distance exactly two from `v`, in discovery order.
    pub fn two_hop_set(&self, v: usize) -> Vec<usize> {
        let mut scratch = TwoHopScratch::new(self.node_count());
        scratch.collect(self, v).to_vec()
    }

    /// `x^T L x`, summed once per unordered edge.
    pub fn laplacian_quad(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        Ok(self
            .edges
            .iter()
            .map(|e| {
                let d = e.difference(x);
                d * d
            })
            .sum())
    }

    /// `out = (I + L) x`.
    pub fn shifted_laplacian_mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, nbrs) in self.adj.iter().enumerate() {
            let mut acc = (1.0 + nbrs.len() as f64) * x[i];
            for &j in nbrs {
                acc -= x[j];
            }
            out[i] = acc;
        }
    }

    pub(crate) fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.node_count() {
            return Err(Error::DimensionMismatch {
                expected: self.node_count(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Connected components as lists of nodes, each sorted, ordered by their
    /// smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let mut comp = Vec::new();
            while let Some(x) = queue.pop_front() {
                comp.push(x);
                for &y in &self.adj[x] {
                    if !seen[y] {
                        seen[y] = true;
                        queue.push_back(y);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Nodes of the k-core, found by peeling nodes of degree `< k` with a
    /// work queue.
    pub fn k_core_nodes(&self, k: usize) -> Vec<usize> {
        let n = self.node_count();
        let mut deg: Vec<usize> = self.adj.iter().map(Vec::len).collect();
        let mut removed = vec![false; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| deg[v] < k).collect();
        for &v in &queue {
            removed[v] = true;
        }
        while let Some(v) = queue.pop_front() {
            for &w in &self.adj[v] {
                if removed[w] {
                    continue;
                }
                deg[w] -= 1;
                if deg[w] < k {
                    removed[w] = true;
                    queue.push_back(w);
                }
            }
        }
        (0..n).filter(|&v| !removed[v]).collect()
    }

    /// The subgraph induced by `nodes` (which must be sorted and distinct),
    /// relabelled `0..nodes.len()` in that order. Labels and fixed flags
    /// carry over.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Graph {
        let mut position = vec![usize::MAX; self.node_count()];
        for (i, &v) in nodes.iter().enumerate() {
            position[v] = i;
        }
        let mut g = Graph::empty(nodes.len());
        g.labels = nodes.iter().map(|&v| self.labels[v]).collect();
        let mut kept: Vec<(Edge, bool)> = self
            .edges_with_flags()
            .filter_map(|(e, f)| {
                let (a, b) = (position[e.u], position[e.v]);
                (a != usize::MAX && b != usize::MAX).then(|| (Edge::ordered(a, b), f))
            })
            .collect();
        kept.sort();
        for (e, f) in kept {
            g.insert(e, f);
        }
        g
    }

    /// 2-core followed by the largest connected component (ties broken by
    /// smallest node), relabelled densely.
    pub fn preprocess(&self) -> Result<Graph> {
        if self.node_count() == 0 {
            return Err(Error::EmptyGraph);
        }
        let core_nodes = self.k_core_nodes(2);
        if core_nodes.is_empty() {
            return Err(Error::EmptyTwoCore);
        }
        let core = self.induced_subgraph(&core_nodes);
        let largest = core.components().into_iter().fold(Vec::new(), |best, c| {
            if c.len() > best.len() {
                c
            } else {
                best
            }
        });
        Ok(core.induced_subgraph(&largest))
    }
}

/// Reusable workspace for repeated two-hop queries on a graph of fixed size.
/// Marks are epoch-stamped so no clearing pass is needed between queries.
#[derive(Debug, Clone)]
pub struct TwoHopScratch {
    stamp: Vec<u32>,
    epoch: u32,
    out: Vec<usize>,
}

impl TwoHopScratch {
    pub fn new(n: usize) -> Self {
        TwoHopScratch {
            stamp: vec![0; n],
            epoch: 0,
            out: Vec::new(),
        }
    }

    fn next_epoch(&mut self) -> u32 {
        if self.epoch == u32::MAX {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.epoch
    }

    pub fn collect(&mut self, g: &Graph, v: usize) -> &[usize] {
        if self.stamp.len() < g.node_count() {
            self.stamp.resize(g.node_count(), 0);
        }
        let epoch = self.next_epoch();
        self.out.clear();
        self.stamp[v] = epoch;
        for &w in g.neighbors(v) {
            self.stamp[w] = epoch;
        }
        for &w in g.neighbors(v) {
            for &x in g.neighbors(w) {
                if self.stamp[x] != epoch {
                    self.stamp[x] = epoch;
                    self.out.push(x);
                }
            }
        }
        &self.out
    }
}
