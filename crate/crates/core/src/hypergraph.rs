//! Tile bags and the unified hypergraph built over them.
//!
//! Two hyperedge families are concatenated: 2-member spatial edges between
//! 4-adjacent tiles, and one similarity hyperedge per tile holding the tile and
//! its top-K cosine neighbours. Incidence is kept sparse as member lists.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// One slide: tile grid positions, an `N x d` feature matrix and a label.
#[derive(Clone, Debug, PartialEq)]
pub struct TileBag {
    pub id: String,
    pub coords: Vec<(i32, i32)>,
    pub features: Matrix,
    pub label: usize,
}

impl TileBag {
    pub fn new(
        id: impl Into<String>,
        coords: Vec<(i32, i32)>,
        features: Matrix,
        label: usize,
    ) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Structural("bag has no tiles".into()));
        }
        if features.cols() == 0 {
            return Err(Error::Structural("zero-width features".into()));
        }
        if features.rows() != coords.len() {
            return Err(Error::dim(
                "TileBag::new",
                format!(
                    "{} coords for {} feature rows",
                    coords.len(),
                    features.rows()
                ),
            ));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("tile features".into()));
        }
        let mut seen = HashMap::with_capacity(coords.len());
        for (i, &c) in coords.iter().enumerate() {
            if let Some(j) = seen.insert(c, i) {
                return Err(Error::Structural(format!(
                    "tiles {j} and {i} share coordinate {c:?}"
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            coords,
            features,
            label,
        })
    }

    pub fn n_tiles(&self) -> usize {
        self.coords.len()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Rule,
    Sim,
}

/// Sparse incidence: hyperedge member lists with a kind tag and a weight each.
#[derive(Clone, Debug, PartialEq)]
pub struct Incidence {
    n_nodes: usize,
    edges: Vec<Vec<usize>>,
    kinds: Vec<EdgeKind>,
    weights: Vec<f64>,
}

impl Incidence {
    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            edges: Vec::new(),
            kinds: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn new(
        n_nodes: usize,
        edges: Vec<Vec<usize>>,
        kinds: Vec<EdgeKind>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if edges.len() != kinds.len() || edges.len() != weights.len() {
            return Err(Error::Structural(format!(
                "{} edges, {} kinds, {} weights",
                edges.len(),
                kinds.len(),
                weights.len()
            )));
        }
        for (e, members) in edges.iter().enumerate() {
            if members.len() < 2 {
                return Err(Error::Structural(format!("hyperedge {e} has < 2 members")));
            }
            if let Some(&v) = members.iter().find(|&&v| v >= n_nodes) {
                return Err(Error::Structural(format!(
                    "hyperedge {e} references node {v} of {n_nodes}"
                )));
            }
            let mut sorted = members.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Structural(format!("hyperedge {e} repeats a node")));
            }
            if kinds[e] == EdgeKind::Rule && members.len() != 2 {
                return Err(Error::Structural(format!(
                    "rule hyperedge {e} has {} members",
                    members.len()
                )));
            }
            if !(weights[e] > 0.0 && weights[e].is_finite()) {
                return Err(Error::Structural(format!(
                    "hyperedge {e} has weight {}",
                    weights[e]
                )));
            }
        }
        Ok(Self {
            n_nodes,
            edges,
            kinds,
            weights,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Total memberships, i.e. nonzeros of `H`.
    pub fn nnz(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    pub fn members(&self, e: usize) -> &[usize] {
        &self.edges[e]
    }

    pub fn kinds(&self) -> &[EdgeKind] {
        &self.kinds
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same structure, new per-edge weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_nodes,
            self.edges.clone(),
            self.kinds.clone(),
            weights,
        )
    }

    /// Only the hyperedges of one kind, order preserved.
    pub fn filter_kind(&self, kind: EdgeKind) -> Self {
        let mut out = Self::empty(self.n_nodes);
        for e in 0..self.n_edges() {
            if self.kinds[e] == kind {
                out.edges.push(self.edges[e].clone());
                out.kinds.push(kind);
                out.weights.push(self.weights[e]);
            }
        }
        out
    }

    /// Dense binary `N x E` incidence matrix `H`.
    pub fn dense(&self) -> Matrix {
        let mut h = Matrix::zeros(self.n_nodes, self.n_edges());
        for (e, members) in self.edges.iter().enumerate() {
            for &v in members {
                h[(v, e)] = 1.0;
            }
        }
        h
    }
}

/// Incidence plus cached degrees and per-node incident-edge lists.
#[derive(Clone, Debug)]
pub struct Hypergraph {
    incidence: Incidence,
    node_degrees: Vec<f64>,
    edge_degrees: Vec<usize>,
    node_edges: Vec<Vec<usize>>,
}

impl Hypergraph {
    pub fn incidence(&self) -> &Incidence {
        &self.incidence
    }

    pub fn n_nodes(&self) -> usize {
        self.incidence.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.incidence.n_edges()
    }

    /// `d(v) = Σ_e w(e)·h(v, e)`.
    pub fn node_degrees(&self) -> &[f64] {
        &self.node_degrees
    }

    /// `δ(e) = |e|`.
    pub fn edge_degrees(&self) -> &[usize] {
        &self.edge_degrees
    }

    /// Hyperedges containing `v`, ascending.
    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.node_edges[v]
    }

    /// Nodes belonging to no hyperedge.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&v| self.node_edges[v].is_empty())
            .collect()
    }

    /// Distinct nodes sharing at least one hyperedge with `v`, ascending.
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.node_edges[v]
            .iter()
            .flat_map(|&e| self.incidence.edges[e].iter().copied())
            .filter(|&u| u != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn shares_edge(&self, a: usize, b: usize) -> bool {
        self.node_edges[a]
            .iter()
            .any(|&e| self.incidence.edges[e].contains(&b))
    }

    /// The hypergraph restricted to hyperedges of one kind, degrees recomputed.
    pub fn restrict(&self, kind: EdgeKind) -> Hypergraph {
        compute_degrees(self.incidence.filter_kind(kind))
    }

    /// `D_v^{-1/2}` diagonal, with 0 for isolated nodes.
    pub fn inv_sqrt_node_degrees(&self) -> Vec<f64> {
        self.node_degrees
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect()
    }
}

/// One 2-member edge per pair of 4-adjacent tiles: every right-neighbour pair
/// in row-major order, then every down-neighbour pair in row-major order.
pub fn build_rule_adjacency(bag: &TileBag) -> Incidence {
    let index: HashMap<(i32, i32), usize> = bag
        .coords
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();
    let mut order: Vec<usize> = (0..bag.n_tiles()).collect();
    order.sort_by_key(|&i| bag.coords[i]);

    let mut inc = Incidence::empty(bag.n_tiles());
    for (dr, dc) in [(0, 1), (1, 0)] {
        for &i in &order {
            let (r, c) = bag.coords[i];
            if let Some(&j) = index.get(&(r + dr, c + dc)) {
                inc.edges.push(vec![i, j]);
                inc.kinds.push(EdgeKind::Rule);
                inc.weights.push(1.0);
            }
        }
    }
    inc
}

/// `x·y / (‖x‖‖y‖)`, or `-∞` when either vector has zero norm.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> f64 {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return f64::NEG_INFINITY;
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (dot / (nx * ny)).clamp(-1.0, 1.0)
}

/// One hyperedge per tile: the tile plus its `k` most cosine-similar tiles.
/// Ties go to the lower index; tiles with zero-norm features are never chosen,
/// and a tile with no eligible neighbour gets no hyperedge.
pub fn build_similarity_hyperedges(bag: &TileBag, k: usize) -> Incidence {
    let n = bag.n_tiles();
    let x = &bag.features;
    let norms: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut inc = Incidence::empty(n);
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        candidates.clear();
        if norms[i] > 0.0 {
            for j in (0..n).filter(|&j| j != i && norms[j] > 0.0) {
                let dot: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum();
                candidates.push(((dot / (norms[i] * norms[j])).clamp(-1.0, 1.0), j));
            }
        }
        let take = k.min(candidates.len());
        if take == 0 {
            continue;
        }
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if take < candidates.len() {
            candidates.select_nth_unstable_by(take - 1, by_rank);
        }
        let mut members: Vec<usize> = candidates[..take].iter().map(|&(_, j)| j).collect();
        members.push(i);
        members.sort_unstable();
        inc.edges.push(members);
        inc.kinds.push(EdgeKind::Sim);
        inc.weights.push(1.0);
    }
    inc
}

/// Horizontal concatenation `[H_rule, H_sim]`, without deduplication.
pub fn unify(rule: &Incidence, sim: &Incidence) -> Result<Incidence> {
    if rule.n_nodes != sim.n_nodes {
        return Err(Error::Structural(format!(
            "cannot unify incidences over {} and {} nodes",
            rule.n_nodes, sim.n_nodes
        )));
    }
    let mut out = rule.clone();
    out.edges.extend(sim.edges.iter().cloned());
    out.kinds.extend_from_slice(&sim.kinds);
    out.weights.extend_from_slice(&sim.weights);
    Ok(out)
}

pub fn compute_degrees(incidence: Incidence) -> Hypergraph {
    let n = incidence.n_nodes;
    let mut node_degrees = vec![0.0; n];
    let mut node_edges = vec![Vec::new(); n];
    for (e, members) in incidence.edges.iter().enumerate() {
        for &v in members {
            node_degrees[v] += incidence.weights[e];
            node_edges[v].push(e);
        }
    }
    let edge_degrees = incidence.edges.iter().map(Vec::len).collect();
    Hypergraph {
        incidence,
        node_degrees,
        edge_degrees,
        node_edges,
    }
}

/// Unified hypergraph of a bag with top-`k` similarity hyperedges.
pub fn build_hypergraph(bag: &TileBag, k: usize) -> Result<Hypergraph> {
    let rule = build_rule_adjacency(bag);
    let sim = build_similarity_hyperedges(bag, k);
    Ok(compute_degrees(unify(&rule, &sim)?))
}

/// Dense `Θ = D_v^{-1/2} H W_e D_e^{-1} Hᵀ D_v^{-1/2}`. Only for small graphs;
/// convolution applies the operator sparsely.
pub fn propagation_matrix(hg: &Hypergraph) -> Matrix {
    let n = hg.n_nodes();
    let s = hg.inv_sqrt_node_degrees();
    let mut theta = Matrix::zeros(n, n);
    for (e, members) in hg.incidence.edges.iter().enumerate() {
        let scale = hg.incidence.weights[e] / hg.edge_degrees[e] as f64;
        for &u in members {
            for &v in members {
                theta[(u, v)] += scale * s[u] * s[v];
            }
        }
    }
    theta
}
