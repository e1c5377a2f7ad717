//! Hypergraph flattening: randomized traversals that turn the node set into
//! `M` sequences, plus the node → (sequence, position) membership index used to
//! average tokens back onto nodes.

use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::numkit::{derive_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanStrategy {
    /// Depth-first traversal restarted until every node is covered.
    Hdfs,
    /// Acyclic random walk of bounded length, padded to `N`.
    Harw,
    /// Uniform shuffle of the nodes; ignores the hypergraph (ablation baseline).
    Random,
}

/// Which traversals make up a scan set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScanMix {
    /// `ceil(M/2)` H-DFS plus `floor(M/2)` H-ARW sequences.
    #[default]
    Both,
    HdfsOnly,
    HarwOnly,
    Random,
}

impl ScanMix {
    pub fn name(self) -> &'static str {
        match self {
            ScanMix::Both => "both",
            ScanMix::HdfsOnly => "hdfs",
            ScanMix::HarwOnly => "harw",
            ScanMix::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "both" => Some(ScanMix::Both),
            "hdfs" | "hdfs-only" => Some(ScanMix::HdfsOnly),
            "harw" | "harw-only" => Some(ScanMix::HarwOnly),
            "random" => Some(ScanMix::Random),
            _ => None,
        }
    }
}

/// One flattened sequence of length `N`; padding is a contiguous suffix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanSequence {
    pub order: Vec<usize>,
    pub valid: Vec<bool>,
    pub strategy: ScanStrategy,
    /// Positions where a traversal (re)started from a fresh root.
    pub restarts: Vec<usize>,
}

impl ScanSequence {
    fn padded(nodes: Vec<usize>, n: usize, strategy: ScanStrategy, restarts: Vec<usize>) -> Self {
        let len = nodes.len();
        let mut order = nodes;
        order.resize(n, 0);
        let valid = (0..n).map(|i| i < len).collect();
        Self {
            order,
            valid,
            strategy,
            restarts,
        }
    }

    pub fn valid_len(&self) -> usize {
        self.valid.iter().take_while(|&&v| v).count()
    }

    pub fn valid_prefix(&self) -> &[usize] {
        &self.order[..self.valid_len()]
    }
}

/// Draws one root from the unvisited set in O(1).
struct Unvisited {
    nodes: Vec<usize>,
    slot: Vec<usize>,
}

impl Unvisited {
    fn new(n: usize) -> Self {
        Self {
            nodes: (0..n).collect(),
            slot: (0..n).collect(),
        }
    }

    fn remove(&mut self, v: usize) {
        let i = self.slot[v];
        let last = *self.nodes.last().expect("remove from empty set");
        self.nodes.swap_remove(i);
        if last != v {
            self.slot[last] = i;
        }
    }

    fn pick(&self, rng: &mut Rng) -> Option<usize> {
        (!self.nodes.is_empty()).then(|| self.nodes[rng.below(self.nodes.len())])
    }
}

/// H-DFS from an rng-chosen root.
pub fn h_dfs(hg: &Hypergraph, rng: &mut Rng) -> ScanSequence {
    let root = rng.below(hg.n_nodes().max(1));
    h_dfs_from(hg, root, rng)
}

/// H-DFS from a given first root. Expanding a node pushes every unvisited
/// member of its incident hyperedges in shuffled order; when the stack runs dry
/// the traversal restarts at a random unvisited node.
pub fn h_dfs_from(hg: &Hypergraph, root: usize, rng: &mut Rng) -> ScanSequence {
    let n = hg.n_nodes();
    let mut visited = vec![false; n];
    let mut unvisited = Unvisited::new(n);
    let mut order = Vec::with_capacity(n);
    let mut restarts = Vec::new();
    let mut stack = Vec::new();
    let mut next_root = Some(root);
    while let Some(r) = next_root {
        restarts.push(order.len());
        stack.push(r);
        while let Some(v) = stack.pop() {
            if visited[v] {
                continue;
            }
            visited[v] = true;
            unvisited.remove(v);
            order.push(v);
            let mut frontier: Vec<usize> = hg
                .neighbors(v)
                .into_iter()
                .filter(|&u| !visited[u])
                .collect();
            rng.shuffle(&mut frontier);
            stack.extend(frontier);
        }
        next_root = unvisited.pick(rng);
    }
    ScanSequence::padded(order, n, ScanStrategy::Hdfs, restarts)
}

/// H-ARW from an rng-chosen root.
pub fn h_arw(hg: &Hypergraph, rng: &mut Rng, t_len: usize) -> ScanSequence {
    let root = rng.below(hg.n_nodes().max(1));
    h_arw_from(hg, root, rng, t_len)
}

/// Acyclic random walk: step to a uniformly chosen unvisited node sharing a
/// hyperedge with the current one, until `t_len` nodes or a dead end.
pub fn h_arw_from(hg: &Hypergraph, root: usize, rng: &mut Rng, t_len: usize) -> ScanSequence {
    let n = hg.n_nodes();
    let t_len = t_len.clamp(1, n.max(1));
    let mut visited = vec![false; n];
    let mut walk = Vec::with_capacity(t_len);
    let mut current = root;
    visited[current] = true;
    walk.push(current);
    while walk.len() < t_len {
        let options: Vec<usize> = hg
            .neighbors(current)
            .into_iter()
            .filter(|&u| !visited[u])
            .collect();
        if options.is_empty() {
            break;
        }
        current = options[rng.below(options.len())];
        visited[current] = true;
        walk.push(current);
    }
    ScanSequence::padded(walk, n, ScanStrategy::Harw, vec![0])
}

/// Uniform permutation of the nodes.
pub fn random_scan(n: usize, rng: &mut Rng) -> ScanSequence {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    ScanSequence::padded(order, n, ScanStrategy::Random, vec![0])
}

/// `ceil(ratio·N)` clamped to `1..=N`.
pub fn walk_length(n: usize, t_ratio: f64) -> usize {
    ((t_ratio * n as f64).ceil() as usize).clamp(1, n.max(1))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanSet {
    pub sequences: Vec<ScanSequence>,
    /// For each node, the `(sequence, position)` pairs where it appears validly.
    pub membership: Vec<Vec<(usize, usize)>>,
}

impl ScanSet {
    pub fn from_sequences(sequences: Vec<ScanSequence>, n_nodes: usize) -> Result<Self> {
        let membership = membership_index(&sequences, n_nodes)?;
        Ok(Self {
            sequences,
            membership,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.membership.len()
    }

    /// Valid tokens across all sequences.
    pub fn total_tokens(&self) -> usize {
        self.sequences.iter().map(ScanSequence::valid_len).sum()
    }
}

pub fn membership_index(
    sequences: &[ScanSequence],
    n_nodes: usize,
) -> Result<Vec<Vec<(usize, usize)>>> {
    let mut membership = vec![Vec::new(); n_nodes];
    for (m, seq) in sequences.iter().enumerate() {
        if seq.order.len() != n_nodes || seq.valid.len() != n_nodes {
            return Err(Error::Structural(format!(
                "sequence {m} has length {} for {n_nodes} nodes",
                seq.order.len()
            )));
        }
        let len = seq.valid_len();
        if seq.valid[len..].iter().any(|&v| v) {
            return Err(Error::Structural(format!(
                "sequence {m} has padding before a valid token"
            )));
        }
        for (p, &v) in seq.order[..len].iter().enumerate() {
            if v >= n_nodes {
                return Err(Error::Structural(format!(
                    "sequence {m} references node {v}"
                )));
            }
            membership[v].push((m, p));
        }
    }
    Ok(membership)
}

pub fn build_scan_set(hg: &Hypergraph, m: usize, seed: u64, t_ratio: f64) -> ScanSet {
    build_scan_set_with(hg, m, seed, t_ratio, ScanMix::Both)
}

/// `m` sequences, each drawn from its own sub-seed of `seed`.
pub fn build_scan_set_with(
    hg: &Hypergraph,
    m: usize,
    seed: u64,
    t_ratio: f64,
    mix: ScanMix,
) -> ScanSet {
    let n = hg.n_nodes();
    let t_len = walk_length(n, t_ratio);
    let n_dfs = match mix {
        ScanMix::Both => m.div_ceil(2),
        ScanMix::HdfsOnly => m,
        ScanMix::HarwOnly | ScanMix::Random => 0,
    };
    let sequences = (0..m)
        .map(|i| {
            let idx = i as u64;
            match mix {
                ScanMix::Random => random_scan(n, &mut Rng::new(derive_seed(seed, "random", idx))),
                _ if i < n_dfs => h_dfs(hg, &mut Rng::new(derive_seed(seed, "hdfs", idx))),
                _ => h_arw(hg, &mut Rng::new(derive_seed(seed, "harw", idx)), t_len),
            }
        })
        .collect();
    ScanSet::from_sequences(sequences, n).expect("traversals produce consistent sequences")
}
