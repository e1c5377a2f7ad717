#![allow(dead_code)]

use hgmamba::datakit::{Dataset, SynthConfig};
use hgmamba::hypergraph::{build_hypergraph, Hypergraph, TileBag};
use hgmamba::numkit::{matmul, matmul_nt, Matrix, Rng};
use hgmamba::pipeline::{ModelConfig, RunConfig, TrainConfig};
use hgmamba::scanner::{ScanSequence, ScanStrategy};

/// A bag on a random subset of an `side x side` grid, so that graphs come
/// out with several components and the occasional isolated tile. About one
/// tile in ten is all zeros.
pub fn random_bag(rng: &mut Rng, max_tiles: usize, side: i32, d: usize) -> TileBag {
    let mut cells: Vec<(i32, i32)> = (0..side)
        .flat_map(|r| (0..side).map(move |c| (r, c)))
        .collect();
    rng.shuffle(&mut cells);
    let n = 1 + rng.below(max_tiles.min(cells.len()));
    cells.truncate(n);
    let zero: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.1).collect();
    let features = Matrix::from_fn(n, d, |i, _| if zero[i] { 0.0 } else { rng.normal() });
    TileBag::new("random", cells, features, 0).unwrap()
}

/// Mixed rule/similarity hypergraph over a random bag.
pub fn random_hypergraph(rng: &mut Rng, max_tiles: usize) -> Hypergraph {
    let bag = random_bag(rng, max_tiles, 10, 4);
    let k = rng.below(5);
    build_hypergraph(&bag, k).unwrap()
}

/// Dense `D_v^{-1/2} H W D_e^{-1} Hᵀ D_v^{-1/2}` from the incidence matrix,
/// with zero entries for isolated nodes.
pub fn dense_theta(hg: &Hypergraph, edge_weights: &[f64]) -> Matrix {
    let h = hg.incidence().dense();
    let (n, e) = h.shape();
    let edge_scale: Vec<f64> = (0..e)
        .map(|j| edge_weights[j] / (0..n).map(|v| h[(v, j)]).sum::<f64>())
        .collect();
    let hw = Matrix::from_fn(n, e, |v, j| h[(v, j)] * edge_scale[j]);
    let core = matmul_nt(&hw, &h).unwrap();
    let deg: Vec<f64> = (0..n)
        .map(|v| (0..e).map(|j| h[(v, j)] * edge_weights[j]).sum())
        .collect();
    let s: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { d.powf(-0.5) } else { 0.0 })
        .collect();
    Matrix::from_fn(n, n, |u, v| s[u] * core[(u, v)] * s[v])
}

pub fn dense_hgconv(hg: &Hypergraph, x: &Matrix, w: &Matrix, edge_weights: &[f64]) -> Matrix {
    let theta = dense_theta(hg, edge_weights);
    matmul(&matmul(&theta, x).unwrap(), w)
        .unwrap()
        .map(|v| v.max(0.0))
}

pub const MOTIF_EPOCHS: usize = 40;

/// The end-to-end learning configuration: the default model at reduced
/// width on 32-dimensional tiles.
pub fn motif_run_config(seed: u64) -> RunConfig {
    RunConfig {
        model: ModelConfig {
            input_dim: 32,
            d: 32,
            d_state: 8,
            m_sequences: 4,
            ..ModelConfig::default()
        },
        train: TrainConfig {
            epochs: MOTIF_EPOCHS,
            milestones: vec![MOTIF_EPOCHS / 2, MOTIF_EPOCHS * 3 / 4],
            seed,
            ..TrainConfig::default()
        },
    }
}

/// 14 x 14 bags, d = 32, motif strength 2.0; 200 / 50 / 100 bags.
pub fn motif_data(seed: u64, high_order: bool) -> Dataset {
    let cfg = SynthConfig {
        rows: 14,
        cols: 14,
        d: 32,
        n_classes: 2,
        motif_strength: 2.0,
        high_order,
        seed,
        ..SynthConfig::default()
    };
    Dataset::synthesize(&cfg, 200, 50, 100).unwrap()
}

/// Every broken scan invariant of `seq`, described. H-DFS must visit all
/// nodes, and each non-restart node must share a hyperedge with an earlier
/// node of its segment. H-ARW must be a repeat-free walk of at most `t_len`
/// nodes whose consecutive nodes share a hyperedge.
pub fn scan_violations(hg: &Hypergraph, seq: &ScanSequence, t_len: usize) -> Vec<String> {
    let n = hg.n_nodes();
    let mut out = Vec::new();
    if seq.order.len() != n || seq.valid.len() != n {
        out.push(format!("length {} for {n} nodes", seq.order.len()));
        return out;
    }
    let len = seq.valid_len();
    if seq.valid[len..].iter().any(|&v| v) {
        out.push("padding is not a suffix".into());
    }
    let prefix = seq.valid_prefix();
    let mut seen = vec![false; n];
    for &v in prefix {
        if v >= n {
            out.push(format!("node {v} out of range"));
            return out;
        }
        if std::mem::replace(&mut seen[v], true) {
            out.push(format!("node {v} repeated"));
        }
    }
    match seq.strategy {
        ScanStrategy::Hdfs => {
            if len != n {
                out.push(format!("H-DFS covers {len} of {n} nodes"));
            }
            if seq.restarts.first() != Some(&0) {
                out.push("H-DFS does not start with a restart".into());
            }
            let mut segment_start = 0;
            for p in 0..len {
                if seq.restarts.contains(&p) {
                    segment_start = p;
                    continue;
                }
                let v = prefix[p];
                if !prefix[segment_start..p]
                    .iter()
                    .any(|&u| hg.shares_edge(u, v))
                {
                    out.push(format!(
                        "H-DFS node {v} at {p} has no parent in its segment"
                    ));
                }
            }
        }
        ScanStrategy::Harw => {
            if len == 0 || len > t_len {
                out.push(format!("H-ARW length {len} outside 1..={t_len}"));
            }
            for w in prefix.windows(2) {
                if !hg.shares_edge(w[0], w[1]) {
                    out.push(format!(
                        "H-ARW step {} -> {} shares no hyperedge",
                        w[0], w[1]
                    ));
                }
            }
        }
        ScanStrategy::Random => {
            if len != n {
                out.push(format!("random scan covers {len} of {n} nodes"));
            }
        }
    }
    out
}
