//! Analytic FLOP and activation-memory accounting for the model, built from
//! the same per-kernel formulas the kernels charge at run time, and the
//! quadratic attention comparator.

use std::fmt::Write as _;

use crate::bissm::Residual;
use crate::error::{Error, Result};
use crate::hgconv::ConvMode;
use crate::hypergraph::{EdgeKind, TileBag};
use crate::numkit::flops;
use crate::pipeline::{HgMambaModel, ModelConfig};
use crate::scanner::{walk_length, ScanMix};

/// Graph and scan sizes the cost depends on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureStats {
    pub n_nodes: usize,
    /// Hyperedges used by the convolution (rule edges only in rule-only mode).
    pub n_edges: usize,
    /// Total memberships of those hyperedges.
    pub nnz: usize,
    /// Per layer: the valid length of every scanned sequence.
    pub seq_lens: Vec<Vec<usize>>,
}

impl StructureStats {
    /// Sizes for an `n`-tile bag laid out row-major on a square-ish grid,
    /// assuming random walks reach their full length.
    pub fn estimate(cfg: &ModelConfig, n: usize) -> Self {
        let side = (n as f64).sqrt().ceil().max(1.0) as usize;
        let full_rows = n / side;
        let rem = n % side;
        // Right neighbours within rows, then down neighbours between rows.
        let right = full_rows * (side - 1) + rem.saturating_sub(1);
        let down = full_rows.saturating_sub(1) * side + if full_rows > 0 { rem } else { 0 };
        let rule = right + down;
        let sim_members = cfg.top_k.min(n.saturating_sub(1));
        let (sim_edges, sim_nnz) = match cfg.mode {
            ConvMode::Hypergraph if sim_members > 0 => (n, n * (sim_members + 1)),
            _ => (0, 0),
        };
        let m = cfg.m_sequences;
        let n_dfs = match cfg.scan_mix {
            ScanMix::Both => m.div_ceil(2),
            ScanMix::HdfsOnly | ScanMix::Random => m,
            ScanMix::HarwOnly => 0,
        };
        let t_len = walk_length(n, cfg.t_ratio);
        let layer: Vec<usize> = (0..m).map(|i| if i < n_dfs { n } else { t_len }).collect();
        Self {
            n_nodes: n,
            n_edges: rule + sim_edges,
            nnz: 2 * rule + sim_nnz,
            seq_lens: vec![layer; cfg.n_layers],
        }
    }

    /// Exact sizes of one forward pass of `model` on `bag`.
    pub fn measure(model: &HgMambaModel, bag: &TileBag, scan_seed: u64) -> Result<Self> {
        let hg = model.graph(bag)?;
        let inc = hg.incidence();
        let used: Vec<usize> = (0..inc.n_edges())
            .filter(|&e| model.cfg.mode == ConvMode::Hypergraph || inc.kinds()[e] == EdgeKind::Rule)
            .collect();
        let seq_lens = (0..model.cfg.n_layers)
            .map(|l| {
                model
                    .scan_set(&hg, scan_seed, l)
                    .sequences
                    .iter()
                    .map(|s| s.valid_len())
                    .collect()
            })
            .collect();
        Ok(Self {
            n_nodes: hg.n_nodes(),
            n_edges: used.len(),
            nnz: used.iter().map(|&e| inc.members(e).len()).sum(),
            seq_lens,
        })
    }
}

/// Forward-pass cost of one bag, split by component.
#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub config: ModelConfig,
    pub n_nodes: usize,
    pub hgconv: u64,
    /// Traversals do no arithmetic; kept for completeness of the breakdown.
    pub scan_generation: u64,
    pub conv1d: u64,
    /// Recurrences plus the B/C projections feeding them.
    pub selective_scan: u64,
    /// Branch norms, residual sums, merge projection and merge norm.
    pub merge_norm: u64,
    pub aggregation: u64,
    pub mil_head: u64,
    pub total: u64,
    pub param_bytes: u64,
    pub peak_activation_bytes: u64,
    pub attention_flops: u64,
    pub attention_peak_bytes: u64,
}

impl CostReport {
    pub fn components(&self) -> [(&'static str, u64); 7] {
        [
            ("hgconv", self.hgconv),
            ("scan_generation", self.scan_generation),
            ("conv1d", self.conv1d),
            ("selective_scan", self.selective_scan),
            ("merge_norm", self.merge_norm),
            ("aggregation", self.aggregation),
            ("mil_head", self.mil_head),
        ]
    }

    /// `attention_flops / total`.
    pub fn attention_ratio(&self) -> f64 {
        self.attention_flops as f64 / self.total as f64
    }

    /// `key=value` lines.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n={}", self.n_nodes);
        for (k, v) in self.components() {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "total={}", self.total);
        let _ = writeln!(s, "param_bytes={}", self.param_bytes);
        let _ = writeln!(s, "peak_activation_bytes={}", self.peak_activation_bytes);
        let _ = writeln!(s, "attention_flops={}", self.attention_flops);
        let _ = writeln!(s, "attention_peak_bytes={}", self.attention_peak_bytes);
        let _ = writeln!(s, "attention_ratio={:.3}", self.attention_ratio());
        s
    }
}

/// Self-attention stack of `layers` layers at width `d`: Q, K, V and output
/// projections (`8Nd²`) plus score and value products (`4N²d`).
pub fn attention_cost(n: usize, d: usize, layers: usize) -> u64 {
    let (n, d, l) = (n as u64, d as u64, layers as u64);
    l * (8 * n * d * d + 4 * n * n * d)
}

/// Largest live activation set of one attention layer: Q, K, V, output and
/// the `N x N` score matrix, in `f64`.
pub fn attention_peak_bytes(n: usize, d: usize) -> u64 {
    8 * (4 * (n * d) as u64 + (n * n) as u64)
}

fn param_count(cfg: &ModelConfig) -> u64 {
    let (d, ds, w, h, c) = (
        cfg.d,
        cfg.d_state,
        cfg.conv_width,
        cfg.attention_dim,
        cfg.n_classes,
    );
    let branch = d * w + d + d * ds + 2 * d + 2 * (d * ds + ds) + 3 * d;
    let bissm = 2 * branch + d * d + 3 * d;
    let block = |d_in: usize| d_in * d + 2 + bissm;
    let blocks: usize = (0..cfg.n_layers)
        .map(|l| block(if l == 0 { cfg.input_dim } else { d }))
        .sum();
    (blocks + 2 * d * h + h + d * c + c) as u64
}

/// Analytic cost of one forward pass. Equal to what the instrumented kernels
/// charge when `stats` is measured from the same bag and scans.
pub fn cost_model(cfg: &ModelConfig, stats: &StructureStats) -> Result<CostReport> {
    cfg.validate()?;
    let n = stats.n_nodes;
    if n == 0 {
        return Err(Error::Usage("cost model needs at least one tile".into()));
    }
    if stats.seq_lens.len() != cfg.n_layers {
        return Err(Error::Usage(format!(
            "{} layers of scan lengths for {} layers",
            stats.seq_lens.len(),
            cfg.n_layers
        )));
    }
    let (d, ds, w, h, c) = (
        cfg.d,
        cfg.d_state,
        cfg.conv_width,
        cfg.attention_dim,
        cfg.n_classes,
    );
    let mut r = CostReport {
        config: cfg.clone(),
        n_nodes: n,
        hgconv: 0,
        scan_generation: 0,
        conv1d: 0,
        selective_scan: 0,
        merge_norm: 0,
        aggregation: 0,
        mil_head: 0,
        total: 0,
        param_bytes: 8 * param_count(cfg),
        peak_activation_bytes: 0,
        attention_flops: attention_cost(n, d, cfg.n_layers),
        attention_peak_bytes: attention_peak_bytes(n, d),
    };
    let word = 8u64;
    let mut peak = 0u64;
    for (l, lens) in stats.seq_lens.iter().enumerate() {
        let d_in = if l == 0 { cfg.input_dim } else { d };
        r.hgconv += flops::matmul(n, d_in, d)
            + flops::hypergraph_propagate(n, stats.n_edges, stats.nnz, d)
            + flops::elementwise(n * d);
        let mut tokens = 0;
        let mut working = 0;
        for &t in lens {
            tokens += t;
            r.conv1d += 2 * flops::causal_conv(t, d, w);
            r.selective_scan += 2 * (flops::selective_scan(t, d, ds) + 2 * flops::matmul(t, d, ds));
            let residual = if cfg.residual == Residual::WithInput {
                1
            } else {
                0
            };
            r.merge_norm += 2 * flops::layer_norm(t, d)
                + (2 + residual) * flops::elementwise(t * d)
                + flops::matmul(t, d, d)
                + flops::layer_norm(t, d);
            // One sequence in flight: its input, per branch the conv output,
            // Δ, B, C, one state per channel and the scan output, then the
            // merged sum and the block output.
            let seq = t * d + 2 * (3 * t * d + 2 * t * ds + d * ds) + 2 * t * d;
            working = working.max(seq);
        }
        r.aggregation += flops::aggregate(tokens, n, d);
        // Block input, convolved features, all finished token outputs.
        let live = n * d_in + n * d + tokens * d + working;
        peak = peak.max(word * live as u64);
    }
    r.mil_head = 2 * flops::matmul(n, d, h)
        + flops::elementwise(3 * n * h)
        + flops::matmul(n, h, 1)
        + flops::softmax(n)
        + flops::matmul(1, n, d)
        + flops::matmul(1, d, c)
        + flops::elementwise(c);
    peak = peak.max(word * (n * d + 2 * n * h + n + d + c) as u64);
    r.peak_activation_bytes = peak;
    r.total = r.components().iter().map(|(_, v)| v).sum();
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Matrix, Parameters, Rng};

    fn grid_bag(n: usize, d: usize, seed: u64) -> TileBag {
        let side = (n as f64).sqrt().ceil() as usize;
        let mut rng = Rng::new(seed);
        let coords = (0..n)
            .map(|i| ((i / side) as i32, (i % side) as i32))
            .collect();
        TileBag::new("c", coords, Matrix::from_fn(n, d, |_, _| rng.normal()), 0).unwrap()
    }

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            input_dim: 6,
            d: 8,
            d_state: 4,
            attention_dim: 5,
            m_sequences: 5,
            n_classes: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn attention_formula() {
        assert_eq!(attention_cost(2, 1, 1), 32);
        let r = attention_cost(2_000_000, 8, 1) as f64 / attention_cost(1_000_000, 8, 1) as f64;
        assert!((r - 4.0).abs() < 1e-3);
    }

    #[test]
    fn analytic_count_equals_instrumented_count() {
        for (n, mode, residual, mix) in [
            (64, ConvMode::Hypergraph, Residual::WithInput, ScanMix::Both),
            (1, ConvMode::Hypergraph, Residual::WithInput, ScanMix::Both),
            (
                37,
                ConvMode::RuleOnly,
                Residual::BranchesOnly,
                ScanMix::HarwOnly,
            ),
            (
                100,
                ConvMode::Hypergraph,
                Residual::WithInput,
                ScanMix::Random,
            ),
        ] {
            let cfg = ModelConfig {
                mode,
                residual,
                scan_mix: mix,
                ..small_cfg()
            };
            let model = crate::pipeline::HgMambaModel::init(&cfg, 3).unwrap();
            let bag = grid_bag(n, 6, n as u64);
            let stats = StructureStats::measure(&model, &bag, 17).unwrap();
            let (_, counted) = flops::count(|| model.forward(&bag, 17).unwrap());
            let report = cost_model(&cfg, &stats).unwrap();
            assert_eq!(report.total, counted, "n={n}");
            assert_eq!(report.param_bytes, 8 * model.n_scalars() as u64);
        }
    }

    #[test]
    fn estimate_matches_measured_graph_size() {
        let cfg = small_cfg();
        let model = crate::pipeline::HgMambaModel::init(&cfg, 3).unwrap();
        for n in [1, 2, 7, 16, 50] {
            let est = StructureStats::estimate(&cfg, n);
            let got = StructureStats::measure(&model, &grid_bag(n, 6, 1), 0).unwrap();
            assert_eq!((est.n_edges, est.nnz), (got.n_edges, got.nnz), "n={n}");
            for (a, b) in est
                .seq_lens
                .iter()
                .flatten()
                .zip(got.seq_lens.iter().flatten())
            {
                assert!(b <= a);
            }
        }
    }

    #[test]
    fn cost_is_linear_in_bag_size() {
        let cfg = ModelConfig {
            input_dim: 512,
            d: 512,
            ..ModelConfig::default()
        };
        for n in [1000, 2000, 4000] {
            let a = cost_model(&cfg, &StructureStats::estimate(&cfg, n))
                .unwrap()
                .total as f64;
            let b = cost_model(&cfg, &StructureStats::estimate(&cfg, 2 * n))
                .unwrap()
                .total as f64;
            assert!((1.9..=2.1).contains(&(b / a)), "{}", b / a);
        }
    }

    #[test]
    fn degenerate_sizes() {
        let cfg = small_cfg();
        assert!(cost_model(&cfg, &StructureStats::estimate(&cfg, 0)).is_err());
        let r = cost_model(&cfg, &StructureStats::estimate(&cfg, 1)).unwrap();
        assert!(r.mil_head > 0);
        assert_eq!(r.total, r.components().iter().map(|(_, v)| v).sum::<u64>());
    }
}
