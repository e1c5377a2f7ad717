use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hgconv::{hgconv_backward, hgconv_forward_cached, ConvMode, HgConvCache, HgConvParams};
use crate::hypergraph::{EdgeKind, Hypergraph};
use crate::numkit::{flops, glorot_uniform, Matrix, Parameters, Rng};
use crate::scanner::ScanSet;

use super::aggregate::{aggregate_backward, aggregate_tokens};
use super::bidir::{bi_ssm_block, bi_ssm_block_backward, BiSsmCache};
use super::BiSsmParams;

/// One HGMamba layer: hypergraph convolution, then a Bi-SSM over each scanned
/// sequence, then token → node averaging.
///
/// Hyperedge weights are shared per kind (`[rule, sim]`) so the same
/// parameters apply to bags with different graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    /// `d_in x d`.
    pub conv_weight: Matrix,
    /// `1 x 2`: weight of rule edges, weight of similarity edges.
    pub edge_kind_weights: Matrix,
    pub ssm: BiSsmParams,
    pub mode: ConvMode,
}

impl BlockParams {
    pub fn init(d_in: usize, d: usize, d_state: usize, conv_width: usize, rng: &mut Rng) -> Self {
        Self {
            conv_weight: glorot_uniform(d_in, d, rng),
            edge_kind_weights: Matrix::filled(1, 2, 1.0),
            ssm: BiSsmParams::init(d, d_state, conv_width, rng),
            mode: ConvMode::default(),
        }
    }

    /// Per-hyperedge weights for `hg`.
    pub fn edge_weights(&self, hg: &Hypergraph) -> Vec<f64> {
        hg.incidence()
            .kinds()
            .iter()
            .map(|&k| self.edge_kind_weights[(0, kind_slot(k))])
            .collect()
    }

    fn hgconv(&self, hg: &Hypergraph) -> HgConvParams {
        HgConvParams {
            weight: self.conv_weight.clone(),
            edge_weights: self.edge_weights(hg),
        }
    }
}

fn kind_slot(kind: EdgeKind) -> usize {
    match kind {
        EdgeKind::Rule => 0,
        EdgeKind::Sim => 1,
    }
}

impl Parameters for BlockParams {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.conv_weight, &self.edge_kind_weights];
        out.extend(self.ssm.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.conv_weight, &mut self.edge_kind_weights];
        out.extend(self.ssm.tensors_mut());
        out
    }

    fn names(&self) -> Vec<String> {
        let mut out = vec!["conv_weight".to_string(), "edge_kind_weights".to_string()];
        out.extend(self.ssm.names().into_iter().map(|n| format!("ssm.{n}")));
        out
    }
}

#[derive(Clone, Debug)]
pub struct BlockCache {
    conv: HgConvCache,
    kinds: Vec<EdgeKind>,
    scan: ScanSet,
    sequences: Vec<BiSsmCache>,
}

pub fn hgmamba_block_forward(
    hg: &Hypergraph,
    x: &Matrix,
    p: &BlockParams,
    scan: &ScanSet,
) -> Result<Matrix> {
    hgmamba_block_forward_cached(hg, x, p, scan).map(|(y, _)| y)
}

pub fn hgmamba_block_forward_cached(
    hg: &Hypergraph,
    x: &Matrix,
    p: &BlockParams,
    scan: &ScanSet,
) -> Result<(Matrix, BlockCache)> {
    if scan.n_nodes() != hg.n_nodes() {
        return Err(Error::Structural(format!(
            "scan set covers {} nodes, graph has {}",
            scan.n_nodes(),
            hg.n_nodes()
        )));
    }
    let (x1, conv) = hgconv_forward_cached(hg, x, &p.hgconv(hg), p.mode)?;
    // Sequences run in parallel; each task counts its own FLOPs so the total
    // lands on the calling thread regardless of scheduling.
    let results: Vec<(Result<(Matrix, BiSsmCache)>, u64)> = scan
        .sequences
        .par_iter()
        .map(|s| flops::count(|| bi_ssm_block(&x1.gather_rows(s.valid_prefix()), &p.ssm)))
        .collect();
    let mut outputs = Vec::with_capacity(results.len());
    let mut sequences = Vec::with_capacity(results.len());
    for (r, charged) in results {
        flops::add(charged);
        let (out, cache) = r?;
        outputs.push(out);
        sequences.push(cache);
    }
    let out = aggregate_tokens(&outputs, scan, &x1)?;
    Ok((
        out,
        BlockCache {
            conv,
            kinds: hg.incidence().kinds().to_vec(),
            scan: scan.clone(),
            sequences,
        },
    ))
}

/// Gradients `(d_input, d_params)`. Edge-kind weight gradients treat node and
/// edge degrees as constants.
pub fn block_backward(
    cache: &BlockCache,
    p: &BlockParams,
    grad_out: &Matrix,
) -> Result<(Matrix, BlockParams)> {
    let (token_grads, mut g_x1) = aggregate_backward(grad_out, &cache.scan);
    let results: Vec<Result<(Matrix, BiSsmParams)>> = cache
        .sequences
        .par_iter()
        .zip(&token_grads)
        .map(|(c, g)| bi_ssm_block_backward(c, &p.ssm, g))
        .collect();
    let mut g_ssm = p.ssm.zeros_like();
    for (s, r) in cache.scan.sequences.iter().zip(results) {
        let (g_tokens, g) = r?;
        g_ssm.add_assign(&g);
        for (pos, &node) in s.valid_prefix().iter().enumerate() {
            for (o, v) in g_x1.row_mut(node).iter_mut().zip(g_tokens.row(pos)) {
                *o += v;
            }
        }
    }
    let conv_params = HgConvParams {
        weight: p.conv_weight.clone(),
        edge_weights: cache
            .kinds
            .iter()
            .map(|&k| p.edge_kind_weights[(0, kind_slot(k))])
            .collect(),
    };
    let gc = hgconv_backward(&cache.conv, &conv_params, &g_x1)?;
    let mut g_kind = Matrix::zeros(1, 2);
    for (&k, g) in cache.kinds.iter().zip(&gc.edge_weights) {
        g_kind[(0, kind_slot(k))] += g;
    }
    Ok((
        gc.x,
        BlockParams {
            conv_weight: gc.weight,
            edge_kind_weights: g_kind,
            ssm: g_ssm,
            mode: p.mode,
        },
    ))
}
