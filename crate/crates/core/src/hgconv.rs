//! Hypergraph convolution `ReLU(Θ X W)`.
//!
//! Θ is applied as two sparse passes (node→edge, edge→node) and never
//! materialized. Node degrees are computed from the current edge weights but
//! treated as constants by the backward pass, so the edge-weight gradient is
//! exact only through the `W_e` factor.

use crate::error::{Error, Result};
use crate::hypergraph::{EdgeKind, Hypergraph};
use crate::numkit::{flops, glorot_uniform, matmul, matmul_nt, matmul_tn, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ConvMode {
    /// All hyperedges (rule and similarity).
    #[default]
    Hypergraph,
    /// Spatial pair edges only: a plain normalized graph convolution.
    RuleOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HgConvParams {
    pub weight: Matrix,
    /// Diagonal of `W_e`, one per hyperedge of the graph it is used with.
    pub edge_weights: Vec<f64>,
}

impl HgConvParams {
    pub fn init(d_in: usize, d_out: usize, n_edges: usize, rng: &mut Rng) -> Self {
        Self {
            weight: glorot_uniform(d_in, d_out, rng),
            edge_weights: vec![1.0; n_edges],
        }
    }
}

/// Sparse form of Θ for a fixed edge selection and weighting.
#[derive(Clone, Debug)]
pub struct Propagator {
    /// Selected hyperedges: (member list, `w(e)/δ(e)`, index in the full graph).
    edges: Vec<(Vec<usize>, f64, usize)>,
    inv_sqrt_deg: Vec<f64>,
    nnz: usize,
}

impl Propagator {
    pub fn new(hg: &Hypergraph, edge_weights: &[f64], mode: ConvMode) -> Result<Self> {
        let inc = hg.incidence();
        if edge_weights.len() != inc.n_edges() {
            return Err(Error::dim(
                "hgconv",
                format!(
                    "{} edge weights for {} hyperedges",
                    edge_weights.len(),
                    inc.n_edges()
                ),
            ));
        }
        if let Some(e) = edge_weights
            .iter()
            .position(|w| !(*w > 0.0 && w.is_finite()))
        {
            return Err(Error::Structural(format!(
                "edge weight {e} is {}",
                edge_weights[e]
            )));
        }
        let n = inc.n_nodes();
        let mut degree = vec![0.0; n];
        let mut edges = Vec::new();
        let mut nnz = 0;
        for (e, members) in inc.edges().iter().enumerate() {
            if mode == ConvMode::RuleOnly && inc.kinds()[e] != EdgeKind::Rule {
                continue;
            }
            let w = edge_weights[e];
            for &v in members {
                degree[v] += w;
            }
            nnz += members.len();
            edges.push((members.clone(), w / members.len() as f64, e));
        }
        let inv_sqrt_deg = degree
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        Ok(Self {
            edges,
            inv_sqrt_deg,
            nnz,
        })
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    /// `Θ · y` for an `N x d` signal.
    pub fn apply(&self, y: &Matrix) -> Matrix {
        let (n, d) = y.shape();
        flops::add(flops::hypergraph_propagate(
            n,
            self.edges.len(),
            self.nnz,
            d,
        ));
        let scaled = self.prescale(y);
        let mut out = Matrix::zeros(n, d);
        let mut acc = vec![0.0; d];
        for (members, scale, _) in &self.edges {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &v in members {
                for (a, x) in acc.iter_mut().zip(scaled.row(v)) {
                    *a += x;
                }
            }
            acc.iter_mut().for_each(|a| *a *= scale);
            for &v in members {
                for (o, a) in out.row_mut(v).iter_mut().zip(&acc) {
                    *o += a;
                }
            }
        }
        for v in 0..n {
            let s = self.inv_sqrt_deg[v];
            out.row_mut(v).iter_mut().for_each(|o| *o *= s);
        }
        out
    }

    fn prescale(&self, y: &Matrix) -> Matrix {
        let mut out = y.clone();
        for v in 0..y.rows() {
            let s = self.inv_sqrt_deg[v];
            out.row_mut(v).iter_mut().for_each(|o| *o *= s);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct HgConvCache {
    x: Matrix,
    xw: Matrix,
    pre: Matrix,
    prop: Propagator,
    n_edges: usize,
}

#[derive(Clone, Debug)]
pub struct HgConvGrads {
    pub x: Matrix,
    pub weight: Matrix,
    pub edge_weights: Vec<f64>,
}

fn check_inputs(hg: &Hypergraph, x: &Matrix, p: &HgConvParams) -> Result<()> {
    if x.rows() != hg.n_nodes() {
        return Err(Error::dim(
            "hgconv",
            format!("{} feature rows for {} nodes", x.rows(), hg.n_nodes()),
        ));
    }
    if x.cols() != p.weight.rows() {
        return Err(Error::dim(
            "hgconv",
            format!(
                "input width {} vs weight {}x{}",
                x.cols(),
                p.weight.rows(),
                p.weight.cols()
            ),
        ));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("hgconv input".into()));
    }
    Ok(())
}

pub fn hgconv_forward(
    hg: &Hypergraph,
    x: &Matrix,
    p: &HgConvParams,
    mode: ConvMode,
) -> Result<Matrix> {
    hgconv_forward_cached(hg, x, p, mode).map(|(y, _)| y)
}

pub fn hgconv_forward_cached(
    hg: &Hypergraph,
    x: &Matrix,
    p: &HgConvParams,
    mode: ConvMode,
) -> Result<(Matrix, HgConvCache)> {
    check_inputs(hg, x, p)?;
    let prop = Propagator::new(hg, &p.edge_weights, mode)?;
    let xw = matmul(x, &p.weight)?;
    let pre = prop.apply(&xw);
    flops::add(flops::elementwise(pre.len()));
    let out = pre.map(|v| v.max(0.0));
    let cache = HgConvCache {
        x: x.clone(),
        xw,
        pre,
        prop,
        n_edges: hg.n_edges(),
    };
    Ok((out, cache))
}

pub fn hgconv_backward(
    cache: &HgConvCache,
    p: &HgConvParams,
    grad_out: &Matrix,
) -> Result<HgConvGrads> {
    if grad_out.shape() != cache.pre.shape() {
        return Err(Error::dim(
            "hgconv_backward",
            format!(
                "grad {:?} vs output {:?}",
                grad_out.shape(),
                cache.pre.shape()
            ),
        ));
    }
    let mut masked = grad_out.clone();
    for (g, &z) in masked.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    // Θ is symmetric, so the adjoint of `apply` is `apply`.
    let grad_xw = cache.prop.apply(&masked);
    let weight = matmul_tn(&cache.x, &grad_xw)?;
    let x = matmul_nt(&grad_xw, &p.weight)?;

    let mut edge_weights = vec![0.0; cache.n_edges];
    let gs = cache.prop.prescale(&masked);
    let ys = cache.prop.prescale(&cache.xw);
    let d = grad_out.cols();
    let mut ga = vec![0.0; d];
    let mut ya = vec![0.0; d];
    for (members, _, e) in &cache.prop.edges {
        ga.iter_mut().for_each(|a| *a = 0.0);
        ya.iter_mut().for_each(|a| *a = 0.0);
        for &v in members {
            for c in 0..d {
                ga[c] += gs[(v, c)];
                ya[c] += ys[(v, c)];
            }
        }
        let dot: f64 = ga.iter().zip(&ya).map(|(a, b)| a * b).sum();
        edge_weights[*e] = dot / members.len() as f64;
    }
    Ok(HgConvGrads {
        x,
        weight,
        edge_weights,
    })
}
