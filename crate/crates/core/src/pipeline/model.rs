use crate::bissm::{block_backward, hgmamba_block_forward_cached, BlockCache, BlockParams};
use crate::error::{Error, Result};
use crate::hgconv::ConvMode;
use crate::hypergraph::{build_hypergraph, EdgeKind, Hypergraph, TileBag};
use crate::milhead::{
    cross_entropy, head_backward, head_forward, AbmilParams, HeadCache, HeadOutput,
};
use crate::numkit::{derive_seed, matmul, Matrix, Parameters, Rng};
use crate::scanner::{build_scan_set_with, ScanSet};

use super::ModelConfig;

/// Smallest allowed hyperedge-kind weight after an optimizer step.
pub const MIN_EDGE_WEIGHT: f64 = 1e-4;

/// A bag classifier trainable by [`super::train`].
pub trait BagModel: Parameters + Send + Sync {
    /// Per-bag structure computed once and reused across epochs.
    type Prepared: Send + Sync;

    fn n_classes(&self) -> usize;
    fn prepare(&self, bag: &TileBag) -> Result<Self::Prepared>;
    fn logits(&self, bag: &TileBag, prep: &Self::Prepared, scan_seed: u64) -> Result<Vec<f64>>;
    /// Cross-entropy loss and its gradient for one bag.
    fn loss_and_grad(
        &self,
        bag: &TileBag,
        prep: &Self::Prepared,
        scan_seed: u64,
    ) -> Result<(f64, Self)>;
    /// Restores parameter constraints after an update.
    fn project(&mut self) {}
}

/// Stacked HGMamba blocks followed by the attention MIL head.
#[derive(Clone, Debug, PartialEq)]
pub struct HgMambaModel {
    pub cfg: ModelConfig,
    pub layers: Vec<BlockParams>,
    pub head: AbmilParams,
}

#[derive(Clone, Debug)]
pub struct ModelCache {
    blocks: Vec<BlockCache>,
    head: HeadCache,
}

impl HgMambaModel {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(derive_seed(seed, "init", 0));
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let d_in = if l == 0 { cfg.input_dim } else { cfg.d };
                let mut p = BlockParams::init(d_in, cfg.d, cfg.d_state, cfg.conv_width, &mut rng);
                p.ssm.residual = cfg.residual;
                p.mode = cfg.mode;
                p
            })
            .collect();
        let head = AbmilParams::init(cfg.d, cfg.attention_dim, cfg.n_classes, &mut rng);
        Ok(Self {
            cfg: cfg.clone(),
            layers,
            head,
        })
    }

    /// The hypergraph the model runs on: all hyperedges, or only the spatial
    /// pairs in rule-only mode.
    pub fn graph(&self, bag: &TileBag) -> Result<Hypergraph> {
        if bag.dim() != self.cfg.input_dim {
            return Err(Error::dim(
                "model input",
                format!(
                    "bag {} has width {}, model expects {}",
                    bag.id,
                    bag.dim(),
                    self.cfg.input_dim
                ),
            ));
        }
        let hg = build_hypergraph(bag, self.cfg.top_k)?;
        Ok(match self.cfg.mode {
            ConvMode::Hypergraph => hg,
            ConvMode::RuleOnly => hg.restrict(EdgeKind::Rule),
        })
    }

    /// Scan set used by layer `layer` for a given bag-level scan seed.
    pub fn scan_set(&self, hg: &Hypergraph, scan_seed: u64, layer: usize) -> ScanSet {
        build_scan_set_with(
            hg,
            self.cfg.m_sequences,
            derive_seed(scan_seed, "layer", layer as u64),
            self.cfg.t_ratio,
            self.cfg.scan_mix,
        )
    }

    pub fn forward(&self, bag: &TileBag, scan_seed: u64) -> Result<HeadOutput> {
        let hg = self.graph(bag)?;
        self.forward_cached(&hg, &bag.features, scan_seed)
            .map(|(out, _)| out)
    }

    pub fn forward_cached(
        &self,
        hg: &Hypergraph,
        x: &Matrix,
        scan_seed: u64,
    ) -> Result<(HeadOutput, ModelCache)> {
        let mut z = x.clone();
        let mut blocks = Vec::with_capacity(self.layers.len());
        for (l, p) in self.layers.iter().enumerate() {
            let scan = self.scan_set(hg, scan_seed, l);
            let (next, cache) = hgmamba_block_forward_cached(hg, &z, p, &scan)?;
            z = next;
            blocks.push(cache);
        }
        let (out, head) = head_forward(&z, &self.head)?;
        if out.logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model logits".into()));
        }
        Ok((out, ModelCache { blocks, head }))
    }

    /// Gradients of all parameters given `d_loss/d_logits`.
    pub fn backward(&self, cache: &ModelCache, grad_logits: &[f64]) -> Result<Self> {
        let (mut g, head) = head_backward(&cache.head, &self.head, grad_logits)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (p, c) in self.layers.iter().zip(&cache.blocks).rev() {
            let (gx, gp) = block_backward(c, p, &g)?;
            layers.push(gp);
            g = gx;
        }
        layers.reverse();
        Ok(Self {
            cfg: self.cfg.clone(),
            layers,
            head,
        })
    }
}

impl Parameters for HgMambaModel {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.layers.iter().flat_map(|l| l.tensors()).collect();
        out.extend(self.head.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.tensors_mut())
            .collect();
        out.extend(self.head.tensors_mut());
        out
    }

    fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.names().into_iter().map(move |n| format!("layer{i}.{n}")))
            .collect();
        out.extend(self.head.names().into_iter().map(|n| format!("head.{n}")));
        out
    }
}

impl BagModel for HgMambaModel {
    type Prepared = Hypergraph;

    fn n_classes(&self) -> usize {
        self.cfg.n_classes
    }

    fn prepare(&self, bag: &TileBag) -> Result<Hypergraph> {
        self.graph(bag)
    }

    fn logits(&self, bag: &TileBag, hg: &Hypergraph, scan_seed: u64) -> Result<Vec<f64>> {
        Ok(self.forward_cached(hg, &bag.features, scan_seed)?.0.logits)
    }

    fn loss_and_grad(&self, bag: &TileBag, hg: &Hypergraph, scan_seed: u64) -> Result<(f64, Self)> {
        let (out, cache) = self.forward_cached(hg, &bag.features, scan_seed)?;
        let (loss, grad_logits) = cross_entropy(&out.logits, bag.label)?;
        Ok((loss, self.backward(&cache, &grad_logits)?))
    }

    fn project(&mut self) {
        for l in &mut self.layers {
            l.edge_kind_weights
                .as_mut_slice()
                .iter_mut()
                .for_each(|w| *w = w.max(MIN_EDGE_WEIGHT));
        }
    }
}

/// Ablation baseline: mean of the tile features, then a linear classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanPoolModel {
    /// `d_in x C`.
    pub weight: Matrix,
    pub bias: Matrix,
}

impl MeanPoolModel {
    pub fn init(input_dim: usize, n_classes: usize, seed: u64) -> Self {
        let mut rng = Rng::new(derive_seed(seed, "init", 0));
        Self {
            weight: crate::numkit::glorot_uniform(input_dim, n_classes, &mut rng),
            bias: Matrix::zeros(1, n_classes),
        }
    }

    fn pooled(bag: &TileBag) -> Matrix {
        let n = bag.n_tiles() as f64;
        Matrix::row_vector(
            bag.features
                .column_sums()
                .into_iter()
                .map(|s| s / n)
                .collect(),
        )
    }
}

impl Parameters for MeanPoolModel {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn names(&self) -> Vec<String> {
        vec!["weight".into(), "bias".into()]
    }
}

impl BagModel for MeanPoolModel {
    type Prepared = ();

    fn n_classes(&self) -> usize {
        self.weight.cols()
    }

    fn prepare(&self, bag: &TileBag) -> Result<()> {
        if bag.dim() != self.weight.rows() {
            return Err(Error::dim(
                "model input",
                format!(
                    "bag {} has width {}, model expects {}",
                    bag.id,
                    bag.dim(),
                    self.weight.rows()
                ),
            ));
        }
        Ok(())
    }

    fn logits(&self, bag: &TileBag, _: &(), _: u64) -> Result<Vec<f64>> {
        let mut l = matmul(&Self::pooled(bag), &self.weight)?;
        l.add_row_broadcast(self.bias.as_slice());
        Ok(l.as_slice().to_vec())
    }

    fn loss_and_grad(&self, bag: &TileBag, prep: &(), seed: u64) -> Result<(f64, Self)> {
        let logits = self.logits(bag, prep, seed)?;
        let (loss, g) = cross_entropy(&logits, bag.label)?;
        let g = Matrix::row_vector(g);
        Ok((
            loss,
            Self {
                weight: crate::numkit::matmul_tn(&Self::pooled(bag), &g)?,
                bias: g,
            },
        ))
    }
}
