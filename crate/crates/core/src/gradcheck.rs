//! Finite-difference verification of every hand-written backward pass.

use crate::bissm::{
    aggregate_backward, aggregate_tokens, bi_ssm_block, bi_ssm_block_backward, block_backward,
    conv_backward, conv_forward, hgmamba_block_forward, hgmamba_block_forward_cached,
    scan_backward, scan_forward, BiSsmParams, BlockParams, Residual, SsmParams,
};
use crate::error::Result;
use crate::hgconv::{
    hgconv_backward, hgconv_forward, hgconv_forward_cached, ConvMode, HgConvParams,
};
use crate::hypergraph::{build_hypergraph, TileBag};
use crate::milhead::{cross_entropy, head_backward, head_forward, AbmilParams};
use crate::numkit::{finite_difference_gradient, relative_error, Matrix, Parameters, Rng, FD_STEP};
use crate::pipeline::{BagModel, HgMambaModel, ModelConfig};
use crate::scanner::build_scan_set;

/// Relative error bound every check must meet.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckSize {
    Tiny,
    Small,
}

impl CheckSize {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tiny" => Some(CheckSize::Tiny),
            "small" => Some(CheckSize::Small),
            _ => None,
        }
    }

    /// `(grid rows, grid cols, width, state dim, sequences, layers)`.
    fn dims(self) -> (i32, i32, usize, usize, usize, usize) {
        match self {
            CheckSize::Tiny => (2, 3, 8, 4, 2, 1),
            CheckSize::Small => (3, 4, 10, 6, 4, 2),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub rel_err: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.rel_err < TOLERANCE
    }
}

fn check(
    name: impl Into<String>,
    analytic: &Matrix,
    at: &Matrix,
    f: impl Fn(&Matrix) -> f64,
) -> Result<GradCheck> {
    let fd = finite_difference_gradient(f, at, FD_STEP)?;
    Ok(GradCheck {
        name: name.into(),
        rel_err: relative_error(analytic, &fd),
    })
}

fn dot(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum()
}

fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

fn grid_bag(rows: i32, cols: i32, d: usize, rng: &mut Rng) -> TileBag {
    let coords: Vec<(i32, i32)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .collect();
    let n = coords.len();
    TileBag::new("check", coords, random(n, d, rng), 1).expect("grid bag is valid")
}

/// Checks each parameter tensor of `p` (except slots in `skip`) against
/// finite differences of `loss`.
fn check_params<P: Parameters>(
    prefix: &str,
    p: &P,
    grads: &P,
    skip: &[usize],
    loss: impl Fn(&P) -> f64,
) -> Result<Vec<GradCheck>> {
    let names = p.names();
    let mut out = Vec::new();
    for slot in (0..names.len()).filter(|s| !skip.contains(s)) {
        out.push(check(
            format!("{prefix}.{}", names[slot]),
            grads.tensors()[slot],
            p.tensors()[slot],
            |t| {
                let mut q = p.clone();
                *q.tensors_mut()[slot] = t.clone();
                loss(&q)
            },
        )?);
    }
    Ok(out)
}

/// Runs every check at the given size; deterministic for a fixed `seed`.
pub fn run_gradcheck(size: CheckSize, seed: u64) -> Result<Vec<GradCheck>> {
    let (rows, cols, d, ds, m, layers) = size.dims();
    let mut rng = Rng::new(seed);
    let n = (rows * cols) as usize;
    let mut out = Vec::new();

    // Hypergraph convolution (edge weights excluded: degrees are frozen).
    let bag = grid_bag(rows, cols, d, &mut rng);
    let hg = build_hypergraph(&bag, 3)?;
    let hp = HgConvParams::init(d, d, hg.n_edges(), &mut rng);
    let probe = random(n, d, &mut rng);
    let (_, cache) = hgconv_forward_cached(&hg, &bag.features, &hp, ConvMode::Hypergraph)?;
    let g = hgconv_backward(&cache, &hp, &probe)?;
    let f = |x: &Matrix, w: &Matrix| {
        let p = HgConvParams {
            weight: w.clone(),
            edge_weights: hp.edge_weights.clone(),
        };
        dot(
            &hgconv_forward(&hg, x, &p, ConvMode::Hypergraph).unwrap(),
            &probe,
        )
    };
    out.push(check("hgconv.input", &g.x, &bag.features, |x| {
        f(x, &hp.weight)
    })?);
    out.push(check("hgconv.weight", &g.weight, &hp.weight, |w| {
        f(&bag.features, w)
    })?);

    // Causal convolution.
    let sp = SsmParams::init(d, ds, 4, &mut rng);
    let x = random(n, d, &mut rng);
    let probe = random(n, d, &mut rng);
    let conv = |x: &Matrix, k: &Matrix, b: &Matrix| {
        dot(&conv_forward(x, k, b.as_slice()).unwrap().0, &probe)
    };
    let (_, cc) = conv_forward(&x, &sp.conv_kernel, sp.conv_bias.as_slice())?;
    let (gx, gk, gb) = conv_backward(&cc, &sp.conv_kernel, &probe);
    out.push(check("conv.input", &gx, &x, |x| {
        conv(x, &sp.conv_kernel, &sp.conv_bias)
    })?);
    out.push(check("conv.kernel", &gk, &sp.conv_kernel, |k| {
        conv(&x, k, &sp.conv_bias)
    })?);
    out.push(check(
        "conv.bias",
        &Matrix::row_vector(gb),
        &sp.conv_bias,
        |b| conv(&x, &sp.conv_kernel, b),
    )?);

    // Selective scan: input and the scan's own parameters.
    let (_, sc) = scan_forward(&x, &sp)?;
    let sg = scan_backward(&sc, &sp, &probe)?;
    out.push(check("scan.input", &sg.input, &x, |x| {
        dot(&scan_forward(x, &sp).unwrap().0, &probe)
    })?);
    let mut scan_grads = sp.zeros_like();
    scan_grads.a_log = sg.a_log;
    scan_grads.delta_weight = Matrix::row_vector(sg.delta_weight);
    scan_grads.delta_bias = Matrix::row_vector(sg.delta_bias);
    scan_grads.b_weight = sg.b_weight;
    scan_grads.b_bias = Matrix::row_vector(sg.b_bias);
    scan_grads.c_weight = sg.c_weight;
    scan_grads.c_bias = Matrix::row_vector(sg.c_bias);
    scan_grads.d_skip = Matrix::row_vector(sg.d_skip);
    out.extend(check_params(
        "scan",
        &sp,
        &scan_grads,
        &[0, 1, 10, 11],
        |q| dot(&scan_forward(&x, q).unwrap().0, &probe),
    )?);

    // Bi-SSM under both residual readings.
    for residual in [Residual::WithInput, Residual::BranchesOnly] {
        let mut bp = BiSsmParams::init(d, ds, 4, &mut rng);
        bp.residual = residual;
        let (_, bc) = bi_ssm_block(&x, &bp)?;
        let (gx, gp) = bi_ssm_block_backward(&bc, &bp, &probe)?;
        let tag = format!("bi_ssm[{}]", residual.name());
        out.push(check(format!("{tag}.input"), &gx, &x, |x| {
            dot(&bi_ssm_block(x, &bp).unwrap().0, &probe)
        })?);
        out.extend(check_params(&tag, &bp, &gp, &[], |q| {
            dot(&bi_ssm_block(&x, q).unwrap().0, &probe)
        })?);
    }

    // Aggregation.
    let scan = build_scan_set(&hg, m, seed, 0.7);
    let tokens: Vec<Matrix> = scan
        .sequences
        .iter()
        .map(|s| random(s.valid_len(), d, &mut rng))
        .collect();
    let fallback = random(n, d, &mut rng);
    let probe = random(n, d, &mut rng);
    let (gt, gf) = aggregate_backward(&probe, &scan);
    for (i, t) in tokens.iter().enumerate() {
        out.push(check(format!("aggregate.tokens{i}"), &gt[i], t, |v| {
            let mut ts = tokens.clone();
            ts[i] = v.clone();
            dot(&aggregate_tokens(&ts, &scan, &fallback).unwrap(), &probe)
        })?);
    }
    out.push(check("aggregate.fallback", &gf, &fallback, |f| {
        dot(&aggregate_tokens(&tokens, &scan, f).unwrap(), &probe)
    })?);

    // Full block (edge-kind weights excluded: degrees are frozen).
    let blk = BlockParams::init(d, d, ds, 4, &mut rng);
    let (_, bc) = hgmamba_block_forward_cached(&hg, &bag.features, &blk, &scan)?;
    let (gx, gp) = block_backward(&bc, &blk, &probe)?;
    out.push(check("block.input", &gx, &bag.features, |x| {
        dot(&hgmamba_block_forward(&hg, x, &blk, &scan).unwrap(), &probe)
    })?);
    out.extend(check_params("block", &blk, &gp, &[1], |q| {
        dot(
            &hgmamba_block_forward(&hg, &bag.features, q, &scan).unwrap(),
            &probe,
        )
    })?);

    // Attention head and loss.
    let head = AbmilParams::init(d, d, 3, &mut rng);
    let z = random(n, d, &mut rng);
    let head_loss = |z: &Matrix, p: &AbmilParams| {
        let (o, _) = head_forward(z, p).unwrap();
        cross_entropy(&o.logits, 2).unwrap().0
    };
    let (o, hc) = head_forward(&z, &head)?;
    let (_, gl) = cross_entropy(&o.logits, 2)?;
    let (gz, gh) = head_backward(&hc, &head, &gl)?;
    out.push(check("head.input", &gz, &z, |z| head_loss(z, &head))?);
    out.extend(check_params("head", &head, &gh, &[], |q| head_loss(&z, q))?);

    // End to end.
    let cfg = ModelConfig {
        input_dim: d,
        d,
        n_layers: layers,
        d_state: ds,
        m_sequences: m,
        attention_dim: d,
        ..ModelConfig::default()
    };
    let model = HgMambaModel::init(&cfg, seed)?;
    let prepared = model.prepare(&bag)?;
    let (_, gm) = model.loss_and_grad(&bag, &prepared, seed)?;
    let names = model.names();
    let frozen: Vec<usize> = (0..names.len())
        .filter(|&i| names[i].ends_with("edge_kind_weights"))
        .collect();
    out.extend(check_params("model", &model, &gm, &frozen, |q| {
        q.loss_and_grad(&bag, &prepared, seed).unwrap().0
    })?);
    Ok(out)
}
