//! Gated attention MIL pooling, a linear classifier and cross-entropy.

use crate::error::{Error, Result};
use crate::numkit::{
    flops, glorot_uniform, log_sum_exp, matmul, matmul_nt, matmul_tn, sigmoid, softmax, Matrix,
    Parameters, Rng,
};

pub const DEFAULT_ATTENTION_DIM: usize = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct AbmilParams {
    /// `d x h`, tanh branch.
    pub v_proj: Matrix,
    /// `d x h`, sigmoid gate.
    pub u_proj: Matrix,
    /// `1 x h`.
    pub w_att: Matrix,
    /// `d x C`.
    pub cls_weight: Matrix,
    /// `1 x C`.
    pub cls_bias: Matrix,
}

impl AbmilParams {
    pub fn init(d: usize, hidden: usize, n_classes: usize, rng: &mut Rng) -> Self {
        assert!(
            hidden >= 1 && n_classes >= 2,
            "need h >= 1 and at least two classes"
        );
        Self {
            v_proj: glorot_uniform(d, hidden, rng),
            u_proj: glorot_uniform(d, hidden, rng),
            w_att: glorot_uniform(1, hidden, rng),
            cls_weight: glorot_uniform(d, n_classes, rng),
            cls_bias: Matrix::zeros(1, n_classes),
        }
    }

    pub fn width(&self) -> usize {
        self.v_proj.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.cls_weight.cols()
    }
}

impl Parameters for AbmilParams {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![
            &self.v_proj,
            &self.u_proj,
            &self.w_att,
            &self.cls_weight,
            &self.cls_bias,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.v_proj,
            &mut self.u_proj,
            &mut self.w_att,
            &mut self.cls_weight,
            &mut self.cls_bias,
        ]
    }

    fn names(&self) -> Vec<String> {
        ["v_proj", "u_proj", "w_att", "cls_weight", "cls_bias"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct PoolCache {
    z: Matrix,
    tanh_branch: Matrix,
    gate: Matrix,
    attention: Vec<f64>,
}

/// Returns `(bag embedding, attention weights)`.
pub fn abmil_pool(z: &Matrix, p: &AbmilParams) -> Result<(Vec<f64>, Vec<f64>)> {
    abmil_pool_cached(z, p).map(|(bag, cache)| (bag, cache.attention))
}

pub fn abmil_pool_cached(z: &Matrix, p: &AbmilParams) -> Result<(Vec<f64>, PoolCache)> {
    let (n, d) = z.shape();
    if n == 0 {
        return Err(Error::Structural(
            "attention pooling over an empty bag".into(),
        ));
    }
    if d != p.width() {
        return Err(Error::dim(
            "abmil_pool",
            format!("instance width {d} vs head width {}", p.width()),
        ));
    }
    let h = p.w_att.cols();
    let tanh_branch = matmul(z, &p.v_proj)?.map(f64::tanh);
    let gate = matmul(z, &p.u_proj)?.map(sigmoid);
    flops::add(flops::elementwise(3 * n * h));
    let mut gated = tanh_branch.clone();
    for (a, g) in gated.as_mut_slice().iter_mut().zip(gate.as_slice()) {
        *a *= g;
    }
    let scores = matmul_nt(&gated, &p.w_att)?;
    let attention = softmax(scores.as_slice())?;
    let bag = matmul(&Matrix::row_vector(attention.clone()), z)?;
    Ok((
        bag.as_slice().to_vec(),
        PoolCache {
            z: z.clone(),
            tanh_branch,
            gate,
            attention,
        },
    ))
}

/// Gradients of the pooling: `(d_instances, d_v_proj, d_u_proj, d_w_att)`.
pub fn abmil_pool_backward(
    cache: &PoolCache,
    p: &AbmilParams,
    grad_bag: &[f64],
) -> Result<(Matrix, Matrix, Matrix, Matrix)> {
    let z = &cache.z;
    let (n, d) = z.shape();
    if grad_bag.len() != d {
        return Err(Error::dim(
            "abmil_pool_backward",
            format!("{} vs width {d}", grad_bag.len()),
        ));
    }
    let alpha = &cache.attention;
    let mut gz = Matrix::zeros(n, d);
    let d_alpha: Vec<f64> = (0..n)
        .map(|i| z.row(i).iter().zip(grad_bag).map(|(a, b)| a * b).sum())
        .collect();
    for i in 0..n {
        for (o, g) in gz.row_mut(i).iter_mut().zip(grad_bag) {
            *o = alpha[i] * g;
        }
    }
    let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
    let d_score = Matrix::from_fn(n, 1, |i, _| alpha[i] * (d_alpha[i] - mean));

    let h = p.w_att.cols();
    let gated = Matrix::from_fn(n, h, |i, k| cache.tanh_branch[(i, k)] * cache.gate[(i, k)]);
    let g_w = matmul_tn(&d_score, &gated)?;
    let d_gated = matmul(&d_score, &p.w_att)?;
    let d_vpre = Matrix::from_fn(n, h, |i, k| {
        let a = cache.tanh_branch[(i, k)];
        d_gated[(i, k)] * cache.gate[(i, k)] * (1.0 - a * a)
    });
    let d_upre = Matrix::from_fn(n, h, |i, k| {
        let g = cache.gate[(i, k)];
        d_gated[(i, k)] * cache.tanh_branch[(i, k)] * g * (1.0 - g)
    });
    let g_v = matmul_tn(z, &d_vpre)?;
    let g_u = matmul_tn(z, &d_upre)?;
    gz.add_assign(&matmul_nt(&d_vpre, &p.v_proj)?);
    gz.add_assign(&matmul_nt(&d_upre, &p.u_proj)?);
    Ok((gz, g_v, g_u, g_w))
}

pub fn classify(bag: &[f64], p: &AbmilParams) -> Result<Vec<f64>> {
    if bag.len() != p.cls_weight.rows() {
        return Err(Error::dim(
            "classify",
            format!(
                "bag width {} vs head {}x{}",
                bag.len(),
                p.cls_weight.rows(),
                p.cls_weight.cols()
            ),
        ));
    }
    let mut logits = matmul(&Matrix::row_vector(bag.to_vec()), &p.cls_weight)?;
    logits.add_row_broadcast(p.cls_bias.as_slice());
    flops::add(flops::elementwise(logits.len()));
    Ok(logits.as_slice().to_vec())
}

/// `(loss, d_loss/d_logits)`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Usage(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let loss = (log_sum_exp(logits) - logits[label]).max(0.0);
    let mut grad = softmax(logits)?;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Result of running the head on one bag.
#[derive(Clone, Debug)]
pub struct HeadOutput {
    pub logits: Vec<f64>,
    pub attention: Vec<f64>,
    pub bag: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct HeadCache {
    pool: PoolCache,
    bag: Vec<f64>,
}

pub fn head_forward(z: &Matrix, p: &AbmilParams) -> Result<(HeadOutput, HeadCache)> {
    let (bag, pool) = abmil_pool_cached(z, p)?;
    let logits = classify(&bag, p)?;
    Ok((
        HeadOutput {
            logits,
            attention: pool.attention.clone(),
            bag: bag.clone(),
        },
        HeadCache { pool, bag },
    ))
}

/// Gradients `(d_instances, d_params)` given `d_loss/d_logits`.
pub fn head_backward(
    cache: &HeadCache,
    p: &AbmilParams,
    grad_logits: &[f64],
) -> Result<(Matrix, AbmilParams)> {
    let g_logits = Matrix::row_vector(grad_logits.to_vec());
    let bag = Matrix::row_vector(cache.bag.clone());
    let g_cls = matmul_tn(&bag, &g_logits)?;
    let g_bag = matmul_nt(&g_logits, &p.cls_weight)?;
    let (gz, g_v, g_u, g_w) = abmil_pool_backward(&cache.pool, p, g_bag.as_slice())?;
    Ok((
        gz,
        AbmilParams {
            v_proj: g_v,
            u_proj: g_u,
            w_att: g_w,
            cls_weight: g_cls,
            cls_bias: g_logits,
        },
    ))
}
