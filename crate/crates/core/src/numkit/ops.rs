use crate::error::{Error, Result};
use crate::numkit::{flops, Matrix};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-5;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Max-shifted softmax.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("softmax input at index {i}")));
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    flops::add(flops::softmax(x.len()));
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// `ln Σ exp(x_i)`, stable for large magnitudes.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Saved state for [`layer_norm_backward`].
#[derive(Clone, Debug)]
pub struct LayerNormCache {
    pub normalized: Matrix,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Matrix, gain: &[f64], bias: &[f64], eps: f64) -> Result<Matrix> {
    layer_norm_cached(x, gain, bias, eps).map(|(y, _)| y)
}

/// Row-wise standardization followed by `gain ⊙ x̂ + bias`.
pub fn layer_norm_cached(
    x: &Matrix,
    gain: &[f64],
    bias: &[f64],
    eps: f64,
) -> Result<(Matrix, LayerNormCache)> {
    let (rows, cols) = x.shape();
    if cols == 0 {
        return Err(Error::dim("layer_norm", "zero-length rows"));
    }
    if gain.len() != cols || bias.len() != cols {
        return Err(Error::dim(
            "layer_norm",
            format!("gain {} / bias {} for width {cols}", gain.len(), bias.len()),
        ));
    }
    flops::add(flops::layer_norm(rows, cols));
    let mut normalized = Matrix::zeros(rows, cols);
    let mut out = Matrix::zeros(rows, cols);
    let mut inv_std = Vec::with_capacity(rows);
    let n = cols as f64;
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(is);
        let nrow = normalized.row_mut(r);
        for (o, v) in nrow.iter_mut().zip(row) {
            *o = (v - mean) * is;
        }
        let nrow = normalized.row(r).to_vec();
        for (c, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = gain[c] * nrow[c] + bias[c];
        }
    }
    Ok((
        out,
        LayerNormCache {
            normalized,
            inv_std,
        },
    ))
}

/// Gradients `(d_x, d_gain, d_bias)` of [`layer_norm_cached`].
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gain: &[f64],
    grad_out: &Matrix,
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (rows, cols) = grad_out.shape();
    let n = cols as f64;
    let mut dx = Matrix::zeros(rows, cols);
    let mut dgain = vec![0.0; cols];
    let mut dbias = vec![0.0; cols];
    let mut dxhat = vec![0.0; cols];
    for r in 0..rows {
        let g = grad_out.row(r);
        let xh = cache.normalized.row(r);
        for c in 0..cols {
            dgain[c] += g[c] * xh[c];
            dbias[c] += g[c];
            dxhat[c] = g[c] * gain[c];
        }
        let mean_d = dxhat.iter().sum::<f64>() / n;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
        let is = cache.inv_std[r];
        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = is * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    (dx, dgain, dbias)
}

/// Central-difference gradient of a scalar function, entry by entry.
pub fn finite_difference_gradient(
    mut f: impl FnMut(&Matrix) -> f64,
    x: &Matrix,
    h: f64,
) -> Result<Matrix> {
    let mut probe = x.clone();
    let mut grad = x.zeros_like();
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let plus = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let minus = f(&probe);
        probe.as_mut_slice()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite-difference evaluation at entry {i}"
            )));
        }
        grad.as_mut_slice()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// `max |a - b| / max(1, max |b|)`: relative error against a reference
/// gradient, falling back to absolute error for tiny references.
pub fn relative_error(analytic: &Matrix, reference: &Matrix) -> f64 {
    let scale = reference.max_abs().max(1.0);
    analytic.max_abs_diff(reference) / scale
}
