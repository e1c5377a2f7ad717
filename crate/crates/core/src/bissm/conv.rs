use crate::error::{Error, Result};
use crate::numkit::{flops, silu, silu_grad, Matrix};

use super::prefix_len;

#[derive(Clone, Debug)]
pub struct ConvCache {
    pub input: Matrix,
    pub pre_activation: Matrix,
}

/// Depthwise causal convolution + SiLU over a padded `N x d` sequence.
/// Output position `t` sees inputs `t-w+1 ..= t` (zeros before the start);
/// padding rows come out as zero.
pub fn causal_conv1d(
    seq: &Matrix,
    valid: &[bool],
    kernel: &Matrix,
    bias: &[f64],
) -> Result<Matrix> {
    let len = prefix_len(seq, valid)?;
    let prefix = seq.gather_rows(&(0..len).collect::<Vec<_>>());
    let (out, _) = conv_forward(&prefix, kernel, bias)?;
    let mut padded = Matrix::zeros(seq.rows(), seq.cols());
    for t in 0..len {
        padded.row_mut(t).copy_from_slice(out.row(t));
    }
    Ok(padded)
}

/// Convolution over an all-valid `L x d` block.
pub fn conv_forward(x: &Matrix, kernel: &Matrix, bias: &[f64]) -> Result<(Matrix, ConvCache)> {
    let (len, d) = x.shape();
    let w = kernel.cols();
    if kernel.rows() != d || bias.len() != d || w == 0 {
        return Err(Error::dim(
            "causal_conv1d",
            format!(
                "kernel {}x{}, bias {} for width {d}",
                kernel.rows(),
                kernel.cols(),
                bias.len()
            ),
        ));
    }
    flops::add(flops::causal_conv(len, d, w));
    let mut pre = Matrix::zeros(len, d);
    for t in 0..len {
        for c in 0..d {
            let mut acc = bias[c];
            for j in 0..w {
                // Tap j reads position t - (w-1) + j.
                if let Some(src) = (t + j + 1).checked_sub(w) {
                    acc += kernel[(c, j)] * x[(src, c)];
                }
            }
            pre[(t, c)] = acc;
        }
    }
    let out = pre.map(silu);
    Ok((
        out,
        ConvCache {
            input: x.clone(),
            pre_activation: pre,
        },
    ))
}

/// Gradients `(d_input, d_kernel, d_bias)`.
pub fn conv_backward(
    cache: &ConvCache,
    kernel: &Matrix,
    grad_out: &Matrix,
) -> (Matrix, Matrix, Vec<f64>) {
    let (len, d) = grad_out.shape();
    let w = kernel.cols();
    let mut gx = Matrix::zeros(len, d);
    let mut gk = Matrix::zeros(d, w);
    let mut gb = vec![0.0; d];
    for t in 0..len {
        for c in 0..d {
            let g = grad_out[(t, c)] * silu_grad(cache.pre_activation[(t, c)]);
            if g == 0.0 {
                continue;
            }
            gb[c] += g;
            for j in 0..w {
                if let Some(src) = (t + j + 1).checked_sub(w) {
                    gk[(c, j)] += g * cache.input[(src, c)];
                    gx[(src, c)] += g * kernel[(c, j)];
                }
            }
        }
    }
    (gx, gk, gb)
}
