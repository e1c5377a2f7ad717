use crate::error::{Error, Result};
use crate::numkit::{
    flops, layer_norm_backward, layer_norm_cached, matmul, matmul_nt, matmul_tn, LayerNormCache,
    Matrix, Parameters, LAYER_NORM_EPS,
};

use super::conv::{conv_backward, conv_forward, ConvCache};
use super::scan::{scan_backward, scan_forward, ScanCache};
use super::{prefix_len, BiSsmParams, Residual, SsmParams};

/// conv → scan → norm for one direction.
#[derive(Clone, Debug)]
struct BranchCache {
    conv: ConvCache,
    scan: ScanCache,
    norm: LayerNormCache,
}

fn branch_forward(x: &Matrix, p: &SsmParams) -> Result<(Matrix, BranchCache)> {
    let (u, conv) = conv_forward(x, &p.conv_kernel, p.conv_bias.as_slice())?;
    let (y, scan) = scan_forward(&u, p)?;
    let (z, norm) = layer_norm_cached(
        &y,
        p.norm_gain.as_slice(),
        p.norm_bias.as_slice(),
        LAYER_NORM_EPS,
    )?;
    Ok((z, BranchCache { conv, scan, norm }))
}

fn branch_backward(
    cache: &BranchCache,
    p: &SsmParams,
    grad: &Matrix,
) -> Result<(Matrix, SsmParams)> {
    let (gy, g_gain, g_nbias) = layer_norm_backward(&cache.norm, p.norm_gain.as_slice(), grad);
    let sg = scan_backward(&cache.scan, p, &gy)?;
    let (gx, g_kernel, g_cbias) = conv_backward(&cache.conv, &p.conv_kernel, &sg.input);
    let grads = SsmParams {
        conv_kernel: g_kernel,
        conv_bias: Matrix::row_vector(g_cbias),
        a_log: sg.a_log,
        delta_weight: Matrix::row_vector(sg.delta_weight),
        delta_bias: Matrix::row_vector(sg.delta_bias),
        b_weight: sg.b_weight,
        b_bias: Matrix::row_vector(sg.b_bias),
        c_weight: sg.c_weight,
        c_bias: Matrix::row_vector(sg.c_bias),
        d_skip: Matrix::row_vector(sg.d_skip),
        norm_gain: Matrix::row_vector(g_gain),
        norm_bias: Matrix::row_vector(g_nbias),
    };
    Ok((gx, grads))
}

fn reversed(x: &Matrix) -> Matrix {
    let idx: Vec<usize> = (0..x.rows()).rev().collect();
    x.gather_rows(&idx)
}

#[derive(Clone, Debug)]
pub struct BiSsmCache {
    forward: BranchCache,
    backward: BranchCache,
    merged: Matrix,
    merge_norm: LayerNormCache,
}

/// Bi-SSM over an all-valid `L x d` block.
pub fn bi_ssm_block(x: &Matrix, p: &BiSsmParams) -> Result<(Matrix, BiSsmCache)> {
    let (len, d) = x.shape();
    if d != p.width() {
        return Err(Error::dim(
            "bi_ssm",
            format!("sequence width {d} vs parameter width {}", p.width()),
        ));
    }
    let (z_f, forward) = branch_forward(x, &p.forward)?;
    let (z_b_rev, backward) = branch_forward(&reversed(x), &p.backward)?;
    let mut merged = z_f;
    merged.add_assign(&reversed(&z_b_rev));
    flops::add(flops::elementwise(len * d));
    if p.residual == Residual::WithInput {
        merged.add_assign(x);
        flops::add(flops::elementwise(len * d));
    }
    let mut lin = matmul(&merged, &p.merge_weight)?;
    lin.add_row_broadcast(p.merge_bias.as_slice());
    flops::add(flops::elementwise(len * d));
    let (out, merge_norm) = layer_norm_cached(
        &lin,
        p.merge_gain.as_slice(),
        p.merge_norm_bias.as_slice(),
        LAYER_NORM_EPS,
    )?;
    Ok((
        out,
        BiSsmCache {
            forward,
            backward,
            merged,
            merge_norm,
        },
    ))
}

/// Gradients `(d_input, d_params)` of [`bi_ssm_block`].
pub fn bi_ssm_block_backward(
    cache: &BiSsmCache,
    p: &BiSsmParams,
    grad_out: &Matrix,
) -> Result<(Matrix, BiSsmParams)> {
    let (g_lin, g_mgain, g_mnbias) =
        layer_norm_backward(&cache.merge_norm, p.merge_gain.as_slice(), grad_out);
    let g_mweight = matmul_tn(&cache.merged, &g_lin)?;
    let g_mbias = g_lin.column_sums();
    let g_merged = matmul_nt(&g_lin, &p.merge_weight)?;

    let (mut gx, g_fwd) = branch_backward(&cache.forward, &p.forward, &g_merged)?;
    let (gx_rev, g_bwd) = branch_backward(&cache.backward, &p.backward, &reversed(&g_merged))?;
    gx.add_assign(&reversed(&gx_rev));
    if p.residual == Residual::WithInput {
        gx.add_assign(&g_merged);
    }
    let grads = BiSsmParams {
        forward: g_fwd,
        backward: g_bwd,
        merge_weight: g_mweight,
        merge_bias: Matrix::row_vector(g_mbias),
        merge_gain: Matrix::row_vector(g_mgain),
        merge_norm_bias: Matrix::row_vector(g_mnbias),
        residual: p.residual,
    };
    debug_assert_eq!(grads.n_scalars(), p.n_scalars());
    Ok((gx, grads))
}

/// Bi-SSM over a padded `N x d` sequence. The backward branch reverses only
/// the valid prefix; padding rows of the output are zero.
pub fn bi_ssm_forward(seq: &Matrix, valid: &[bool], p: &BiSsmParams) -> Result<Matrix> {
    let len = prefix_len(seq, valid)?;
    let prefix = seq.gather_rows(&(0..len).collect::<Vec<_>>());
    let (out, _) = bi_ssm_block(&prefix, p)?;
    let mut padded = Matrix::zeros(seq.rows(), seq.cols());
    for t in 0..len {
        padded.row_mut(t).copy_from_slice(out.row(t));
    }
    Ok(padded)
}
