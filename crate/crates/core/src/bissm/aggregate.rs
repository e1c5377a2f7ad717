use crate::error::{Error, Result};
use crate::numkit::{flops, Matrix};
use crate::scanner::ScanSet;

/// Per-node mean of its tokens across all sequences. `outputs[m]` holds the
/// tokens of sequence `m` by position; nodes that appear in no sequence take
/// their `fallback` row.
pub fn aggregate_tokens(outputs: &[Matrix], scan: &ScanSet, fallback: &Matrix) -> Result<Matrix> {
    let n = scan.n_nodes();
    if outputs.len() != scan.sequences.len() {
        return Err(Error::Structural(format!(
            "{} outputs for {} sequences",
            outputs.len(),
            scan.sequences.len()
        )));
    }
    if fallback.rows() != n {
        return Err(Error::Structural(format!(
            "fallback has {} rows for {n} nodes",
            fallback.rows()
        )));
    }
    let d = fallback.cols();
    for (m, out) in outputs.iter().enumerate() {
        if out.cols() != d || out.rows() < scan.sequences[m].valid_len() {
            return Err(Error::Structural(format!(
                "output {m} is {}x{}, sequence needs {}x{d}",
                out.rows(),
                out.cols(),
                scan.sequences[m].valid_len()
            )));
        }
    }
    flops::add(flops::aggregate(scan.total_tokens(), n, d));
    let mut z = Matrix::zeros(n, d);
    for (t, sites) in scan.membership.iter().enumerate() {
        let row = z.row_mut(t);
        if sites.is_empty() {
            row.copy_from_slice(fallback.row(t));
            continue;
        }
        for &(m, p) in sites {
            if scan.sequences[m].order[p] != t {
                return Err(Error::Structural(format!(
                    "membership of node {t} points at ({m}, {p}) holding node {}",
                    scan.sequences[m].order[p]
                )));
            }
            for (o, v) in row.iter_mut().zip(outputs[m].row(p)) {
                *o += v;
            }
        }
        let inv = 1.0 / sites.len() as f64;
        row.iter_mut().for_each(|o| *o *= inv);
    }
    Ok(z)
}

/// Adjoint of [`aggregate_tokens`]: token gradients per sequence (`valid_len x
/// d` each) and the gradient reaching the fallback rows.
pub fn aggregate_backward(grad: &Matrix, scan: &ScanSet) -> (Vec<Matrix>, Matrix) {
    let d = grad.cols();
    let mut tokens: Vec<Matrix> = scan
        .sequences
        .iter()
        .map(|s| Matrix::zeros(s.valid_len(), d))
        .collect();
    let mut fallback = Matrix::zeros(grad.rows(), d);
    for (t, sites) in scan.membership.iter().enumerate() {
        if sites.is_empty() {
            fallback.row_mut(t).copy_from_slice(grad.row(t));
            continue;
        }
        let share = 1.0 / sites.len() as f64;
        for &(m, p) in sites {
            for (o, g) in tokens[m].row_mut(p).iter_mut().zip(grad.row(t)) {
                *o += share * g;
            }
        }
    }
    (tokens, fallback)
}
