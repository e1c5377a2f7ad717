//! Bidirectional selective state-space processing of scanned sequences, the
//! token → node aggregator, and the composed HGMamba block.

mod aggregate;
mod bidir;
mod block;
mod conv;
mod params;
mod scan;

pub use aggregate::{aggregate_backward, aggregate_tokens};
pub use bidir::{bi_ssm_block, bi_ssm_block_backward, bi_ssm_forward, BiSsmCache};
pub use block::{
    block_backward, hgmamba_block_forward, hgmamba_block_forward_cached, BlockCache, BlockParams,
};
pub use conv::{causal_conv1d, conv_backward, conv_forward, ConvCache};
pub use params::{
    BiSsmParams, Residual, SsmParams, DEFAULT_CONV_WIDTH, DEFAULT_STATE_DIM, INITIAL_DELTA,
};
pub use scan::{scan_backward, scan_forward, selective_scan, state_matrix, ScanCache, ScanGrads};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Length of the valid prefix of a padded sequence; errors if the mask does
/// not match the sequence or is not a prefix.
pub(crate) fn prefix_len(seq: &Matrix, valid: &[bool]) -> Result<usize> {
    if valid.len() != seq.rows() {
        return Err(Error::dim(
            "sequence mask",
            format!("{} mask entries for {} rows", valid.len(), seq.rows()),
        ));
    }
    let len = valid.iter().take_while(|&&v| v).count();
    if valid[len..].iter().any(|&v| v) {
        return Err(Error::Structural(
            "valid positions must form a prefix".into(),
        ));
    }
    Ok(len)
}
