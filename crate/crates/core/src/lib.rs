//! Hypergraph state-space multiple-instance learning over tile bags.
//!
//! A bag of tile features is turned into a hypergraph (spatial pair edges plus
//! feature-similarity hyperedges), refined by hypergraph convolution, flattened
//! into node sequences by randomized traversals, processed by a bidirectional
//! selective state-space model, averaged back onto nodes and pooled by gated
//! attention into a bag-level prediction.

pub mod error;
pub mod numkit;

pub use error::{Error, Result};
pub mod bissm;
pub mod cli;
pub mod cost;
pub mod datakit;
pub mod gradcheck;
pub mod hgconv;
pub mod hypergraph;
pub mod milhead;
pub mod pipeline;
pub mod scanner;
