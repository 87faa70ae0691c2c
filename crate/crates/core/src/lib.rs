//! Graph sequential network: message passing over graphs whose nodes are
//! variable-length sequences of feature vectors.
//!
//! Message passing uses BiDAF-style co-attention between a node and each of
//! its neighbors, so node states stay sequences end to end and token-level
//! (sequential labeling) heads remain possible after graph reasoning. The
//! crate also carries an early-summarization GCN baseline, span /
//! supporting-node / graph-classification heads, a deterministic trainer,
//! and generators for desk-scale multi-hop benchmark tasks.

pub mod coattn;
pub mod graph;
pub mod heads;
pub mod layers;
pub mod params;
pub mod tensor;

pub use tensor::{Matrix, Tape, Tensor, TensorError};
