//! Network tomography laboratory.
//!
//! Simulates networks under four path-performance metric families (additive,
//! multiplicative, min/max bottleneck, boolean), computes exact optimal path
//! metrics as ground truth, and implements DeepNT: a path-centric attention
//! GNN trained jointly with a connectivity- and sparsity-constrained
//! adjacency matrix by extrapolated proximal gradient. An evaluation harness
//! provides masked-NMF / pair-MLP / mean baselines, prediction and topology
//! metrics, and experiment orchestration.

pub mod eig;
pub mod error;
pub mod eval;
pub mod graph;
pub mod learn;
pub mod nn;
pub mod paths;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
