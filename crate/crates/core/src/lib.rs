//! Fusion graph convolutional networks for semi-supervised node classification.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`]: CSR graphs, dense/sparse matrices and the propagation operators.
//! - [`autodiff`]: a small tape-based reverse-mode engine, Glorot init and Adam.
//! - [`models`]: node-only MLP, GCN, skip-GCN, GraphSAGE mean/max and F-GCN.
//! - [`kernel`]: symbolic and numeric analysis of recursive propagation kernels.
//! - [`pipeline`]: dataset IO, splits, the training loop, metrics and a
//!   stochastic block model generator.

pub mod autodiff;
pub mod error;
pub mod graph;
pub mod kernel;
pub mod models;
pub mod pipeline;

pub use error::{Error, Result};
pub use graph::{DenseMatrix, Graph, SparseMatrix};
