//! Causal recurrent variational autoencoder.
//!
//! Learns a Granger causal adjacency matrix from a multivariate time series by
//! training a multi-head recurrent VAE whose decoder input weights are
//! group-sparsified with proximal gradient steps, then generates synthetic
//! series from the trained model. The crate also carries the synthetic
//! benchmark systems, evaluation metrics (AUROC, MMD, TSTR) and a
//! matrix-based Rényi transfer-entropy baseline.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `std` feature to let
//! the matrix kernels pick SIMD paths at runtime.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_op_in_unsafe_fn)]

extern crate alloc;

pub mod datagen;
mod error;
pub mod eval;
pub mod numcore;
pub mod objective;
pub mod optim;
pub mod pipeline;
pub mod recnet;
pub mod tebase;

pub use error::{Error, Result};
pub use numcore::{Rng, Tape, Tensor, Var};
pub use recnet::{CausalMatrix, CellKind, CrvaeModel, ModelDims};
