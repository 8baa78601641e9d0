//! Causal-discovery and generation-quality metrics.

mod auroc;
mod mmd;
mod tstr;

pub use auroc::{auroc, auroc_flat};
pub use mmd::{flatten_sequences, mmd, sample_flat_windows, EVAL_WINDOW, MMD_BANDWIDTHS};
pub use tstr::{constant_rmse, tstr, TstrConfig, TstrReport};
