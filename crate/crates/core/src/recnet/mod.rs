//! Recurrent networks: cells, the multi-head VAE and causal-score extraction.

mod cell;
mod model;
mod params;

#[cfg(test)]
mod tests;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use cell::{CellIds, CellKind, LinearIds, StackIds};
pub use model::{
    CompGraph, CompOutput, CrvaeModel, EncoderMode, ForwardOutput, MainGraph, ModelDims, Noise, WindowBatch,
};
pub use params::{Bound, Param, ParamId, ParamStore, Role};

use crate::{Error, Result};

/// `M x M` nonnegative scores; entry `(p, v)` is the strength of `v -> p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalMatrix {
    m: usize,
    scores: Vec<f64>,
}

impl CausalMatrix {
    /// `scores` is row-major with rows indexed by the effect.
    pub fn new(m: usize, scores: Vec<f64>) -> Result<Self> {
        if m == 0 || scores.len() != m * m {
            return Err(Error::contract(alloc::format!(
                "causal matrix needs {m}x{m} scores, got {}",
                scores.len()
            )));
        }
        Ok(CausalMatrix { m, scores })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::contract("causal matrix rows must be square"));
        }
        Self::new(m, rows.concat())
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, effect: usize, cause: usize) -> f64 {
        self.scores[effect * self.m + cause]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.scores.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    /// Binary Granger graph: entries with a strictly positive score.
    pub fn support(&self) -> Vec<bool> {
        self.scores.iter().map(|&s| s > 0.0).collect()
    }

    /// Fraction of entries that are nonzero.
    pub fn density(&self) -> f64 {
        self.support().iter().filter(|&&b| b).count() as f64 / self.scores.len() as f64
    }

    /// Sum of all scores (the group-lasso penalty when the scores are group norms).
    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }
}
