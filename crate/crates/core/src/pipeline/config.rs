use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::recnet::{CellKind, EncoderMode, ModelDims};

/// Every hyperparameter of a training run.
///
/// Missing fields take their defaults when deserialized, so a config file
/// only needs the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Model lag; training windows span `2 tau + 2` steps.
    pub tau: usize,
    /// Group-lasso weight.
    pub lambda: f64,
    /// ISTA step size for the head input weights.
    pub gamma: f64,
    /// SGD learning rate for every other parameter.
    pub lr: f64,
    pub batch_size: usize,
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    pub hidden: usize,
    /// Latent width; `None` means equal to `hidden`.
    pub latent: Option<usize>,
    pub layers: usize,
    pub cell: CellKind,
    pub seed: u64,
    pub encoder_mode: EncoderMode,
    pub compensation: bool,
    /// Early exit from phase 1 once the fraction of nonzero groups stays in
    /// `[lo, hi]` for `patience` consecutive epochs.
    pub sparsity_range: Option<(f64, f64)>,
    pub patience: usize,
    /// Rescale the training data to `[0, 1]` per column before training;
    /// generation maps back to the original units.
    pub normalize: bool,
    /// Global gradient-norm ceiling for the SGD parameters.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 10,
            lambda: 0.01,
            gamma: 0.5,
            lr: 0.5,
            batch_size: 256,
            epochs_phase1: 60,
            epochs_phase2: 20,
            hidden: 64,
            latent: None,
            layers: 2,
            cell: CellKind::Gru,
            seed: 0,
            encoder_mode: EncoderMode::Unidirectional,
            compensation: true,
            sparsity_range: None,
            patience: 5,
            normalize: false,
            grad_clip: Some(5.0),
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, in field order.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.tau < 1 {
            errs.push(String::from("tau must be at least 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            errs.push(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            errs.push(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            errs.push(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size < 1 {
            errs.push(String::from("batch_size must be at least 1"));
        }
        if self.hidden < 1 {
            errs.push(String::from("hidden must be at least 1"));
        }
        if self.latent == Some(0) {
            errs.push(String::from("latent must be at least 1"));
        }
        if self.layers < 1 {
            errs.push(String::from("layers must be at least 1"));
        }
        if let Some((lo, hi)) = self.sparsity_range {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                errs.push(format!("sparsity_range must satisfy 0 <= lo <= hi <= 1, got ({lo}, {hi})"));
            }
        }
        if self.patience < 1 {
            errs.push(String::from("patience must be at least 1"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                errs.push(format!("grad_clip must be positive, got {c}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    pub fn dims(&self, series: usize) -> ModelDims {
        ModelDims {
            series,
            hidden: self.hidden,
            latent: self.latent.unwrap_or(self.hidden),
            layers: self.layers,
            cell: self.cell,
            tau: self.tau,
            encoder_mode: self.encoder_mode,
        }
    }
}
