use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::window::{admissible_windows, sample_windows};
use crate::datagen::{normalize_minmax, Dataset};
use crate::numcore::{Rng, Stream, Tape, Tensor};
use crate::objective::{comp_loss_graph, group_penalty, main_loss_graph};
use crate::optim::{apply_mask, ista_step, sgd_step, zero_masked_columns};
use crate::recnet::{CrvaeModel, Noise, Role, WindowBatch};
use crate::{Error, Result};

/// Where a model is in the two-stage schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Initial,
    Sparsify,
    Pruned,
    Refine,
}

/// Per-epoch averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub penalty: f64,
    pub comp: f64,
    /// Fraction of nonzero causal groups after the epoch.
    pub density: f64,
}

impl EpochRecord {
    /// The smooth objective `recon + kl`.
    pub fn smooth(&self) -> f64 {
        self.recon + self.kl
    }
}

/// The three random streams consumed by training.
#[derive(Debug, Clone)]
pub struct TrainRngs {
    pub batches: Rng,
    pub reparam: Rng,
    pub comp: Rng,
}

impl TrainRngs {
    pub fn new(seed: u64) -> Self {
        TrainRngs {
            batches: Rng::stream(seed, Stream::Batches),
            reparam: Rng::stream(seed, Stream::Reparam),
            comp: Rng::stream(seed, Stream::CompReparam),
        }
    }
}

/// Result of [`freeze_and_prune`].
#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport {
    pub kept: usize,
    pub total: usize,
    /// Set when every group was zero: the model predicts without any input.
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Sparsify,
    Refine,
}

struct StepLosses {
    recon: f64,
    kl: f64,
    comp: f64,
}

fn epoch_iterations(t: usize, cfg: &TrainConfig) -> usize {
    admissible_windows(t, cfg.tau).div_ceil(cfg.batch_size).max(1)
}

fn clip(grads: &mut [Option<Tensor>], max_norm: Option<f64>) {
    let Some(c) = max_norm else { return };
    let sq: f64 = grads.iter().flatten().map(|g| g.data().iter().map(|x| x * x).sum::<f64>()).sum();
    let norm = libm::sqrt(sq);
    if norm > c {
        let f = c / norm;
        for g in grads.iter_mut().flatten() {
            *g = g.scale(f);
        }
    }
}

/// One minibatch update of the main model and, when enabled, the
/// compensation VAE.
fn train_step(
    model: &mut CrvaeModel,
    data: &Tensor,
    cfg: &TrainConfig,
    rngs: &mut TrainRngs,
    stage: Stage,
    step: usize,
) -> Result<StepLosses> {
    let windows = sample_windows(data, cfg.tau, cfg.batch_size, &mut rngs.batches)?;
    let batch = WindowBatch::new(&windows, model.dims())?;

    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape, Role::is_main);
    let l = main_loss_graph(model, &mut tape, &bound, &batch, Noise::Sample(&mut rngs.reparam))?;
    let loss = tape.value(l.loss).data()[0];
    if !loss.is_finite() {
        return Err(Error::Diverged {
            step,
            last_good: Box::new(model.clone()),
        });
    }
    let recon = tape.value(l.recon).data()[0];
    let kl = tape.value(l.kl).data()[0];
    let mut grads = tape.backward(l.loss)?;

    let residuals: Vec<Tensor> = if cfg.compensation {
        l.preds
            .iter()
            .zip(&batch.target)
            .map(|(&p, t)| t.sub(tape.value(p)))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let m = model.dims().series;
    let mask = model.mask().to_vec();
    let mut sgd: Vec<Option<Tensor>> = Vec::with_capacity(model.params().len());
    let mut heads: Vec<(usize, Tensor)> = Vec::new();
    for (id, p) in model.params().iter() {
        let g = grads.take(bound.var(id));
        match p.role {
            Role::Main => sgd.push(Some(g)),
            Role::HeadInput(h) if stage == Stage::Sparsify => {
                heads.push((h, g));
                sgd.push(None);
            }
            Role::HeadInput(h) => {
                let mut g = g;
                zero_masked_columns(&mut g, &mask[h * m..(h + 1) * m]);
                sgd.push(Some(g));
            }
            Role::Compensation => sgd.push(None),
        }
    }
    drop(tape);
    clip(&mut sgd, cfg.grad_clip);
    for ((_, p), g) in model.params_mut().iter_mut().zip(&sgd) {
        if let Some(g) = g {
            sgd_step(&mut p.value, g, cfg.lr)?;
        }
    }
    for (h, g) in heads {
        ista_step(model.head_input_mut(h), &g, cfg.gamma, cfg.lambda)?;
    }

    let mut comp = 0.0;
    if cfg.compensation {
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape, |r| r == Role::Compensation);
        let c = comp_loss_graph(model, &mut tape, &bound, &residuals, Noise::Sample(&mut rngs.comp))?;
        comp = tape.value(c.loss).data()[0];
        if !comp.is_finite() {
            return Err(Error::Diverged {
                step,
                last_good: Box::new(model.clone()),
            });
        }
        let mut grads = tape.backward(c.loss)?;
        let mut cg: Vec<Option<Tensor>> = model
            .params()
            .iter()
            .map(|(id, p)| (p.role == Role::Compensation).then(|| grads.take(bound.var(id))))
            .collect();
        drop(tape);
        clip(&mut cg, cfg.grad_clip);
        for ((_, p), g) in model.params_mut().iter_mut().zip(&cg) {
            if let Some(g) = g {
                sgd_step(&mut p.value, g, cfg.lr)?;
            }
        }
    }
    Ok(StepLosses { recon, kl, comp })
}

fn run_epochs(
    model: &mut CrvaeModel,
    data: &Tensor,
    cfg: &TrainConfig,
    rngs: &mut TrainRngs,
    history: &mut Vec<EpochRecord>,
    stage: Stage,
) -> Result<()> {
    let (epochs, phase) = match stage {
        Stage::Sparsify => (cfg.epochs_phase1, Phase::Sparsify),
        Stage::Refine => (cfg.epochs_phase2, Phase::Refine),
    };
    let iters = epoch_iterations(data.rows(), cfg);
    let mut in_range = 0;
    let mut step = history.len() * iters;
    for epoch in 0..epochs {
        let (mut recon, mut kl, mut comp) = (0.0, 0.0, 0.0);
        for _ in 0..iters {
            let s = train_step(model, data, cfg, rngs, stage, step)?;
            recon += s.recon;
            kl += s.kl;
            comp += s.comp;
            step += 1;
        }
        let n = iters as f64;
        let density = model.causal_matrix().density();
        history.push(EpochRecord {
            phase,
            epoch,
            recon: recon / n,
            kl: kl / n,
            penalty: group_penalty(model),
            comp: comp / n,
            density,
        });
        if stage == Stage::Sparsify {
            if let Some((lo, hi)) = cfg.sparsity_range {
                if (lo..=hi).contains(&density) {
                    in_range += 1;
                    if in_range >= cfg.patience {
                        break;
                    }
                } else {
                    in_range = 0;
                }
            }
        }
    }
    Ok(())
}

/// Phase 1: SGD on everything except the head input weights, ISTA on those,
/// and compensation updates on detached residuals.
pub fn train_phase1(
    model: &mut CrvaeModel,
    data: &Tensor,
    cfg: &TrainConfig,
    rngs: &mut TrainRngs,
    history: &mut Vec<EpochRecord>,
) -> Result<()> {
    run_epochs(model, data, cfg, rngs, history, Stage::Sparsify)
}

/// Sets the mask to the current nonzero groups and zeroes the rest.
pub fn freeze_and_prune(model: &mut CrvaeModel) -> PruneReport {
    let support = model.causal_matrix().support();
    let kept = support.iter().filter(|&&b| b).count();
    let total = support.len();
    model.set_mask(support).expect("mask has M*M entries");
    apply_mask(model);
    let warning = (kept == 0).then(|| {
        String::from("every causal group is zero; the decoder heads ignore their inputs")
    });
    PruneReport { kept, total, warning }
}

/// Phase 2: plain SGD on all unmasked parameters, no penalty.
pub fn train_phase2(
    model: &mut CrvaeModel,
    data: &Tensor,
    cfg: &TrainConfig,
    rngs: &mut TrainRngs,
    history: &mut Vec<EpochRecord>,
) -> Result<()> {
    run_epochs(model, data, cfg, rngs, history, Stage::Refine)
}

/// A trained model with its schedule record.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CrvaeModel,
    pub history: Vec<EpochRecord>,
    pub phase: Phase,
    pub prune: PruneReport,
}

/// The full two-stage schedule on `dataset`.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if let Err(errs) = cfg.validate() {
        return Err(Error::Contract(errs.join("; ")));
    }
    let (data, scaler) = if cfg.normalize {
        let (d, s) = normalize_minmax(dataset)?;
        (d.observations, Some(s))
    } else {
        (dataset.observations.clone(), None)
    };
    if admissible_windows(data.rows(), cfg.tau) == 0 {
        return Err(Error::contract("dataset is shorter than one training window"));
    }
    let mut model = CrvaeModel::new(cfg.dims(data.cols()), cfg.seed)?;
    model.set_scaler(scaler);
    let mut rngs = TrainRngs::new(cfg.seed);
    let mut history = Vec::new();
    train_phase1(&mut model, &data, cfg, &mut rngs, &mut history)?;
    let prune = freeze_and_prune(&mut model);
    let mut phase = Phase::Pruned;
    if cfg.epochs_phase2 > 0 {
        train_phase2(&mut model, &data, cfg, &mut rngs, &mut history)?;
        phase = Phase::Refine;
    }
    Ok(TrainOutcome {
        model,
        history,
        phase,
        prune,
    })
}
