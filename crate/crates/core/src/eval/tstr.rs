use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numcore::{Rng, Stream, Tape, Tensor, Var};
use crate::objective::mse_graph;
use crate::optim::Adam;
use crate::recnet::{Bound, CellKind, LinearIds, ParamStore, Role, StackIds};
use crate::{Error, Result};

/// One-step-ahead GRU predictor settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TstrConfig {
    /// Number of past steps fed to the predictor.
    pub order: usize,
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Fraction of training pairs held out for early stopping.
    pub val_fraction: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TstrConfig {
    fn default() -> Self {
        TstrConfig {
            order: 10,
            hidden: 64,
            layers: 2,
            lr: 1e-4,
            batch_size: 128,
            val_fraction: 0.1,
            max_epochs: 200,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TstrReport {
    /// Mean over series of the per-series root-mean-square one-step error.
    pub rmse: f64,
    pub epochs: usize,
    pub best_val: f64,
}

struct Predictor {
    store: ParamStore,
    stack: StackIds,
    out: LinearIds,
}

impl Predictor {
    fn new(m: usize, cfg: &TstrConfig, rng: &mut Rng) -> Self {
        let mut store = ParamStore::new();
        let stack = StackIds::new(
            &mut store,
            "pred.rnn",
            CellKind::Gru,
            m,
            cfg.hidden,
            cfg.layers,
            Role::Main,
            Role::Main,
            rng,
        );
        let out = LinearIds::new(&mut store, "pred.out", cfg.hidden, m, Role::Main, rng);
        Predictor { store, stack, out }
    }

    fn forward(&self, tape: &mut Tape, b: &Bound, steps: &[Tensor]) -> Result<Var> {
        let inputs: Vec<Var> = steps.iter().map(|s| tape.constant(s.clone())).collect();
        let h0 = tape.constant(Tensor::zeros(&[steps[0].rows(), self.stack.hidden()]));
        let init = alloc::vec![h0; self.stack.depth()];
        let tops = self.stack.run(tape, b, &inputs, &init)?;
        self.out.apply(tape, b, *tops.last().expect("order >= 1"))
    }

    fn predict(&self, steps: &[Tensor]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.store.bind(&mut tape, |_| false);
        let y = self.forward(&mut tape, &b, steps)?;
        Ok(tape.value(y).clone())
    }
}

/// `(start row, segment index)` of every admissible input/target pair.
fn pairs(segments: &[Tensor], order: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (si, s) in segments.iter().enumerate() {
        for t in order..s.rows() {
            out.push((si, t - order));
        }
    }
    out
}

/// Time-major inputs (`order` tensors of `B x M`) and the `B x M` target.
fn gather(segments: &[Tensor], idx: &[(usize, usize)], order: usize) -> (Vec<Tensor>, Tensor) {
    let m = segments[0].cols();
    let b = idx.len();
    let steps = (0..order)
        .map(|k| {
            let mut d = Vec::with_capacity(b * m);
            for &(si, st) in idx {
                d.extend_from_slice(segments[si].row_slice(st + k));
            }
            Tensor::matrix(b, m, d).expect("positive extents")
        })
        .collect();
    let mut d = Vec::with_capacity(b * m);
    for &(si, st) in idx {
        d.extend_from_slice(segments[si].row_slice(st + order));
    }
    (steps, Tensor::matrix(b, m, d).expect("positive extents"))
}

fn mse_of(p: &Predictor, segments: &[Tensor], idx: &[(usize, usize)], order: usize) -> Result<Vec<f64>> {
    // Per-series sum of squared errors, evaluated in chunks.
    let m = segments[0].cols();
    let mut sse = alloc::vec![0.0; m];
    for chunk in idx.chunks(512) {
        let (steps, target) = gather(segments, chunk, order);
        let pred = p.predict(&steps)?;
        for r in 0..target.rows() {
            for c in 0..m {
                let e = pred.get(r, c) - target.get(r, c);
                sse[c] += e * e;
            }
        }
    }
    Ok(sse)
}

/// Trains the predictor on `train` segments and reports its one-step RMSE on
/// `test`. Train-on-synthetic-test-on-real when `train` is generated data;
/// train-on-real-test-on-real when it is the real series.
pub fn tstr(train: &[Tensor], test: &Tensor, cfg: &TstrConfig, seed: u64) -> Result<TstrReport> {
    let order = cfg.order;
    if order == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::contract("tstr needs order, batch_size and lr positive"));
    }
    let m = test.cols();
    if train.is_empty() || train.iter().any(|s| s.cols() != m) {
        return Err(Error::contract("training segments must share the test series width"));
    }
    if train.iter().any(|s| s.rows() < order + 1) {
        return Err(Error::contract(alloc::format!(
            "every training segment needs at least order + 1 = {} steps",
            order + 1
        )));
    }
    if test.rows() < order + 1 {
        return Err(Error::contract("test series is shorter than order + 1"));
    }
    let mut rng = Rng::stream(seed, Stream::Eval);
    let mut p = Predictor::new(m, cfg, &mut rng);

    let mut all = pairs(train, order);
    rng.shuffle(&mut all);
    let n_val = ((all.len() as f64 * cfg.val_fraction) as usize).clamp(usize::from(all.len() > 1), all.len() - 1);
    let (val, tr) = all.split_at(n_val);
    let val = val.to_vec();
    let mut tr = tr.to_vec();

    let shapes: Vec<Vec<usize>> = p.store.iter().map(|(_, q)| q.value.shape().to_vec()).collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    let mut adam = Adam::new(cfg.lr, &shape_refs);

    let score = |p: &Predictor| -> Result<f64> {
        if val.is_empty() {
            return Ok(0.0);
        }
        Ok(mse_of(p, train, &val, order)?.iter().sum::<f64>() / (val.len() * m) as f64)
    };
    let mut best = score(&p)?;
    let mut best_store = p.store.clone();
    let mut stale = 0;
    let mut epochs = 0;
    for _ in 0..cfg.max_epochs {
        epochs += 1;
        rng.shuffle(&mut tr);
        for chunk in tr.chunks(cfg.batch_size) {
            let (steps, target) = gather(train, chunk, order);
            let mut tape = Tape::new();
            let b = p.store.bind(&mut tape, |_| true);
            let y = p.forward(&mut tape, &b, &steps)?;
            let t = tape.constant(target);
            let loss = mse_graph(&mut tape, &[y], &[t])?;
            if !tape.value(loss).data()[0].is_finite() {
                return Err(Error::UndefinedMetric(alloc::format!(
                    "predictor loss became non-finite in epoch {epochs}"
                )));
            }
            let mut g = tape.backward(loss)?;
            let grads: Vec<Tensor> = p.store.collect_grads(&b, &mut g);
            let mut params: Vec<&mut Tensor> = p.store.iter_mut().map(|(_, q)| &mut q.value).collect();
            adam.step(&mut params, &grads)?;
        }
        let v = score(&p)?;
        if v < best {
            best = v;
            best_store = p.store.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    p.store = best_store;

    let segs = core::slice::from_ref(test);
    let idx = pairs(segs, order);
    let sse = mse_of(&p, segs, &idx, order)?;
    let n = idx.len() as f64;
    let rmse = sse.iter().map(|s| libm::sqrt(s / n)).sum::<f64>() / m as f64;
    Ok(TstrReport {
        rmse,
        epochs,
        best_val: best,
    })
}

/// RMSE of the constant predictor `c` on `test`, in the same per-series
/// averaged form used by [`tstr`].
pub fn constant_rmse(test: &Tensor, c: &[f64], order: usize) -> f64 {
    let m = test.cols();
    let n = (test.rows() - order) as f64;
    (0..m)
        .map(|j| {
            let s: f64 = (order..test.rows()).map(|t| (test.get(t, j) - c[j]) * (test.get(t, j) - c[j])).sum();
            libm::sqrt(s / n)
        })
        .sum::<f64>()
        / m as f64
}
