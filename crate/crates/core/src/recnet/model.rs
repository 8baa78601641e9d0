use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::cell::{CellKind, LinearIds, StackIds};
use super::params::{Bound, ParamStore, Role};
use crate::datagen::Scaler;
use crate::numcore::{Rng, Stream, Tape, Tensor, Var};
use crate::{Error, Result};

/// Which half of a training window the encoder reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    /// `x_{t-2tau-1 : t-tau-1}`: strictly before anything the decoder predicts.
    #[default]
    Unidirectional,
    /// `x_{t-tau : t-1}`: overlaps the prediction half (ablation).
    Overlap,
}

/// Architecture of a [`CrvaeModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Number of series `M`.
    pub series: usize,
    /// Recurrent width `H`.
    pub hidden: usize,
    /// Latent width `H_z`.
    pub latent: usize,
    pub layers: usize,
    pub cell: CellKind,
    /// Model lag `tau`; windows span `2 tau + 2` steps.
    pub tau: usize,
    pub encoder_mode: EncoderMode,
}

impl ModelDims {
    pub fn new(series: usize, hidden: usize, tau: usize) -> Self {
        ModelDims {
            series,
            hidden,
            latent: hidden,
            layers: 1,
            cell: CellKind::Gru,
            tau,
            encoder_mode: EncoderMode::Unidirectional,
        }
    }

    pub fn window_len(&self) -> usize {
        2 * self.tau + 2
    }

    pub fn encoder_len(&self) -> usize {
        match self.encoder_mode {
            EncoderMode::Unidirectional => self.tau + 1,
            EncoderMode::Overlap => self.tau,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.series == 0 || self.hidden == 0 || self.latent == 0 || self.tau == 0 {
            return Err(Error::contract("series, hidden, latent and tau must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct EncoderIds {
    pub stack: StackIds,
    pub mu: LinearIds,
    pub log_var: LinearIds,
}

impl EncoderIds {
    fn new(store: &mut ParamStore, prefix: &str, dims: &ModelDims, role: Role, rng: &mut Rng) -> Self {
        let stack = StackIds::new(
            store,
            &format!("{prefix}.rnn"),
            dims.cell,
            dims.series,
            dims.hidden,
            dims.layers,
            role,
            role,
            rng,
        );
        let mu = LinearIds::new(store, &format!("{prefix}.mu"), dims.hidden, dims.latent, role, rng);
        let log_var = LinearIds::new(store, &format!("{prefix}.log_var"), dims.hidden, dims.latent, role, rng);
        EncoderIds { stack, mu, log_var }
    }

    /// Posterior parameters from the final top-layer hidden state.
    fn run(&self, tape: &mut Tape, b: &Bound, inputs: &[Var]) -> Result<(Var, Var)> {
        let batch = tape.value(inputs[0]).rows();
        let h0 = tape.constant(Tensor::zeros(&[batch, self.stack.hidden()]));
        let init = vec![h0; self.stack.depth()];
        let tops = self.stack.run(tape, b, inputs, &init)?;
        let last = *tops.last().expect("non-empty input");
        let mu = self.mu.apply(tape, b, last)?;
        let log_var = self.log_var.apply(tape, b, last)?;
        Ok((mu, log_var))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct HeadIds {
    pub stack: StackIds,
    pub out: LinearIds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct CompIds {
    pub encoder: EncoderIds,
    pub latent: LinearIds,
    pub decoder: StackIds,
    pub out: LinearIds,
}

/// Source of the reparameterization noise `epsilon ~ N(0, I)`.
pub enum Noise<'a> {
    /// `epsilon = 0`: the latent equals the posterior mean.
    Zero,
    Sample(&'a mut Rng),
}

impl Noise<'_> {
    pub(crate) fn draw(&mut self, rows: usize, cols: usize) -> Option<Tensor> {
        match self {
            Noise::Zero => None,
            Noise::Sample(rng) => {
                let data = (0..rows * cols).map(|_| rng.normal()).collect();
                Some(Tensor::matrix(rows, cols, data).expect("positive extents"))
            }
        }
    }
}

/// A minibatch of training windows split into time-major step tensors
/// (each `B x M`).
#[derive(Debug, Clone)]
pub struct WindowBatch {
    pub encoder: Vec<Tensor>,
    /// Decoder inputs: the zero vector, then `x_{t-tau} .. x_{t-1}`.
    pub teacher: Vec<Tensor>,
    /// Decoder targets `x_{t-tau} .. x_t`.
    pub target: Vec<Tensor>,
}

impl WindowBatch {
    pub fn new(windows: &[Tensor], dims: &ModelDims) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let (tau, m, len) = (dims.tau, dims.series, dims.window_len());
        for w in windows {
            if w.rows() != len || w.cols() != m {
                return Err(Error::contract(format!(
                    "window must be {len} x {m}, got {:?}",
                    w.shape()
                )));
            }
        }
        let gather = |row: usize| -> Tensor {
            let mut data = Vec::with_capacity(windows.len() * m);
            for w in windows {
                data.extend_from_slice(w.row_slice(row));
            }
            Tensor::matrix(windows.len(), m, data).expect("positive extents")
        };
        let enc_rows: Vec<usize> = match dims.encoder_mode {
            EncoderMode::Unidirectional => (0..=tau).collect(),
            EncoderMode::Overlap => (tau + 1..=2 * tau).collect(),
        };
        let encoder = enc_rows.into_iter().map(gather).collect();
        let target: Vec<Tensor> = (tau + 1..=2 * tau + 1).map(gather).collect();
        let mut teacher = Vec::with_capacity(tau + 1);
        teacher.push(Tensor::zeros(&[windows.len(), m]));
        teacher.extend(target[..tau].iter().cloned());
        Ok(WindowBatch {
            encoder,
            teacher,
            target,
        })
    }

    pub fn size(&self) -> usize {
        self.target[0].rows()
    }
}

/// Tape handles produced by [`CrvaeModel::main_graph`].
#[derive(Debug, Clone)]
pub struct MainGraph {
    /// One `B x M` prediction per decoded step.
    pub preds: Vec<Var>,
    pub mu: Var,
    pub log_var: Var,
    pub z: Var,
}

#[derive(Debug, Clone)]
pub struct CompGraph {
    pub recon: Vec<Var>,
    pub mu: Var,
    pub log_var: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `(tau+1) x M` predictions of `x_{t-tau} .. x_t`.
    pub pred: Tensor,
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompOutput {
    pub eps_hat: Tensor,
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

/// Multi-head recurrent VAE with an error-compensation VAE and a prune mask.
///
/// Head `p` predicts series `p` from all `M` series; the Euclidean norm of
/// column `v` of its first-layer input weights is the causal score `v -> p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrvaeModel {
    pub(crate) dims: ModelDims,
    pub(crate) store: ParamStore,
    pub(crate) encoder: EncoderIds,
    pub(crate) latent: LinearIds,
    pub(crate) heads: Vec<HeadIds>,
    pub(crate) comp: CompIds,
    /// Row-major `M x M`; `mask[p * M + v] == false` pins group `(p, v)` at zero.
    pub(crate) mask: Vec<bool>,
    pub(crate) scaler: Option<Scaler>,
}

fn gather_rows(rows: &[Tensor], r: usize) -> Vec<f64> {
    rows.iter().flat_map(|t| t.row_slice(r).iter().copied()).collect()
}

impl CrvaeModel {
    /// Fresh model; main and compensation weights come from independent
    /// streams of `seed`.
    pub fn new(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = Rng::stream(seed, Stream::Init);
        let mut comp_rng = Rng::stream(seed, Stream::CompInit);
        let mut store = ParamStore::new();
        let m = dims.series;

        let encoder = EncoderIds::new(&mut store, "enc", &dims, Role::Main, &mut rng);
        let latent = LinearIds::new(&mut store, "latent", dims.latent, dims.hidden, Role::Main, &mut rng);
        let heads = (0..m)
            .map(|p| HeadIds {
                stack: StackIds::new(
                    &mut store,
                    &format!("head{p}.rnn"),
                    dims.cell,
                    m,
                    dims.hidden,
                    dims.layers,
                    Role::HeadInput(p),
                    Role::Main,
                    &mut rng,
                ),
                out: LinearIds::new(&mut store, &format!("head{p}.out"), dims.hidden, 1, Role::Main, &mut rng),
            })
            .collect();

        let cr = Role::Compensation;
        let comp = CompIds {
            encoder: EncoderIds::new(&mut store, "comp.enc", &dims, cr, &mut comp_rng),
            latent: LinearIds::new(&mut store, "comp.latent", dims.latent, dims.hidden, cr, &mut comp_rng),
            decoder: StackIds::new(
                &mut store,
                "comp.dec",
                dims.cell,
                m,
                dims.hidden,
                dims.layers,
                cr,
                cr,
                &mut comp_rng,
            ),
            out: LinearIds::new(&mut store, "comp.out", dims.hidden, m, cr, &mut comp_rng),
        };

        Ok(CrvaeModel {
            dims,
            store,
            encoder,
            latent,
            heads,
            comp,
            mask: vec![true; m * m],
            scaler: None,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn set_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        let m = self.dims.series;
        if mask.len() != m * m {
            return Err(Error::contract(format!("mask must have {} entries", m * m)));
        }
        self.mask = mask;
        Ok(())
    }

    pub fn scaler(&self) -> Option<&Scaler> {
        self.scaler.as_ref()
    }

    pub fn set_scaler(&mut self, scaler: Option<Scaler>) {
        self.scaler = scaler;
    }

    /// First-layer input weights of head `p`, `(gates*H) x M`.
    pub fn head_input(&self, p: usize) -> &Tensor {
        self.store.get(self.heads[p].stack.layers[0].w_in)
    }

    pub fn head_input_mut(&mut self, p: usize) -> &mut Tensor {
        let id = self.heads[p].stack.layers[0].w_in;
        self.store.get_mut(id)
    }

    /// Causal scores: entry `(p, v)` is the Euclidean norm of column `v`
    /// of head `p`'s first-layer input weights across all gates.
    pub fn causal_matrix(&self) -> super::CausalMatrix {
        let m = self.dims.series;
        let mut scores = vec![0.0; m * m];
        for p in 0..m {
            let w = self.head_input(p);
            for r in 0..w.rows() {
                for (v, x) in w.row_slice(r).iter().enumerate() {
                    scores[p * m + v] += x * x;
                }
            }
        }
        for s in &mut scores {
            *s = libm::sqrt(*s);
        }
        super::CausalMatrix::new(m, scores).expect("square by construction")
    }

    fn constants(tape: &mut Tape, steps: &[Tensor]) -> Vec<Var> {
        steps.iter().map(|s| tape.constant(s.clone())).collect()
    }

    /// `z = mu + exp(log_var / 2) * eps`.
    fn reparameterize(tape: &mut Tape, mu: Var, log_var: Var, noise: &mut Noise<'_>) -> Result<Var> {
        let (rows, cols) = (tape.value(mu).rows(), tape.value(mu).cols());
        match noise.draw(rows, cols) {
            None => Ok(mu),
            Some(eps) => {
                let half = tape.scale(log_var, 0.5)?;
                let sigma = tape.exp(half)?;
                let eps = tape.constant(eps);
                let se = tape.mul(sigma, eps)?;
                tape.add(mu, se)
            }
        }
    }

    /// Initial decoder state `tanh(U_re z + b_re)`, shared by all heads.
    pub(crate) fn initial_state(&self, tape: &mut Tape, b: &Bound, z: Var) -> Result<Var> {
        let pre = self.latent.apply(tape, b, z)?;
        tape.tanh(pre)
    }

    /// Runs every head with teacher forcing from the shared state `s0`.
    pub(crate) fn decode_graph(&self, tape: &mut Tape, b: &Bound, s0: Var, teacher: &[Var]) -> Result<Vec<Var>> {
        let mut per_head: Vec<Vec<Var>> = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let init = vec![s0; head.stack.depth()];
            let tops = head.stack.run(tape, b, teacher, &init)?;
            let outs = tops
                .into_iter()
                .map(|h| head.out.apply(tape, b, h))
                .collect::<Result<Vec<_>>>()?;
            per_head.push(outs);
        }
        (0..teacher.len())
            .map(|t| {
                let cols: Vec<Var> = per_head.iter().map(|o| o[t]).collect();
                tape.concat_cols(&cols)
            })
            .collect()
    }

    /// Encode, reparameterize and decode a batch on `tape`.
    pub fn main_graph(&self, tape: &mut Tape, b: &Bound, batch: &WindowBatch, mut noise: Noise<'_>) -> Result<MainGraph> {
        let enc_in = Self::constants(tape, &batch.encoder);
        let (mu, log_var) = self.encoder.run(tape, b, &enc_in)?;
        let z = Self::reparameterize(tape, mu, log_var, &mut noise)?;
        let s0 = self.initial_state(tape, b, z)?;
        let teacher = Self::constants(tape, &batch.teacher);
        let preds = self.decode_graph(tape, b, s0, &teacher)?;
        Ok(MainGraph { preds, mu, log_var, z })
    }

    /// One compensation decoder step; returns the `B x M` innovation estimate.
    pub(crate) fn comp_step(&self, tape: &mut Tape, b: &Bound, x: Var, state: &mut [Var]) -> Result<Var> {
        let h = self.comp.decoder.step(tape, b, x, state)?;
        self.comp.out.apply(tape, b, h)
    }

    pub(crate) fn comp_initial_state(&self, tape: &mut Tape, b: &Bound, z: Var) -> Result<Var> {
        let pre = self.comp.latent.apply(tape, b, z)?;
        tape.tanh(pre)
    }

    /// Compensation VAE over residual steps (each `B x M`): the encoder reads
    /// the segment and the decoder reconstructs the same segment with
    /// teacher forcing (zero vector first, then the residuals shifted by one).
    pub fn comp_graph(&self, tape: &mut Tape, b: &Bound, residuals: &[Tensor], mut noise: Noise<'_>) -> Result<CompGraph> {
        let first = residuals
            .first()
            .ok_or_else(|| Error::contract("empty residual segment"))?;
        if first.cols() != self.dims.series {
            return Err(Error::contract(format!(
                "residual steps must have {} columns",
                self.dims.series
            )));
        }
        let inputs = Self::constants(tape, residuals);
        let (mu, log_var) = self.comp.encoder.run(tape, b, &inputs)?;
        let z = Self::reparameterize(tape, mu, log_var, &mut noise)?;
        let s0 = self.comp_initial_state(tape, b, z)?;
        let mut state = vec![s0; self.comp.decoder.depth()];
        let mut x = tape.constant(Tensor::zeros(first.shape()));
        let mut recon = Vec::with_capacity(inputs.len());
        for &inp in &inputs {
            recon.push(self.comp_step(tape, b, x, &mut state)?);
            x = inp;
        }
        Ok(CompGraph { recon, mu, log_var })
    }

    fn inference_bind(&self, tape: &mut Tape) -> Bound {
        self.store.bind(tape, |_| false)
    }

    fn steps_from_rows(seq: &Tensor) -> Vec<Tensor> {
        (0..seq.rows()).map(|r| Tensor::row(seq.row_slice(r))).collect()
    }

    /// Posterior `(mu, log_var)` for one encoder segment of
    /// `dims.encoder_len()` observations.
    pub fn encode(&self, segment: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let want = self.dims.encoder_len();
        if segment.rows() != want || segment.cols() != self.dims.series {
            return Err(Error::contract(format!(
                "encoder segment must be {want} x {}, got {:?}",
                self.dims.series,
                segment.shape()
            )));
        }
        let mut tape = Tape::new();
        let b = self.inference_bind(&mut tape);
        let inputs = Self::constants(&mut tape, &Self::steps_from_rows(segment));
        let (mu, lv) = self.encoder.run(&mut tape, &b, &inputs)?;
        Ok((tape.value(mu).data().to_vec(), tape.value(lv).data().to_vec()))
    }

    /// Teacher-forced decoding of one segment `x_{t-tau-1} .. x_{t-1}`; the
    /// first row is replaced by zeros. Returns `(tau+1) x M` predictions.
    pub fn decode(&self, z: &[f64], teacher: &Tensor) -> Result<Tensor> {
        if z.len() != self.dims.latent {
            return Err(Error::contract(format!(
                "latent must have {} entries, got {}",
                self.dims.latent,
                z.len()
            )));
        }
        if teacher.rows() != self.dims.tau + 1 || teacher.cols() != self.dims.series {
            return Err(Error::contract(format!(
                "teacher segment must be {} x {}",
                self.dims.tau + 1,
                self.dims.series
            )));
        }
        let mut tape = Tape::new();
        let b = self.inference_bind(&mut tape);
        let mut steps = Self::steps_from_rows(teacher);
        steps[0] = Tensor::zeros(&[1, self.dims.series]);
        let inputs = Self::constants(&mut tape, &steps);
        let zv = tape.constant(Tensor::row(z));
        let s0 = self.initial_state(&mut tape, &b, zv)?;
        let preds = self.decode_graph(&mut tape, &b, s0, &inputs)?;
        Ok(Tensor::vstack(&preds.iter().map(|&p| tape.value(p).clone()).collect::<Vec<_>>())?)
    }

    /// Full pass over one `(2 tau + 2) x M` window.
    pub fn forward(&self, window: &Tensor, noise: Noise<'_>) -> Result<ForwardOutput> {
        if window.rows() != self.dims.window_len() {
            return Err(Error::contract(format!(
                "window must have {} rows, got {}",
                self.dims.window_len(),
                window.rows()
            )));
        }
        let batch = WindowBatch::new(core::slice::from_ref(window), &self.dims)?;
        let mut tape = Tape::new();
        let b = self.inference_bind(&mut tape);
        let g = self.main_graph(&mut tape, &b, &batch, noise)?;
        let pred = Tensor::vstack(&g.preds.iter().map(|&p| tape.value(p).clone()).collect::<Vec<_>>())?;
        Ok(ForwardOutput {
            pred,
            mu: tape.value(g.mu).data().to_vec(),
            log_var: tape.value(g.log_var).data().to_vec(),
            z: tape.value(g.z).data().to_vec(),
        })
    }

    /// Compensation VAE pass over one `(tau+1) x M` residual segment.
    pub fn comp_forward(&self, eps_segment: &Tensor, noise: Noise<'_>) -> Result<CompOutput> {
        if eps_segment.cols() != self.dims.series {
            return Err(Error::contract("residual segment has the wrong width"));
        }
        if !eps_segment.is_finite() {
            return Err(Error::contract("residuals must be finite"));
        }
        let mut tape = Tape::new();
        let b = self.inference_bind(&mut tape);
        let g = self.comp_graph(&mut tape, &b, &Self::steps_from_rows(eps_segment), noise)?;
        let eps_hat = Tensor::vstack(&g.recon.iter().map(|&p| tape.value(p).clone()).collect::<Vec<_>>())?;
        Ok(CompOutput {
            eps_hat,
            mu: tape.value(g.mu).data().to_vec(),
            log_var: tape.value(g.log_var).data().to_vec(),
        })
    }

    /// Predictions stacked into one `(tau+1) x M` tensor per batch element.
    pub fn unstack(tape: &Tape, steps: &[Var]) -> Vec<Tensor> {
        let vals: Vec<Tensor> = steps.iter().map(|&v| tape.value(v).clone()).collect();
        let b = vals[0].rows();
        let m = vals[0].cols();
        (0..b)
            .map(|r| Tensor::matrix(vals.len(), m, gather_rows(&vals, r)).expect("positive extents"))
            .collect()
    }
}
