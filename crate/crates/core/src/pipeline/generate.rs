use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numcore::{Rng, Stream, Tape, Tensor, Var};
use crate::recnet::CrvaeModel;
use crate::{Error, Result};

/// How the decoders' initial hidden states are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// `s = tanh(U_re z + b_re)` with `z ~ N(0, I)`.
    #[default]
    Projected,
    /// `s ~ N(0, I)` directly.
    DirectDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub init: InitMode,
    /// Add the compensation decoder's outputs to the main rollout.
    pub compensation: bool,
    /// Map the output back through the training scaler when one is stored.
    pub denormalize: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            init: InitMode::Projected,
            compensation: true,
            denormalize: true,
        }
    }
}

fn normal_tensor(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).expect("positive extents")
}

/// `count` independent free-running rollouts of `length` steps, each
/// `length x M`.
///
/// The main decoder starts from a zero input and feeds each output back as
/// its next input. With compensation on, the compensation decoder runs from
/// its own initial state on its own outputs, and the sum of both decoders is
/// what is emitted and fed back to the main decoder.
pub fn generate_many(
    model: &CrvaeModel,
    length: usize,
    count: usize,
    seed: u64,
    opts: &GenerateOptions,
) -> Result<Vec<Tensor>> {
    if length < 1 {
        return Err(Error::contract("generation length must be at least 1"));
    }
    if count < 1 {
        return Err(Error::contract("generation count must be at least 1"));
    }
    let dims = *model.dims();
    let (m, h, hz) = (dims.series, dims.hidden, dims.latent);
    let mut main_rng = Rng::stream(seed, Stream::Generate);
    let mut comp_rng = Rng::stream(seed, Stream::Custom(0x6765_6e63));

    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape, |_| false);
    let base = tape.len();

    let init = |tape: &mut Tape, rng: &mut Rng, comp: bool| -> Result<Tensor> {
        match opts.init {
            InitMode::DirectDraw => Ok(normal_tensor(rng, count, h)),
            InitMode::Projected => {
                let z = tape.constant(normal_tensor(rng, count, hz));
                let s = if comp {
                    model.comp_initial_state(tape, &bound, z)?
                } else {
                    model.initial_state(tape, &bound, z)?
                };
                Ok(tape.value(s).clone())
            }
        }
    };
    let s0 = init(&mut tape, &mut main_rng, false)?;
    let c0 = if opts.compensation {
        Some(init(&mut tape, &mut comp_rng, true)?)
    } else {
        None
    };
    tape.truncate(base);

    let heads = &model.heads;
    let mut head_state: Vec<Vec<Tensor>> = heads.iter().map(|hd| vec![s0.clone(); hd.stack.depth()]).collect();
    let mut comp_state: Option<Vec<Tensor>> = c0.map(|c| vec![c; model.comp.decoder.depth()]);
    let mut x = Tensor::zeros(&[count, m]);
    let mut cx = Tensor::zeros(&[count, m]);
    let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(length * m); count];

    for _ in 0..length {
        let xv = tape.constant(x.clone());
        let mut outs: Vec<Var> = Vec::with_capacity(m);
        for (hd, st) in heads.iter().zip(&mut head_state) {
            let mut vars: Vec<Var> = st.iter().map(|s| tape.constant(s.clone())).collect();
            let top = hd.stack.step(&mut tape, &bound, xv, &mut vars)?;
            outs.push(hd.out.apply(&mut tape, &bound, top)?);
            for (s, v) in st.iter_mut().zip(&vars) {
                *s = tape.value(*v).clone();
            }
        }
        let pred = tape.concat_cols(&outs)?;
        let mut y = tape.value(pred).clone();
        if let Some(cs) = comp_state.as_mut() {
            let cxv = tape.constant(cx.clone());
            let mut vars: Vec<Var> = cs.iter().map(|s| tape.constant(s.clone())).collect();
            let e = model.comp_step(&mut tape, &bound, cxv, &mut vars)?;
            let ev = tape.value(e).clone();
            for (s, v) in cs.iter_mut().zip(&vars) {
                *s = tape.value(*v).clone();
            }
            y = y.add(&ev)?;
            cx = ev;
        }
        tape.truncate(base);
        if !y.is_finite() {
            return Err(Error::Generation(alloc::string::String::from(
                "rollout produced non-finite values",
            )));
        }
        for (r, out) in rows.iter_mut().enumerate() {
            out.extend_from_slice(y.row_slice(r));
        }
        x = y;
    }

    rows.into_iter()
        .map(|data| {
            let t = Tensor::matrix(length, m, data)?;
            match (opts.denormalize, model.scaler()) {
                (true, Some(s)) => s.inverse(&t),
                _ => Ok(t),
            }
        })
        .collect()
}

/// A single rollout of `length x M`.
pub fn generate(model: &CrvaeModel, length: usize, seed: u64, opts: &GenerateOptions) -> Result<Tensor> {
    Ok(generate_many(model, length, 1, seed, opts)?.remove(0))
}
