use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::params::{Bound, ParamId, ParamStore, Role};
use crate::numcore::{Rng, Tape, Var};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Vanilla,
    #[default]
    Gru,
}

impl CellKind {
    /// Number of gate blocks stacked in the weight matrices.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Vanilla => 1,
            CellKind::Gru => 3,
        }
    }
}

/// One recurrent layer.
///
/// Gate blocks are stacked row-wise: `w_in` is `(gates*H) x input`,
/// `w_h` is `(gates*H) x H` and `bias` is `1 x (gates*H)`. For the GRU the
/// block order is reset, update, candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellIds {
    pub kind: CellKind,
    pub input: usize,
    pub hidden: usize,
    pub w_in: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
}

impl CellIds {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        kind: CellKind,
        input: usize,
        hidden: usize,
        input_role: Role,
        role: Role,
        rng: &mut Rng,
    ) -> Self {
        let rows = kind.gates() * hidden;
        let bound = 1.0 / libm::sqrt(hidden as f64);
        let w_in = store.add_uniform(format!("{prefix}.w_in"), rows, input, bound, input_role, rng);
        let w_h = store.add_uniform(format!("{prefix}.w_h"), rows, hidden, bound, role, rng);
        let bias = store.add_uniform(format!("{prefix}.bias"), 1, rows, bound, role, rng);
        CellIds {
            kind,
            input,
            hidden,
            w_in,
            w_h,
            bias,
        }
    }

    /// One recurrence step: `x` is `B x input`, `h` is `B x H`.
    pub fn step(&self, tape: &mut Tape, b: &Bound, x: Var, h: Var) -> Result<Var> {
        let hs = self.hidden;
        let gi = tape.linear(x, b.var(self.w_in))?;
        let gi = tape.add_row(gi, b.var(self.bias))?;
        let gh = tape.linear(h, b.var(self.w_h))?;
        match self.kind {
            CellKind::Vanilla => {
                let pre = tape.add(gi, gh)?;
                tape.tanh(pre)
            }
            CellKind::Gru => {
                let ri = tape.cols(gi, 0, hs)?;
                let rh = tape.cols(gh, 0, hs)?;
                let r = tape.add(ri, rh)?;
                let r = tape.sigmoid(r)?;
                let ui = tape.cols(gi, hs, hs)?;
                let uh = tape.cols(gh, hs, hs)?;
                let u = tape.add(ui, uh)?;
                let u = tape.sigmoid(u)?;
                let ni = tape.cols(gi, 2 * hs, hs)?;
                let nh = tape.cols(gh, 2 * hs, hs)?;
                let nh = tape.mul(r, nh)?;
                let n = tape.add(ni, nh)?;
                let n = tape.tanh(n)?;
                // h' = (1 - u) * n + u * h = n + u * (h - n)
                let d = tape.sub(h, n)?;
                let ud = tape.mul(u, d)?;
                tape.add(n, ud)
            }
        }
    }
}

/// Stacked recurrent layers; layer 0 reads the external input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackIds {
    pub layers: Vec<CellIds>,
}

impl StackIds {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        kind: CellKind,
        input: usize,
        hidden: usize,
        layers: usize,
        input_role: Role,
        role: Role,
        rng: &mut Rng,
    ) -> Self {
        let layers = (0..layers.max(1))
            .map(|l| {
                let (inp, irole) = if l == 0 { (input, input_role) } else { (hidden, role) };
                CellIds::new(store, &format!("{prefix}.l{l}"), kind, inp, hidden, irole, role, rng)
            })
            .collect();
        StackIds { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Advances every layer by one step, updating `state` in place and
    /// returning the top layer's new hidden state.
    pub fn step(&self, tape: &mut Tape, b: &Bound, x: Var, state: &mut [Var]) -> Result<Var> {
        let mut inp = x;
        for (cell, h) in self.layers.iter().zip(state.iter_mut()) {
            *h = cell.step(tape, b, inp, *h)?;
            inp = *h;
        }
        Ok(inp)
    }

    /// Runs the stack over `inputs` from `initial` (one var per layer) and
    /// returns the top-layer hidden state after every step.
    pub fn run(&self, tape: &mut Tape, b: &Bound, inputs: &[Var], initial: &[Var]) -> Result<Vec<Var>> {
        let mut state = initial.to_vec();
        inputs.iter().map(|&x| self.step(tape, b, x, &mut state)).collect()
    }
}

/// Dense output layer `x * W^T + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearIds {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearIds {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, output: usize, role: Role, rng: &mut Rng) -> Self {
        let bound = 1.0 / libm::sqrt(input as f64);
        let w = store.add_uniform(format!("{prefix}.w"), output, input, bound, role, rng);
        let b = store.add_uniform(format!("{prefix}.b"), 1, output, bound, role, rng);
        LinearIds { w, b }
    }

    pub fn apply(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let y = tape.linear(x, bound.var(self.w))?;
        tape.add_row(y, bound.var(self.b))
    }
}
