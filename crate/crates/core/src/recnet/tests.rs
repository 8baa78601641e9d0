use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::numcore::{check_gradient, Rng, Tape, Tensor};
use crate::objective::main_loss_graph;

fn dims(m: usize, h: usize, tau: usize, cell: CellKind, layers: usize) -> ModelDims {
    ModelDims {
        series: m,
        hidden: h,
        latent: h,
        layers,
        cell,
        tau,
        encoder_mode: EncoderMode::Unidirectional,
    }
}

fn set(model: &mut CrvaeModel, name: &str, t: Tensor) {
    let id = model.params().find(name).unwrap_or_else(|| panic!("no param {name}"));
    assert_eq!(model.params().get(id).shape(), t.shape(), "{name}");
    *model.params_mut().get_mut(id) = t;
}

fn get(model: &CrvaeModel, name: &str) -> Tensor {
    model.params().get(model.params().find(name).unwrap()).clone()
}

fn zero_all(model: &mut CrvaeModel) {
    for (_, p) in model.params_mut().iter_mut() {
        p.value = Tensor::zeros(p.value.shape());
    }
}

fn random_tensor(rng: &mut Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap()
}

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|r| w.row_slice(r).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Plain-loop recurrence for one layer, independent of the tape.
fn oracle_step(kind: CellKind, w_in: &Tensor, w_h: &Tensor, b: &Tensor, x: &[f64], h: &[f64]) -> Vec<f64> {
    let gi: Vec<f64> = matvec(w_in, x).iter().zip(b.data()).map(|(a, c)| a + c).collect();
    let gh = matvec(w_h, h);
    let n = h.len();
    match kind {
        CellKind::Vanilla => (0..n).map(|i| libm::tanh(gi[i] + gh[i])).collect(),
        CellKind::Gru => (0..n)
            .map(|i| {
                let r = sig(gi[i] + gh[i]);
                let u = sig(gi[n + i] + gh[n + i]);
                let c = libm::tanh(gi[2 * n + i] + r * gh[2 * n + i]);
                (1.0 - u) * c + u * h[i]
            })
            .collect(),
    }
}

fn oracle_encode(model: &CrvaeModel, prefix: &str, seq: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let d = model.dims();
    let mut h = vec![0.0; d.hidden];
    let (wi, wh, b) = (
        get(model, &alloc::format!("{prefix}.rnn.l0.w_in")),
        get(model, &alloc::format!("{prefix}.rnn.l0.w_h")),
        get(model, &alloc::format!("{prefix}.rnn.l0.bias")),
    );
    for r in 0..seq.rows() {
        h = oracle_step(d.cell, &wi, &wh, &b, seq.row_slice(r), &h);
    }
    let lin = |w: &str, bb: &str| -> Vec<f64> {
        matvec(&get(model, w), &h)
            .iter()
            .zip(get(model, bb).data())
            .map(|(a, c)| a + c)
            .collect()
    };
    (
        lin(&alloc::format!("{prefix}.mu.w"), &alloc::format!("{prefix}.mu.b")),
        lin(&alloc::format!("{prefix}.log_var.w"), &alloc::format!("{prefix}.log_var.b")),
    )
}

#[test]
fn zero_weights_give_standard_posterior() {
    let mut model = CrvaeModel::new(dims(3, 4, 2, CellKind::Gru, 1), 1).unwrap();
    zero_all(&mut model);
    let seg = random_tensor(&mut Rng::new(2), 3, 3);
    let (mu, lv) = model.encode(&seg).unwrap();
    assert!(mu.iter().chain(&lv).all(|&x| x == 0.0));
}

#[test]
fn identity_projection_exposes_final_hidden_state() {
    let mut model = CrvaeModel::new(dims(2, 3, 2, CellKind::Vanilla, 1), 3).unwrap();
    set(&mut model, "enc.mu.w", Tensor::identity(3));
    set(&mut model, "enc.mu.b", Tensor::zeros(&[1, 3]));
    let seg = random_tensor(&mut Rng::new(4), 3, 2);
    let (mu, _) = model.encode(&seg).unwrap();
    let mut h = vec![0.0; 3];
    let (wi, wh, b) = (get(&model, "enc.rnn.l0.w_in"), get(&model, "enc.rnn.l0.w_h"), get(&model, "enc.rnn.l0.bias"));
    for r in 0..3 {
        h = oracle_step(CellKind::Vanilla, &wi, &wh, &b, seg.row_slice(r), &h);
    }
    for (a, b) in mu.iter().zip(&h) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn encoder_matches_unrolled_recurrence() {
    for cell in [CellKind::Vanilla, CellKind::Gru] {
        let model = CrvaeModel::new(dims(2, 2, 2, cell, 1), 5).unwrap();
        let seg = random_tensor(&mut Rng::new(6), 3, 2);
        let (mu, lv) = model.encode(&seg).unwrap();
        let (omu, olv) = oracle_encode(&model, "enc", &seg);
        for (a, b) in mu.iter().chain(&lv).zip(omu.iter().chain(&olv)) {
            assert!((a - b).abs() < 1e-13, "{cell:?}");
        }
    }
}

#[test]
fn encode_rejects_wrong_length() {
    let model = CrvaeModel::new(dims(2, 2, 3, CellKind::Gru, 1), 0).unwrap();
    assert!(matches!(model.encode(&Tensor::zeros(&[3, 2])), Err(crate::Error::Contract(_))));
    assert!(model.encode(&Tensor::zeros(&[4, 2])).is_ok());
}

#[test]
fn decode_constant_output() {
    let mut model = CrvaeModel::new(dims(3, 4, 2, CellKind::Gru, 2), 7).unwrap();
    zero_all(&mut model);
    for p in 0..3 {
        set(&mut model, &alloc::format!("head{p}.out.b"), Tensor::scalar(0.7));
    }
    let teacher = random_tensor(&mut Rng::new(1), 3, 3);
    let out = model.decode(&[0.3, -1.0, 2.0, 0.1], &teacher).unwrap();
    assert_eq!(out.shape(), &[3, 3]);
    assert!(out.data().iter().all(|&x| x == 0.7));
}

#[test]
fn decode_scalar_vanilla_substitution() {
    let mut model = CrvaeModel::new(dims(1, 1, 1, CellKind::Vanilla, 1), 0).unwrap();
    zero_all(&mut model);
    set(&mut model, "head0.rnn.l0.w_in", Tensor::scalar(1.0));
    set(&mut model, "head0.out.w", Tensor::scalar(2.0));
    let teacher = Tensor::matrix(2, 1, vec![9.0, 0.5]).unwrap();
    let out = model.decode(&[0.4], &teacher).unwrap();
    // First step sees the zero vector and s = tanh(0) = 0.
    assert_eq!(out.get(0, 0), 0.0);
    assert!((out.get(1, 0) - 0.92424).abs() < 1e-5);
    assert!((out.get(1, 0) - 2.0 * libm::tanh(0.5)).abs() < 1e-15);
}

#[test]
fn decode_rejects_wrong_latent() {
    let model = CrvaeModel::new(dims(2, 3, 1, CellKind::Gru, 1), 0).unwrap();
    assert!(matches!(model.decode(&[0.0; 2], &Tensor::zeros(&[2, 2])), Err(crate::Error::Contract(_))));
}

#[test]
fn masked_column_makes_head_blind_to_series() {
    let (m, p, v) = (4, 2, 1);
    let mut model = CrvaeModel::new(dims(m, 5, 3, CellKind::Gru, 2), 8).unwrap();
    let mut mask = vec![true; m * m];
    mask[p * m + v] = false;
    model.set_mask(mask).unwrap();
    crate::optim::apply_mask(&mut model);
    let mut rng = Rng::new(9);
    let teacher = random_tensor(&mut rng, 4, m);
    let z: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
    let base = model.decode(&z, &teacher).unwrap();
    for _ in 0..5 {
        let mut t2 = teacher.clone();
        for r in 0..4 {
            t2.set(r, v, rng.normal() * 10.0);
        }
        let out = model.decode(&z, &t2).unwrap();
        assert_eq!(base.column(p), out.column(p));
        assert_ne!(base.column(0), out.column(0));
    }
}

#[test]
fn unidirectional_encoder_ignores_decoder_half() {
    let d = dims(3, 4, 3, CellKind::Gru, 2);
    let model = CrvaeModel::new(d, 10).unwrap();
    let mut rng = Rng::new(11);
    let w = random_tensor(&mut rng, d.window_len(), 3);
    let a = model.forward(&w, Noise::Zero).unwrap();
    for row in d.tau + 1..d.window_len() {
        let mut w2 = w.clone();
        w2.set(row, rng.below(3), 5.0);
        let b = model.forward(&w2, Noise::Zero).unwrap();
        assert_eq!(a.mu, b.mu);
        assert_eq!(a.log_var, b.log_var);
    }
    let mut w3 = w.clone();
    w3.set(0, 0, 5.0);
    assert_ne!(model.forward(&w3, Noise::Zero).unwrap().mu, a.mu);
}

#[test]
fn overlap_encoder_reads_the_decoder_half() {
    let mut d = dims(2, 3, 2, CellKind::Gru, 1);
    d.encoder_mode = EncoderMode::Overlap;
    let model = CrvaeModel::new(d, 12).unwrap();
    let w = random_tensor(&mut Rng::new(13), d.window_len(), 2);
    let a = model.forward(&w, Noise::Zero).unwrap();
    let seg = w.slice_rows(d.tau + 1, d.tau).unwrap();
    assert_eq!(model.encode(&seg).unwrap().0, a.mu);
    let mut w2 = w.clone();
    w2.set(0, 0, 3.0);
    assert_eq!(model.forward(&w2, Noise::Zero).unwrap().mu, a.mu);
}

#[test]
fn forward_contracts() {
    let d = dims(3, 4, 2, CellKind::Gru, 2);
    let model = CrvaeModel::new(d, 14).unwrap();
    let w = random_tensor(&mut Rng::new(15), d.window_len(), 3);
    let det = model.forward(&w, Noise::Zero).unwrap();
    assert_eq!(det.pred.shape(), &[3, 3]);
    assert_eq!(det.z, det.mu);
    let teacher = w.slice_rows(d.tau, d.tau + 1).unwrap();
    assert_eq!(model.decode(&det.mu, &teacher).unwrap(), det.pred);

    let mut r1 = Rng::new(3);
    let mut r2 = Rng::new(3);
    let s1 = model.forward(&w, Noise::Sample(&mut r1)).unwrap();
    let s2 = model.forward(&w, Noise::Sample(&mut r2)).unwrap();
    assert_eq!(s1, s2);
    assert_ne!(s1.z, det.z);
    assert!(model.forward(&w.slice_rows(0, 5).unwrap(), Noise::Zero).is_err());
}

#[test]
fn comp_forward_zero_case_and_oracle() {
    let d = dims(2, 3, 2, CellKind::Vanilla, 1);
    let mut model = CrvaeModel::new(d, 16).unwrap();
    let eps = random_tensor(&mut Rng::new(17), 3, 2);
    let out = model.comp_forward(&eps, Noise::Zero).unwrap();
    assert_eq!(out.eps_hat.shape(), &[3, 2]);

    let (mu, lv) = oracle_encode(&model, "comp.enc", &eps);
    assert_eq!(out.mu.len(), mu.len());
    for (a, b) in out.mu.iter().chain(&out.log_var).zip(mu.iter().chain(&lv)) {
        assert!((a - b).abs() < 1e-13);
    }
    let s0: Vec<f64> = matvec(&get(&model, "comp.latent.w"), &mu)
        .iter()
        .zip(get(&model, "comp.latent.b").data())
        .map(|(a, b)| libm::tanh(a + b))
        .collect();
    let (wi, wh, b) = (
        get(&model, "comp.dec.l0.w_in"),
        get(&model, "comp.dec.l0.w_h"),
        get(&model, "comp.dec.l0.bias"),
    );
    let (wo, bo) = (get(&model, "comp.out.w"), get(&model, "comp.out.b"));
    let mut h = s0;
    let mut x = vec![0.0; 2];
    for r in 0..3 {
        h = oracle_step(CellKind::Vanilla, &wi, &wh, &b, &x, &h);
        let y: Vec<f64> = matvec(&wo, &h).iter().zip(bo.data()).map(|(a, c)| a + c).collect();
        for c in 0..2 {
            assert!((y[c] - out.eps_hat.get(r, c)).abs() < 1e-13);
        }
        x = eps.row_slice(r).to_vec();
    }

    zero_all(&mut model);
    let z = model.comp_forward(&Tensor::zeros(&[3, 2]), Noise::Zero).unwrap();
    assert_eq!(z.eps_hat, Tensor::zeros(&[3, 2]));
}

#[test]
fn causal_matrix_cases() {
    let m = 6;
    let mut model = CrvaeModel::new(dims(m, 4, 1, CellKind::Gru, 2), 18).unwrap();
    for p in 0..m {
        let t = model.head_input(p).clone();
        *model.head_input_mut(p) = Tensor::zeros(t.shape());
    }
    assert!(model.causal_matrix().scores().iter().all(|&s| s == 0.0));
    // Update gate block occupies rows H..2H; column 5 of head 2.
    model.head_input_mut(2).set(4 + 1, 5, 0.3);
    let cm = model.causal_matrix();
    assert_eq!(cm.get(2, 5), 0.3);
    assert_eq!(cm.scores().iter().filter(|&&s| s != 0.0).count(), 1);
}

#[test]
fn causal_matrix_matches_flat_iteration() {
    let m = 4;
    let model = CrvaeModel::new(dims(m, 3, 1, CellKind::Gru, 2), 19).unwrap();
    let cm = model.causal_matrix();
    for p in 0..m {
        let w = get(&model, &alloc::format!("head{p}.rnn.l0.w_in"));
        let mut acc = vec![0.0; m];
        for (k, x) in w.data().iter().enumerate() {
            acc[k % m] += x * x;
        }
        for v in 0..m {
            assert!((cm.get(p, v) - libm::sqrt(acc[v])).abs() < 1e-15);
        }
    }
    // Deeper layers never contribute.
    let mut m2 = model.clone();
    set(&mut m2, "head0.rnn.l1.w_in", Tensor::zeros(&[9, 3]));
    assert_eq!(m2.causal_matrix(), cm);
}

fn grad_check_model(cell: CellKind, layers: usize) -> f64 {
    let d = dims(2, 3, 1, cell, layers);
    let model = CrvaeModel::new(d, 20).unwrap();
    let mut rng = Rng::new(21);
    let windows: Vec<Tensor> = (0..2).map(|_| random_tensor(&mut rng, d.window_len(), 2)).collect();
    let batch = WindowBatch::new(&windows, &d).unwrap();
    let params: Vec<Tensor> = model.params().iter().map(|(_, p)| p.value.clone()).collect();
    check_gradient(
        |tape: &mut Tape, vars| {
            let b = Bound::from_vars(vars.to_vec());
            let mut r = Rng::new(22);
            Ok(main_loss_graph(&model, tape, &b, &batch, Noise::Sample(&mut r))?.loss)
        },
        &params,
        1e-5,
    )
    .unwrap()
}

#[test]
fn model_loss_gradients_match_finite_differences() {
    for (cell, layers) in [(CellKind::Gru, 1), (CellKind::Gru, 2), (CellKind::Vanilla, 1)] {
        let err = grad_check_model(cell, layers);
        assert!(err < 1e-4, "{cell:?} x{layers}: {err}");
    }
}

#[test]
fn gru_cell_step_gradients() {
    let mut store = ParamStore::new();
    let mut rng = Rng::new(23);
    let cell = CellIds::new(&mut store, "c", CellKind::Gru, 3, 4, Role::Main, Role::Main, &mut rng);
    let x = random_tensor(&mut rng, 2, 3);
    let h = random_tensor(&mut rng, 2, 4);
    let mut params: Vec<Tensor> = store.iter().map(|(_, p)| p.value.clone()).collect();
    params.push(x);
    params.push(h);
    let err = check_gradient(
        |tape: &mut Tape, vars| {
            let b = Bound::from_vars(vars[..3].to_vec());
            let out = cell.step(tape, &b, vars[3], vars[4])?;
            let sq = tape.square(out)?;
            tape.sum(sq)
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}
