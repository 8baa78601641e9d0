use crvae_core::datagen::Scaler;
use crvae_core::eval::{auroc_flat, mmd, MMD_BANDWIDTHS};
use crvae_core::objective::kl_standard_normal;
use crvae_core::optim::{block_soft_threshold, ista_step};
use crvae_core::tebase::{gram, renyi_entropy};
use crvae_core::Tensor;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

fn frob(a: &Tensor, b: &Tensor) -> f64 {
    a.sub(b).unwrap().norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn soft_threshold_is_nonexpansive(a in matrix(4, 3), b in matrix(4, 3), t in 0.0f64..4.0) {
        let (mut pa, mut pb) = (a.clone(), b.clone());
        block_soft_threshold(&mut pa, t);
        block_soft_threshold(&mut pb, t);
        prop_assert!(frob(&pa, &pb) <= frob(&a, &b) + 1e-12);
    }

    #[test]
    fn soft_threshold_shrinks_each_column(a in matrix(5, 4), t in 0.0f64..4.0) {
        let mut p = a.clone();
        block_soft_threshold(&mut p, t);
        for c in 0..a.cols() {
            let before: f64 = a.column(c).iter().map(|x| x * x).sum::<f64>().sqrt();
            let after: f64 = p.column(c).iter().map(|x| x * x).sum::<f64>().sqrt();
            let expect = (before - t).max(0.0);
            prop_assert!((after - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn ista_with_zero_penalty_is_a_gradient_step(w in matrix(3, 3), g in matrix(3, 3), gamma in 0.01f64..1.0) {
        let mut a = w.clone();
        ista_step(&mut a, &g, gamma, 0.0).unwrap();
        let b = w.sub(&g.scale(gamma)).unwrap();
        prop_assert!(frob(&a, &b) < 1e-12);
    }

    #[test]
    fn kl_is_nonnegative(mu in prop::collection::vec(-5.0f64..5.0, 1..8), seed in any::<u64>()) {
        let lv: Vec<f64> = mu.iter().enumerate().map(|(i, _)| ((seed >> (i % 60)) & 7) as f64 - 3.5).collect();
        prop_assert!(kl_standard_normal(&mu, &lv).unwrap() >= 0.0);
    }

    #[test]
    fn kl_vanishes_only_at_the_prior(mu in -2.0f64..2.0, lv in -2.0f64..2.0) {
        let kl = kl_standard_normal(&[mu], &[lv]).unwrap();
        if mu == 0.0 && lv == 0.0 {
            prop_assert_eq!(kl, 0.0);
        } else {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn auroc_is_rank_invariant(
        scores in prop::collection::vec(-10.0f64..10.0, 6..30),
        bits in any::<u64>(),
    ) {
        let mut labels: Vec<bool> = (0..scores.len()).map(|i| bits >> (i % 64) & 1 == 1).collect();
        labels[0] = true;
        labels[1] = false;
        let a = auroc_flat(&scores, &labels).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() * 7.0 - 2.0).collect();
        let b = auroc_flat(&warped, &labels).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let c = auroc_flat(&scores, &flipped).unwrap();
        prop_assert!((a + c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mmd_is_symmetric_and_zero_on_self(a in matrix(6, 3), b in matrix(6, 3)) {
        let ab = mmd(&a, &b, &MMD_BANDWIDTHS).unwrap();
        let ba = mmd(&b, &a, &MMD_BANDWIDTHS).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(mmd(&a, &a, &MMD_BANDWIDTHS).unwrap().abs() < 1e-12);
        prop_assert!(ab >= -1e-12);
    }

    #[test]
    fn mmd_ignores_row_order(a in matrix(6, 2), b in matrix(6, 2), shift in 1usize..6) {
        let rows: Vec<Vec<f64>> = (0..6).map(|r| a.row_slice((r + shift) % 6).to_vec()).collect();
        let p = Tensor::from_rows(&rows).unwrap();
        let x = mmd(&a, &b, &MMD_BANDWIDTHS).unwrap();
        let y = mmd(&p, &b, &MMD_BANDWIDTHS).unwrap();
        prop_assert!((x - y).abs() < 1e-12);
    }

    #[test]
    fn renyi_entropy_is_bounded(x in matrix(8, 2), sigma in 0.05f64..3.0, alpha in prop::sample::select(vec![0.5, 1.01, 2.0, 3.0])) {
        let g = gram(&x, sigma).unwrap();
        let h = renyi_entropy(&g, alpha).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= 3.0 + 1e-9);
    }

    #[test]
    fn gram_is_exactly_symmetric_with_unit_trace(x in matrix(7, 3), sigma in 0.05f64..3.0) {
        let g = gram(&x, sigma).unwrap();
        let mut tr = 0.0;
        for i in 0..7 {
            tr += g.get(i, i);
            for j in 0..7 {
                prop_assert_eq!(g.get(i, j), g.get(j, i));
            }
        }
        prop_assert!((tr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_is_homogeneous_in_scale(x in matrix(6, 2), sigma in 0.1f64..2.0, c in 0.1f64..10.0) {
        let a = gram(&x, sigma).unwrap();
        let b = gram(&x.scale(c), sigma * c).unwrap();
        prop_assert!(frob(&a, &b) < 1e-9);
    }

    #[test]
    fn scaler_round_trips(x in matrix(10, 3)) {
        prop_assume!(Scaler::fit(&x).is_ok());
        let s = Scaler::fit(&x).unwrap();
        let y = s.transform(&x).unwrap();
        prop_assert!(y.data().iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
        prop_assert!(frob(&s.inverse(&y).unwrap(), &x) < 1e-9);
    }
}
