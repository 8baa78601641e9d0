use std::fs;

use crvae::files::{
    load_adjacency, load_checkpoint, load_csv, load_scores, load_train_config, save_adjacency, save_checkpoint,
    save_csv, save_scores,
};
use crvae::Error;
use crvae_core::datagen::{gen_henon, henon_truth, HenonConfig};
use crvae_core::pipeline::{train, Checkpoint, TrainConfig};
use crvae_core::recnet::CausalMatrix;
use crvae_core::{Rng, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip_is_exact(
        rows in 1usize..12,
        cols in 1usize..5,
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::new(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.normal() * 10f64.powi(rng.below(7) as i32 - 3)).collect();
        let x = Tensor::matrix(rows, cols, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        save_csv(&p, &x).unwrap();
        prop_assert_eq!(load_csv(&p).unwrap(), x);
    }
}

#[test]
fn headerless_and_commented_files_load() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "# produced elsewhere\n1, 2\n3,4\n").unwrap();
    let x = load_csv(&p).unwrap();
    assert_eq!(x.shape(), &[2, 2]);
    assert_eq!(x.data(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn malformed_tables_name_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "1,2\n3\n").unwrap();
    let e = load_csv(&p).unwrap_err().to_string();
    assert!(e.contains("row 2"), "{e}");
    fs::write(&p, "1,2\n3,inf\n").unwrap();
    let e = load_csv(&p).unwrap_err().to_string();
    assert!(e.contains("row 2, column 2"), "{e}");
    fs::write(&p, "a,b\n").unwrap();
    assert!(load_csv(&p).is_err());
    assert!(matches!(load_csv(dir.path().join("missing.csv")), Err(Error::Io { .. })));
}

#[test]
fn adjacency_and_scores_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.csv");
    let a = henon_truth(6);
    save_adjacency(&p, &a).unwrap();
    assert_eq!(load_adjacency(&p).unwrap(), a);
    assert_eq!(fs::read_to_string(&p).unwrap().lines().next(), Some("1,0,0,0,0,0"));

    let s = CausalMatrix::new(2, vec![0.5, 0.0, 1e-300, 3.25]).unwrap();
    save_scores(&p, &s).unwrap();
    assert_eq!(load_scores(&p).unwrap(), s);

    fs::write(&p, "1,0\n0,2\n").unwrap();
    assert!(load_adjacency(&p).unwrap_err().to_string().contains("row 2, column 2"));
    fs::write(&p, "1,0,1\n0,1,1\n").unwrap();
    assert!(load_adjacency(&p).is_err());
}

#[test]
fn checkpoint_files_round_trip() {
    let d = gen_henon(
        &HenonConfig {
            k: 2,
            length: 80,
            ..Default::default()
        },
        &mut Rng::new(0),
    )
    .unwrap();
    let cfg = TrainConfig {
        tau: 2,
        hidden: 3,
        layers: 1,
        batch_size: 8,
        epochs_phase1: 1,
        epochs_phase2: 1,
        ..Default::default()
    };
    let out = train(&d, &cfg).unwrap();
    let c = Checkpoint {
        config: cfg,
        model: out.model,
        phase: out.phase,
        history: out.history,
    };
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.ckpt");
    save_checkpoint(&p, &c).unwrap();
    assert_eq!(load_checkpoint(&p).unwrap(), c);
    let bytes = fs::read(&p).unwrap();
    fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_checkpoint(&p), Err(Error::Format { .. })));
}

#[test]
fn config_errors_are_listed_together() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    fs::write(&p, r#"{"tau": 0, "lambda": -1, "hidden": 0, "batch_size": 0}"#).unwrap();
    let Err(Error::Config(errs)) = load_train_config(&p) else {
        panic!("expected config errors");
    };
    assert_eq!(errs.len(), 4, "{errs:?}");
    fs::write(&p, r#"{"tau": 5}"#).unwrap();
    let c = load_train_config(&p).unwrap();
    assert_eq!(c.tau, 5);
    assert_eq!(c.batch_size, TrainConfig::default().batch_size);
    fs::write(&p, r#"{"taux": 5}"#).unwrap();
    assert!(matches!(load_train_config(&p), Err(Error::Config(_))));
}
