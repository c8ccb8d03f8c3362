use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataio::{split_dataset, synth_dataset, LabeledDataset, SplitFractions, SplitMode, SplitTag, N_FEATURES};
use crate::powercurve::TurbineSpec;

fn small(kind: ArchKind, seed: u64) -> NetModel {
    let over = match kind {
        ArchKind::Feedforward => ArchOverrides {
            hidden: Some(vec![5, 4]),
            ..Default::default()
        },
        ArchKind::Recurrent | ArchKind::Convolutional => ArchOverrides {
            hidden: Some(vec![4]),
            window: Some(5),
            ..Default::default()
        },
        ArchKind::SparseAutoencoder => ArchOverrides {
            hidden: Some(vec![6]),
            ..Default::default()
        },
        ArchKind::NarTimeSeries => ArchOverrides {
            hidden: Some(vec![5]),
            window: Some(6),
            ..Default::default()
        },
    };
    let width = if kind.uses_labels() { 1 } else { 3 };
    build_arch(kind, width, &over, seed).unwrap()
}

fn random_batch(model: &NetModel, n: usize, seed: u64) -> WindowSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = WindowSet::new(model.window, model.input_width);
    for _ in 0..n {
        let x: Vec<f64> = (0..model.input_len())
            .map(|_| {
                if model.kind.uses_labels() {
                    rng.random_range(0..2) as f64
                } else {
                    rng.random_range(-1.5..1.5)
                }
            })
            .collect();
        set.push(&x, rng.random_range(0..2) as f64);
    }
    set
}

/// Central differences at step 1e-5 on every coordinate.
fn check_gradients(model: &NetModel, batch: &WindowSet, objective: Objective, layers: &[usize]) {
    let (_, grads) = model.loss_and_gradients(batch, objective).unwrap();
    let h = 1e-5;
    for &li in layers {
        for k in 0..model.layers[li].params().len() {
            let mut plus = model.clone();
            plus.layers[li].params_mut()[k] += h;
            let mut minus = model.clone();
            minus.layers[li].params_mut()[k] -= h;
            let numeric = (plus.loss(batch, objective).unwrap() - minus.loss(batch, objective).unwrap()) / (2.0 * h);
            let analytic = grads.0[li][k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(
                rel < 1e-4,
                "{:?} layer {li} param {k}: analytic {analytic} numeric {numeric}",
                model.kind
            );
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    for kind in ArchKind::ALL {
        let m = small(kind, 11);
        let batch = random_batch(&m, 7, 12);
        let prediction_layers: Vec<usize> = match kind {
            ArchKind::SparseAutoencoder => vec![0, 2],
            _ => (0..m.layers.len()).collect(),
        };
        check_gradients(&m, &batch, Objective::Supervised, &prediction_layers);
    }
}

#[test]
fn reconstruction_gradients_match_finite_differences() {
    let m = small(ArchKind::SparseAutoencoder, 3);
    let batch = random_batch(&m, 9, 4);
    check_gradients(&m, &batch, Objective::Reconstruction, &[0, 1]);
    let (_, g) = m.loss_and_gradients(&batch, Objective::Reconstruction).unwrap();
    assert!(g.0[2].iter().all(|&v| v == 0.0));
}

#[test]
fn supervised_loss_ignores_decoder() {
    let m = small(ArchKind::SparseAutoencoder, 3);
    let (_, g) = m.loss_and_gradients(&random_batch(&m, 5, 1), Objective::Supervised).unwrap();
    assert!(g.0[1].iter().all(|&v| v == 0.0));
    let ff = small(ArchKind::Feedforward, 1);
    assert!(matches!(
        ff.loss_and_gradients(&random_batch(&ff, 3, 1), Objective::Reconstruction),
        Err(NetError::UnsupportedObjective(ArchKind::Feedforward))
    ));
}

#[test]
fn kl_vanishes_at_target_sparsity() {
    // zero encoder weights and bias logit(ρ) give ρ̂ = ρ exactly at every unit
    let mut m = small(ArchKind::SparseAutoencoder, 5);
    let rho = m.sparsity.unwrap().rho;
    let Layer::Dense(enc) = &mut m.layers[0] else { unreachable!() };
    let n_w = enc.input * enc.output;
    enc.params[..n_w].iter_mut().for_each(|w| *w = 0.0);
    enc.params[n_w..].iter_mut().for_each(|b| *b = (rho / (1.0 - rho)).ln());
    let Layer::Dense(dec) = &mut m.layers[1] else { unreachable!() };
    dec.params.iter_mut().for_each(|w| *w = 0.0);
    let mut batch = WindowSet::new(1, 3);
    for _ in 0..4 {
        batch.push(&[0.0, 0.0, 0.0], 0.0);
    }
    let loss = m.loss(&batch, Objective::Reconstruction).unwrap();
    assert!(loss.abs() < 1e-15, "{loss}");
}

#[test]
fn perfect_predictions_have_zero_loss_and_gradient() {
    let m = small(ArchKind::Feedforward, 2);
    let mut batch = random_batch(&m, 6, 3);
    let preds = m.predict_set(&batch).unwrap();
    batch.labels = preds;
    let (loss, g) = m.loss_and_gradients(&batch, Objective::Supervised).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.0.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn empty_batch_rejected() {
    let m = small(ArchKind::Recurrent, 2);
    let empty = WindowSet::new(m.window, m.input_width);
    assert!(matches!(
        m.loss_and_gradients(&empty, Objective::Supervised),
        Err(NetError::EmptyBatch)
    ));
}

#[test]
fn default_topologies() {
    let widths = |m: &NetModel| m.layers.iter().map(|l| l.widths()).collect::<Vec<_>>();
    let ff = NetModel::default_for(ArchKind::Feedforward, 0);
    assert_eq!(widths(&ff), vec![(9, 32), (32, 16), (16, 1)]);
    let rnn = NetModel::default_for(ArchKind::Recurrent, 0);
    assert_eq!((rnn.window, widths(&rnn)), (12, vec![(9, 32), (32, 1)]));
    let cnn = NetModel::default_for(ArchKind::Convolutional, 0);
    assert_eq!((cnn.window, widths(&cnn)), (12, vec![(9, 16), (16, 1)]));
    let sae = NetModel::default_for(ArchKind::SparseAutoencoder, 0);
    assert_eq!(widths(&sae), vec![(9, 16), (16, 9), (16, 1)]);
    assert_eq!(sae.sparsity, Some(Sparsity { rho: 0.05, beta: 3.0 }));
    let nar = NetModel::default_for(ArchKind::NarTimeSeries, 0);
    assert_eq!((nar.window, nar.input_width, widths(&nar)), (12, 1, vec![(12, 16), (16, 1)]));
}

#[test]
fn fresh_models_are_seeded_and_bounded() {
    for kind in ArchKind::ALL {
        let a = NetModel::default_for(kind, 9);
        assert_eq!(a, NetModel::default_for(kind, 9));
        assert_ne!(a, NetModel::default_for(kind, 10));
        let p = a.forward(&vec![0.0; a.input_len()]).unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert!(matches!(
            a.forward(&vec![0.0; a.input_len() + 1]),
            Err(NetError::ShapeMismatch { .. })
        ));
    }
}

#[test]
fn zero_output_layer_gives_half() {
    let mut m = NetModel::default_for(ArchKind::Feedforward, 1);
    m.layers.last_mut().unwrap().params_mut().iter_mut().for_each(|w| *w = 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let x: Vec<f64> = (0..N_FEATURES).map(|_| rng.random_range(-5.0..5.0)).collect();
        assert_eq!(m.forward(&x).unwrap(), 0.5);
    }
}

#[test]
fn forward_is_pure() {
    for kind in ArchKind::ALL {
        let m = NetModel::default_for(kind, 4);
        let x = random_batch(&m, 1, 5);
        assert_eq!(m.forward(x.input(0)).unwrap(), m.forward(x.input(0)).unwrap());
    }
}

#[test]
fn bad_overrides() {
    let cases = [
        (
            ArchKind::Recurrent,
            ArchOverrides {
                hidden: Some(vec![4, 4]),
                ..Default::default()
            },
        ),
        (
            ArchKind::Feedforward,
            ArchOverrides {
                hidden: Some(vec![0]),
                ..Default::default()
            },
        ),
        (
            ArchKind::Feedforward,
            ArchOverrides {
                window: Some(3),
                ..Default::default()
            },
        ),
        (
            ArchKind::Convolutional,
            ArchOverrides {
                kernel_width: Some(20),
                ..Default::default()
            },
        ),
        (
            ArchKind::SparseAutoencoder,
            ArchOverrides {
                rho: Some(1.5),
                ..Default::default()
            },
        ),
        (
            ArchKind::Feedforward,
            ArchOverrides {
                beta: Some(1.0),
                ..Default::default()
            },
        ),
        (
            ArchKind::NarTimeSeries,
            ArchOverrides {
                window: Some(0),
                ..Default::default()
            },
        ),
    ];
    for (kind, over) in cases {
        assert!(
            matches!(build_arch(kind, N_FEATURES, &over, 0), Err(NetError::BadOverride(_))),
            "{kind:?} {over:?}"
        );
    }
}

#[test]
fn text_round_trip() {
    for kind in ArchKind::ALL {
        let mut m = small(kind, 21);
        m.spec = Some(TurbineSpec::new(3.0, 12.0, 25.0, 1.5).unwrap());
        let text = m.to_text();
        let back = NetModel::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }
    let m = small(ArchKind::Feedforward, 1);
    let broken = m.to_text().replace("layer1.output = 4", "layer1.output = 3");
    assert!(NetModel::from_text(&broken).is_err());
}

#[test]
fn save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    let m = NetModel::default_for(ArchKind::Convolutional, 2);
    m.save(&path).unwrap();
    assert_eq!(NetModel::load(&path).unwrap(), m);
    assert!(matches!(NetModel::load(&dir.path().join("none")), Err(NetError::Io { .. })));
}

#[test]
fn confusion_counts() {
    assert_eq!(confusion(&[0.1, 0.6, 0.4, 0.9, 0.5], &[0.0, 0.0, 1.0, 1.0, 1.0]), [1, 1, 1, 2]);
}

#[test]
fn learns_separable_faults() {
    // fault iff wind speed outside the operating band: separable in x[4]
    let spec = TurbineSpec::new(3.0, 13.0, 25.0, 2.0).unwrap();
    let recs = synth_dataset(&spec, 3000, 0.02, 0.3, 8).unwrap();
    let tags = split_dataset(recs.len(), SplitFractions::NN, 1, SplitMode::Random).unwrap();
    let ds = LabeledDataset::build(&recs, &tags, &spec).unwrap();
    let model = NetModel::default_for(ArchKind::Feedforward, 1);
    let cfg = TrainConfig {
        max_epochs: 200,
        seed: 2,
        ..TrainConfig::default()
    };
    let (trained, trace) = train(&model, &ds, &cfg).unwrap();
    assert!(trained.stats.is_some());
    let w = make_windows(&ds, 1, ArchKind::Feedforward).unwrap();
    let test_mse = trained.evaluate(w.get(SplitTag::Test).0).unwrap();
    assert!(test_mse < 0.05, "test mse {test_mse} after {} epochs", trace.epochs_run);
}

#[test]
fn sparse_autoencoder_trains_in_two_phases() {
    let spec = TurbineSpec::new(3.0, 13.0, 25.0, 2.0).unwrap();
    let recs = synth_dataset(&spec, 600, 0.02, 0.3, 8).unwrap();
    let tags = split_dataset(recs.len(), SplitFractions::NN, 1, SplitMode::Random).unwrap();
    let ds = LabeledDataset::build(&recs, &tags, &spec).unwrap();
    let model = NetModel::default_for(ArchKind::SparseAutoencoder, 1);
    let cfg = TrainConfig {
        max_epochs: 8,
        ..TrainConfig::default()
    };
    let (trained, trace) = train(&model, &ds, &cfg).unwrap();
    let pre = trace.pretrain.as_ref().unwrap();
    assert!(pre.epochs_run >= 1 && trace.epochs_run >= 1);
    assert_eq!(trace.total_epochs(), pre.epochs_run + trace.epochs_run);
    // the head phase leaves encoder and decoder as pretraining left them
    assert_ne!(trained.layers[0], model.layers[0]);
    assert_ne!(trained.layers[2], model.layers[2]);
}
