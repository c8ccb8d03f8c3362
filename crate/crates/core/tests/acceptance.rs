//! Acceptance gates. Each check prints one PASS/FAIL line; the process
//! exits non-zero if any gate fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use turbine_core::config::RunConfig;
use turbine_core::dataio::{
    nrel_surrogate, split_dataset, surrogate_spec, synth_dataset, FeatureVector, LabeledDataset, SplitFractions, SplitMode, SplitTag,
};
use turbine_core::neuralnet::{make_windows, train, ArchKind, EarlyStopping, NetModel, Objective, TrainConfig, WindowSet};
use turbine_core::pipeline::{run_pipeline, Stage};
use turbine_core::powercurve::{classify_region, ideal_power, is_fault, Region, TurbineSpec};
use turbine_core::svr::{fit, kfold_cv, SvrHyper, SvrModel};

type Outcome = Result<String, String>;

/// Name, check and optional wall-time budget in seconds.
type Gate = (&'static str, fn() -> Outcome, Option<f64>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mean_sq(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

// 1. Region labels against a brute-force two-comparison oracle.

fn random_spec(rng: &mut ChaCha8Rng, on_grid: bool) -> TurbineSpec {
    let snap = |v: f64| if on_grid { (v * 100.0).round() / 100.0 } else { v };
    let cut_in = snap(rng.random_range(0.5..6.0));
    let rated = snap(cut_in + rng.random_range(1.0..12.0));
    let cut_out = snap(rated + rng.random_range(1.0..20.0));
    TurbineSpec::new(cut_in, rated, cut_out, rng.random_range(0.5..10.0)).unwrap()
}

fn region_labels() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut points = 0usize;
    let mut boundary_hits = 0usize;
    for s in 0..100 {
        let spec = random_spec(&mut rng, s % 2 == 0);
        for i in 0..=4000u32 {
            let v = f64::from(i) / 100.0;
            let oracle = !(spec.cut_in <= v && v <= spec.cut_out);
            let got = is_fault(v, &spec) == 1;
            ensure(got == oracle, || format!("v = {v}, spec {spec:?}: got {got}, oracle {oracle}"))?;
            let region_fault = classify_region(v, &spec) != Region::Region2;
            ensure(region_fault == oracle, || format!("classify_region disagrees at v = {v}"))?;
            boundary_hits += usize::from(v == spec.cut_in || v == spec.cut_out);
            points += 1;
        }
    }
    Ok(format!("{points} points agree, {boundary_hits} exactly on a threshold"))
}

// 2. Analytic gradients against central differences.

fn grad_windows(kind: ArchKind, n: usize) -> WindowSet {
    let spec = surrogate_spec();
    let recs = synth_dataset(&spec, 600, 0.05, 0.15, 3).unwrap();
    let tags = vec![SplitTag::Train; recs.len()];
    let ds = LabeledDataset::build(&recs, &tags, &spec).unwrap();
    let w = make_windows(
        &ds,
        if kind == ArchKind::Feedforward || kind == ArchKind::SparseAutoencoder {
            1
        } else {
            12
        },
        kind,
    )
    .unwrap();
    let idx: Vec<usize> = (0..n).map(|i| i * (w.train.len() / n)).collect();
    w.train.subset(&idx)
}

fn gradient_checks() -> Outcome {
    const STEP: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for kind in ArchKind::ALL {
        let model = NetModel::default_for(kind, 5);
        let batch = grad_windows(kind, 16);
        let objectives: Vec<(Objective, Vec<usize>)> = if kind == ArchKind::SparseAutoencoder {
            vec![(Objective::Reconstruction, vec![0, 1]), (Objective::Supervised, vec![0, 2])]
        } else {
            vec![(Objective::Supervised, (0..model.layers.len()).collect())]
        };
        for (objective, layers) in objectives {
            let (_, grads) = model.loss_and_gradients(&batch, objective).map_err(|e| e.to_string())?;
            for &li in &layers {
                let n = model.layers[li].params().len();
                for _ in 0..30 {
                    let k = rng.random_range(0..n);
                    let mut plus = model.clone();
                    plus.layers[li].params_mut()[k] += STEP;
                    let mut minus = model.clone();
                    minus.layers[li].params_mut()[k] -= STEP;
                    let numeric = (plus.loss(&batch, objective).unwrap() - minus.loss(&batch, objective).unwrap()) / (2.0 * STEP);
                    let analytic = grads.0[li][k];
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max(rel);
                    ensure(rel < 1e-4, || {
                        format!(
                            "{} {objective:?} layer {li} param {k}: analytic {analytic:e}, numeric {numeric:e}",
                            kind.short()
                        )
                    })?;
                    checked += 1;
                }
            }
        }
    }
    Ok(format!(
        "{checked} coordinates over 5 architectures, worst relative error {worst:.1e}"
    ))
}

// 3. SVR capacity on clean and noisy data.

fn svr_capacity() -> Outcome {
    // (a) 50 noiseless met rows whose power is exactly the ideal curve
    let spec = TurbineSpec::new(3.0, 13.0, 25.0, 3.0).unwrap();
    let clean = synth_dataset(&spec, 50, 0.0, 0.0, 1).unwrap();
    for r in &clean {
        let ideal = ideal_power(r.wind_speed, &spec);
        ensure((r.power - ideal).abs() <= 1e-12, || {
            format!("row at {} m/s has power {} != ideal {ideal}", r.wind_speed, r.power)
        })?;
    }
    let ds = LabeledDataset::build(&clean, &vec![SplitTag::Train; clean.len()], &spec).unwrap();
    let (xs, ys) = ds.rows(&ds.indices(SplitTag::Train));
    let (lo, hi) = clean
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.power), b.max(r.power)));
    for (r, y) in clean.iter().zip(&ys) {
        ensure((y - (r.power - lo) / (hi - lo)).abs() <= 1e-12, || {
            "target is not the min-max scaled power".into()
        })?;
    }
    let hyper = SvrHyper {
        c: 10.0,
        epsilon: 0.01,
        ..SvrHyper::defaults_for(&ys)
    };
    let model = fit(&xs, &ys, &hyper, 0).map_err(|e| e.to_string())?;
    let train_mse = mean_sq(&model.predict_batch(&xs), &ys);
    ensure(train_mse < 1e-3, || format!("noiseless training MSE {train_mse:.2e} >= 1e-3"))?;

    // (b) 5,000 generator rows at the default fault share, N(0, 0.05²)
    // added to the normalized target, 70/30
    let sigma = 0.05;
    let fault_fraction = RunConfig::default().data.synthetic.fault_fraction;
    let recs = synth_dataset(&spec, 5000, 0.0, fault_fraction, 7).unwrap();
    let frac = SplitFractions {
        train: 0.7,
        val: 0.3,
        test: 0.0,
    };
    let tags = split_dataset(recs.len(), frac, 42, SplitMode::Random).unwrap();
    let mut ds = LabeledDataset::build(&recs, &tags, &spec).unwrap();
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    ds.power_target.iter_mut().for_each(|t| *t += noise.sample(&mut rng));
    let (tx, ty) = ds.rows(&ds.indices(SplitTag::Train));
    let (hx, hy) = ds.rows(&ds.indices(SplitTag::Val));
    let model = fit(&tx, &ty, &SvrHyper::defaults_for(&ty), 0).map_err(|e| e.to_string())?;
    let held = mean_sq(&model.predict_batch(&hx), &hy);
    let (lo, hi) = (0.8 * sigma * sigma, 2.0 * sigma * sigma);
    ensure((lo..=hi).contains(&held), || {
        format!("held-out MSE {held:.5} outside [{lo:.4}, {hi:.4}]")
    })?;
    Ok(format!(
        "noiseless train MSE {train_mse:.1e}, noisy held-out MSE {held:.5} in [{lo:.4}, {hi:.4}]"
    ))
}

// 4. Box constraints and the tube condition after convergence.

fn decision(model: &SvrModel, x: &FeatureVector) -> f64 {
    let s2 = model.hyper.kernel_scale * model.hyper.kernel_scale;
    model
        .support_vectors
        .iter()
        .zip(&model.dual_coefficients)
        .map(|(sv, b)| {
            let d2: f64 = sv.iter().zip(x).map(|(p, q)| (p - q) * (p - q)).sum();
            b * (-d2 / s2).exp()
        })
        .sum::<f64>()
        + model.bias
}

fn kkt_suite() -> Outcome {
    let spec = surrogate_spec();
    let mut fits = 0;
    let mut interior = 0;
    let mut worst_tube = 0.0f64;
    for (rows, c, seed) in [(300, 0.1, 1), (300, 1.0, 2), (800, 10.0, 3), (1500, 1.0, 4), (400, 100.0, 5)] {
        let recs = synth_dataset(&spec, rows, 0.05, 0.15, seed).unwrap();
        let tags = vec![SplitTag::Train; rows];
        let ds = LabeledDataset::build(&recs, &tags, &spec).unwrap();
        let (xs, ys) = ds.rows(&ds.indices(SplitTag::Train));
        let hyper = SvrHyper {
            c,
            ..SvrHyper::defaults_for(&ys)
        };
        let model = fit(&xs, &ys, &hyper, seed).map_err(|e| e.to_string())?;
        ensure(model.converged, || format!("rows {rows}, C {c}: did not converge"))?;
        fits += 1;
        let by_row: BTreeMap<Vec<u64>, usize> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| (x.iter().map(|v| v.to_bits()).collect(), i))
            .collect();
        for (sv, &b) in model.support_vectors.iter().zip(&model.dual_coefficients) {
            ensure(b.abs() <= c + 1e-9, || format!("|coefficient| {} exceeds C = {c}", b.abs()))?;
            if b.abs() < c - 1e-9 {
                let i = by_row[&sv.iter().map(|v| v.to_bits()).collect::<Vec<_>>()];
                let residual = (ys[i] - decision(&model, sv)) * b.signum();
                let gap = (residual - hyper.epsilon).abs();
                worst_tube = worst_tube.max(gap / hyper.tolerance);
                ensure(gap <= 10.0 * hyper.tolerance, || {
                    format!(
                        "rows {rows}, C {c}: interior vector off the tube by {gap:.2e} (tolerance {:.0e})",
                        hyper.tolerance
                    )
                })?;
                interior += 1;
            }
        }
    }
    Ok(format!(
        "{fits} converged fits, {interior} interior vectors, worst tube gap {worst_tube:.2} x tolerance"
    ))
}

// 5. Early stopping on constructed sequences and on real training.

fn early_stopping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sequences: Vec<(usize, Vec<f64>)> = vec![
        (6, [1.0, 0.8, 0.7, 0.75, 0.7, 0.71, 0.72, 0.9, 0.95, 1.0, 0.6].to_vec()),
        (1, vec![0.5, 0.5]),
        (3, vec![0.3, 0.2, 0.1, 0.1, 0.1, 0.1, 0.05]),
    ];
    for _ in 0..200 {
        let patience = rng.random_range(1..10);
        let seq: Vec<f64> = (0..60).map(|_| f64::from(rng.random_range(0..20u8)) / 10.0).collect();
        sequences.push((patience, seq));
    }
    for (patience, seq) in &sequences {
        // oracle: first epoch whose distance to the first strict minimum so far reaches patience
        let mut expected = None;
        for t in 1..=seq.len() {
            let prefix = &seq[..t];
            let min = prefix.iter().cloned().fold(f64::INFINITY, f64::min);
            let best = prefix.iter().position(|&v| v == min).unwrap() + 1;
            if t - best >= *patience {
                expected = Some((t, best));
                break;
            }
        }
        let mut s = EarlyStopping::new(*patience);
        let mut got = None;
        for (e, &v) in seq.iter().enumerate() {
            if s.observe(v).stop {
                got = Some((e + 1, s.best_epoch()));
                break;
            }
        }
        ensure(got == expected, || {
            format!("patience {patience}, {seq:?}: stopped {got:?}, expected {expected:?}")
        })?;
        if let Some((stop, best)) = got {
            ensure(stop == best + patience, || {
                format!("stop {stop} != best {best} + patience {patience}")
            })?;
        }
    }

    // real trainers: frozen rate gives a flat sequence, best = 1, stop = 1 + patience
    let spec = surrogate_spec();
    let recs = synth_dataset(&spec, 1500, 0.05, 0.15, 9).unwrap();
    let tags = split_dataset(recs.len(), SplitFractions::NN, 42, SplitMode::Chronological).unwrap();
    let ds = LabeledDataset::build(&recs, &tags, &spec).unwrap();
    let frozen = TrainConfig {
        learning_rate: 0.0,
        patience: 4,
        ..TrainConfig::default()
    };
    let m = NetModel::default_for(ArchKind::Feedforward, 1);
    let (_, trace) = train(&m, &ds, &frozen).map_err(|e| e.to_string())?;
    ensure(trace.best_epoch == 1 && trace.epochs_run == 5, || {
        format!("frozen run: best {} epochs {}", trace.best_epoch, trace.epochs_run)
    })?;

    let mut worst = 0.0f64;
    for kind in ArchKind::ALL {
        let cfg = TrainConfig {
            max_epochs: 60,
            patience: 3,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let model = NetModel::default_for(kind, 3);
        let (trained, trace) = train(&model, &ds, &cfg).map_err(|e| e.to_string())?;
        let windows = make_windows(&ds, trained.window, kind).unwrap();
        let val = trained.loss(&windows.val, Objective::Supervised).unwrap();
        let best = trace.best_val_loss().unwrap();
        worst = worst.max((val - best).abs());
        ensure((val - best).abs() <= 1e-9, || {
            format!("{}: returned model val {val} vs best {best}", kind.short())
        })?;
        if trace.epochs_run < cfg.max_epochs {
            ensure(trace.epochs_run == trace.best_epoch + cfg.patience, || {
                format!("{}: stopped at {} with best {}", kind.short(), trace.epochs_run, trace.best_epoch)
            })?;
        }
    }
    Ok(format!(
        "{} sequences, 5 trainers reproduce best val loss within {worst:.1e}",
        sequences.len()
    ))
}

// 6. Surrogate-scale gates.

fn paper_scale() -> Outcome {
    let recs = nrel_surrogate();
    let tags = split_dataset(recs.len(), SplitFractions::NN, 42, SplitMode::Chronological).unwrap();
    let ds = LabeledDataset::build(&recs, &tags, &surrogate_spec()).unwrap();
    let mut lines = Vec::new();
    let mut failures = Vec::new();

    let (tx, ty) = ds.rows(&ds.indices(SplitTag::Train));
    let mut held = ds.indices(SplitTag::Val);
    held.extend(ds.indices(SplitTag::Test));
    let (hx, hy) = ds.rows(&held);
    let start = Instant::now();
    let svr = fit(&tx, &ty, &SvrHyper::defaults_for(&ty), 0).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let svr_mse = mean_sq(&svr.predict_batch(&hx), &hy);
    lines.push(format!("svr {svr_mse:.4} ({secs:.0} s)"));
    if svr_mse > 0.15 || secs > 120.0 {
        failures.push(format!("svr MSE {svr_mse:.4} in {secs:.0} s"));
    }

    let mut best: Option<(f64, ArchKind)> = None;
    for kind in ArchKind::ALL {
        let model = NetModel::default_for(kind, 1);
        let start = Instant::now();
        let (trained, _) = train(&model, &ds, &TrainConfig::default()).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let test = &make_windows(&ds, trained.window, kind).unwrap().test;
        let preds = trained.predict_set(test).unwrap();
        let m = mean_sq(&preds, &test.labels);
        lines.push(format!("{} {m:.4} ({secs:.0} s)", kind.short()));
        if m > 0.10 || secs > 120.0 {
            failures.push(format!("{} MSE {m:.4} in {secs:.0} s", kind.short()));
        }
        if best.is_none_or(|(b, _)| m < b) {
            best = Some((m, kind));
        }
    }
    let best = best.map(|(_, k)| k.short()).unwrap_or("-");
    let summary = format!("{}; best network {best} (not gated)", lines.join(", "));
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}: {summary}", failures.join("; ")))
    }
}

// 7. Byte-identical artifacts from two identical pipeline runs.

fn collect(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut snapshots = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let cfg = RunConfig::from_toml(
            "[data.synthetic]\nrows = 4000\n",
            &[format!("out_dir = {:?}", out.display().to_string())],
        )
        .map_err(|e| e.to_string())?;
        run_pipeline(&cfg, &Stage::ALL, |_, _| {}).map_err(|e| e.to_string())?;
        snapshots.push(collect(&out));
    }
    let compared: Vec<&String> = snapshots[0]
        .keys()
        .filter(|name| name.ends_with(".model") || name.ends_with("report.kv") || *name == "comparison.kv")
        .collect();
    ensure(compared.len() == 8, || {
        format!("expected 6 models and 2 reports, found {compared:?}")
    })?;
    for name in &compared {
        ensure(snapshots[0].get(*name) == snapshots[1].get(*name), || {
            format!("{name} differs between runs")
        })?;
    }
    let data_equal = ["records.csv", "dataset.csv", "split.csv", "curve.csv"]
        .iter()
        .all(|n| snapshots[0].get(*n) == snapshots[1].get(*n));
    ensure(data_equal, || "intermediate data differs between runs".into())?;
    Ok(format!("{} model and report files byte-identical", compared.len()))
}

// 8. Leave-one-out equals ten independent trainings.

fn leave_one_out() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let xs: Vec<FeatureVector> = (0..10).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| (x[0] + 0.5 * x[4]).tanh() * 0.4 + 0.5 + rng.random_range(-0.05..0.05))
        .collect();
    let hyper = SvrHyper {
        c: 5.0,
        epsilon: 0.02,
        ..SvrHyper::defaults_for(&ys)
    };
    let seed = 3;
    let cv = kfold_cv(&xs, &ys, 10, &hyper, seed).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for j in 0..10 {
        let tx: Vec<FeatureVector> = (0..10).filter(|&i| i != j).map(|i| xs[i]).collect();
        let ty: Vec<f64> = (0..10).filter(|&i| i != j).map(|i| ys[i]).collect();
        let m = fit(&tx, &ty, &hyper, seed).map_err(|e| e.to_string())?;
        let brute = (m.predict(&xs[j]) - ys[j]).powi(2);
        let fold = cv
            .folds
            .iter()
            .position(|f| f == &[j])
            .ok_or(format!("no singleton fold for row {j}"))?;
        let diff = (cv.fold_mses[fold] - brute).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-9, || {
            format!("row {j}: cv {} vs brute force {brute}", cv.fold_mses[fold])
        })?;
    }
    Ok(format!("10 folds match, max difference {worst:.1e}"))
}

fn main() {
    let criteria: [Gate; 8] = [
        ("region labels vs two-comparison oracle", region_labels, Some(1.0)),
        ("gradient checks, five architectures", gradient_checks, Some(30.0)),
        ("SVR capacity", svr_capacity, Some(60.0)),
        ("SVR box and tube conditions", kkt_suite, None),
        ("early stopping", early_stopping, None),
        ("surrogate-scale MSE and time gates", paper_scale, None),
        ("pipeline determinism", determinism, None),
        ("leave-one-out vs brute force", leave_one_out, None),
    ];
    // optional criterion numbers select a subset, e.g. `-- 3 8`
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let mut result = check();
        let secs = start.elapsed().as_secs_f64();
        if let (Ok(detail), Some(limit)) = (&result, budget) {
            if secs >= limit {
                result = Err(format!("{detail}; took {secs:.2} s, budget {limit} s"));
            }
        }
        match result {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.2} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{secs:.2} s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all selected criteria passed");
}
