use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use turbine_core::config::RunConfig;
use turbine_core::pipeline::{run_pipeline, Layout, Stage, StageOutcome, COMPARISON_STEM};
use turbine_core::report::ComparisonReport;

const SMALL: &str = r#"
[data.synthetic]
rows = 1500
seed = 11

[svr]
cv_folds = 2

[nn.train]
max_epochs = 4
patience = 2
"#;

fn small_config(out: &Path) -> RunConfig {
    RunConfig::from_toml(SMALL, &[format!("out_dir = {:?}", out.display().to_string())]).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, (Vec<u8>, SystemTime)> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let meta = fs::metadata(&p).unwrap();
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    (fs::read(&p).unwrap(), meta.modified().unwrap()),
                );
            }
        }
    }
    out
}

#[test]
fn full_run_then_noop_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let done = run_pipeline(&cfg, &Stage::ALL, |_, _| {}).unwrap();
    assert!(done.iter().all(|(_, o)| *o == StageOutcome::Ran));

    let report = ComparisonReport::load(tmp.path(), COMPARISON_STEM).unwrap();
    assert_eq!(report.rows.len(), 5);
    assert_eq!(report.fingerprint.row_count, 1500);
    assert_eq!(report.fingerprint.config_hash, cfg.hash());
    assert!(report.rows.iter().all(|r| r.mse.is_finite() && r.mse >= 0.0));

    let before = snapshot(tmp.path());
    let again = run_pipeline(&cfg, &Stage::ALL, |_, _| {}).unwrap();
    assert!(again.iter().all(|(_, o)| *o == StageOutcome::Skipped), "{again:?}");
    assert_eq!(before, snapshot(tmp.path()));
}

#[test]
fn missing_dataset_is_a_data_error_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut cfg = small_config(&out);
    cfg.data.path = Some(tmp.path().join("does-not-exist.csv"));
    let err = run_pipeline(&cfg, &Stage::ALL, |_, _| {}).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn later_stage_without_inputs_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let err = run_pipeline(&cfg, &[Stage::TrainSvr], |_, _| {}).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn changed_config_reruns_only_affected_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    run_pipeline(&cfg, &[Stage::Ingest, Stage::Label, Stage::TrainSvr], |_, _| {}).unwrap();
    let mut changed = cfg.clone();
    changed.svr.c = 5.0;
    let done = run_pipeline(&changed, &[Stage::Ingest, Stage::Label, Stage::TrainSvr], |_, _| {}).unwrap();
    let outcomes: Vec<StageOutcome> = done.iter().map(|(_, o)| *o).collect();
    assert_eq!(outcomes, [StageOutcome::Skipped, StageOutcome::Skipped, StageOutcome::Ran]);
}

#[test]
fn deleting_downstream_artifacts_reruns_them_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let stages = [Stage::Ingest, Stage::Label, Stage::TrainSvr];
    run_pipeline(&cfg, &stages, |_, _| {}).unwrap();
    let layout = Layout::new(tmp.path());
    let records = fs::read(layout.records()).unwrap();
    let model = fs::read(layout.svr_model()).unwrap();
    fs::remove_file(layout.svr_model()).unwrap();
    let done = run_pipeline(&cfg, &stages, |_, _| {}).unwrap();
    assert_eq!(done[2].1, StageOutcome::Ran);
    assert_eq!(fs::read(layout.records()).unwrap(), records);
    assert_eq!(fs::read(layout.svr_model()).unwrap(), model);
}

#[test]
fn invalid_config_is_rejected_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg.split.train = 0.9;
    let err = run_pipeline(&cfg, &Stage::ALL, |_, _| {}).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(fs::read_dir(tmp.path()).unwrap().next().is_none());
}
