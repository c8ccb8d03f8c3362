//! Stage runner: ingest → label → train_svr → sweep_nn → report.
//!
//! Every stage reads its inputs from and writes its artifacts to the output
//! directory. A stage leaves a stamp holding the hash of its config slice and
//! input files together with the hashes of its outputs; when both still
//! match, the stage is skipped without touching any file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::artifact::{write_atomic, FormatError, KvDoc, KvWriter};
use crate::config::{short_hash, ConfigError, RunConfig};
use crate::dataio::{
    ingest_csv, read_dataset, split_dataset, stats_path, synth_dataset, write_dataset, write_records_csv, DataError, IngestMode,
    LabeledDataset, MetRecord, NormalizationStats, Schema, SplitTag, N_FEATURES,
};
use crate::neuralnet::{build_arch, confusion, make_windows, train, ArchKind, NetError, NetModel};
use crate::powercurve::{bin_curve, is_fault, TurbineSpec};
use crate::report::{build_report, export_curve_plot, mse, EvalRow, Fingerprint, ReportError};
use crate::svr::{kfold_cv_split, train_svr, SvrError, SvrModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data error: {0}")]
    Data(String),
    #[error("training error: {0}")]
    Train(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit status for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Train(_) => 4,
            PipelineError::Io { .. } => 5,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Errors while reading inputs count as data errors.
    pub fn reading(e: DataError) -> Self {
        PipelineError::Data(e.to_string())
    }

    /// Errors while writing artifacts count as i/o errors.
    pub fn writing(e: DataError) -> Self {
        match e {
            DataError::Io { path, source } => PipelineError::Io { path, source },
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<SvrError> for PipelineError {
    fn from(e: SvrError) -> Self {
        match e {
            SvrError::Io { path, source } => PipelineError::Io { path, source },
            SvrError::Format(f) => PipelineError::Data(f.to_string()),
            other => PipelineError::Train(other.to_string()),
        }
    }
}

impl From<NetError> for PipelineError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Io { path, source } => PipelineError::Io { path, source },
            NetError::Format(f) => PipelineError::Data(f.to_string()),
            NetError::WindowTooLong { .. } | NetError::EmptySplit(_) => PipelineError::Data(e.to_string()),
            other => PipelineError::Train(other.to_string()),
        }
    }
}

impl From<ReportError> for PipelineError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { path, source } => PipelineError::Io { path, source },
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<FormatError> for PipelineError {
    fn from(e: FormatError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Label,
    TrainSvr,
    SweepNn,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Label, Stage::TrainSvr, Stage::SweepNn, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Label => "label",
            Stage::TrainSvr => "train_svr",
            Stage::SweepNn => "sweep_nn",
            Stage::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s || st.name().replace('_', "-") == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

/// Artifact paths inside the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn records(&self) -> PathBuf {
        self.root.join("records.csv")
    }
    pub fn skipped(&self) -> PathBuf {
        self.root.join("skipped_rows.csv")
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split.csv")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.csv")
    }
    pub fn svr_model(&self) -> PathBuf {
        self.root.join("svr.model")
    }
    pub fn svr_eval(&self) -> PathBuf {
        self.root.join("svr.eval.kv")
    }
    pub fn svr_timing(&self) -> PathBuf {
        self.root.join("svr.timing.kv")
    }
    pub fn nn_model(&self, kind: ArchKind) -> PathBuf {
        self.root.join(format!("nn_{}.model", kind.short()))
    }
    pub fn nn_eval(&self, kind: ArchKind) -> PathBuf {
        self.root.join(format!("nn_{}.eval.kv", kind.short()))
    }
    pub fn nn_timing(&self, kind: ArchKind) -> PathBuf {
        self.root.join(format!("nn_{}.timing.kv", kind.short()))
    }
    pub fn curve(&self) -> PathBuf {
        self.root.join("curve.csv")
    }
    pub fn stamp(&self, name: &str) -> PathBuf {
        self.root.join("stamps").join(format!("{name}.stamp"))
    }
}

pub const COMPARISON_STEM: &str = "comparison";
pub const SVR_REPORT_STEM: &str = "svr_report";
pub const SVR_ROW_NAME: &str = "Support Vector Regression (Gaussian kernel)";

const STAMP_FORMAT: &str = "turbine-stage-stamp";
const EVAL_FORMAT: &str = "turbine-eval";
const TIMING_FORMAT: &str = "turbine-timing";

fn file_hash(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::Data(format!("{}: {e} (run the earlier stages first)", path.display())))?;
    Ok(short_hash(&bytes))
}

/// Key of a stage run: config slice plus input file contents.
fn stage_key(parts: &[&str], inputs: &[PathBuf]) -> Result<String, PipelineError> {
    let mut text = parts.join("\n");
    for p in inputs {
        text.push('\n');
        text.push_str(&file_hash(p)?);
    }
    Ok(short_hash(text.as_bytes()))
}

fn stamp_is_current(layout: &Layout, name: &str, key: &str, outputs: &[PathBuf]) -> bool {
    let Ok(text) = fs::read_to_string(layout.stamp(name)) else {
        return false;
    };
    let Ok(doc) = KvDoc::parse(&text, STAMP_FORMAT, 1) else {
        return false;
    };
    if doc.str("key").ok() != Some(key) || doc.usize("outputs").ok() != Some(outputs.len()) {
        return false;
    }
    outputs
        .iter()
        .enumerate()
        .all(|(i, p)| fs::read(p).map(|b| short_hash(&b)).ok().as_deref() == doc.str(&format!("output.{i}")).ok())
}

fn write_stamp(layout: &Layout, name: &str, key: &str, outputs: &[PathBuf]) -> Result<(), PipelineError> {
    let mut w = KvWriter::new(STAMP_FORMAT, 1);
    w.str("key", key);
    w.int("outputs", outputs.len() as i64);
    for (i, p) in outputs.iter().enumerate() {
        w.str(&format!("output.{i}"), &file_hash(p)?);
    }
    let path = layout.stamp(name);
    write_atomic(&path, w.finish().as_bytes()).map_err(|e| PipelineError::io(&path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    write_atomic(path, text.as_bytes()).map_err(|e| PipelineError::io(path, e))
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::Data(format!("{}: {e} (run the earlier stages first)", path.display())))
}

fn section<T: serde::Serialize>(name: &str, value: &T) -> String {
    #[derive(serde::Serialize)]
    struct Wrap<'a, T> {
        section: &'a str,
        value: &'a T,
    }
    toml::to_string(&Wrap { section: name, value }).expect("config section serializes")
}

/// Met records from the configured CSV, or from the generator.
pub fn load_records(cfg: &RunConfig) -> Result<(Vec<MetRecord>, Vec<crate::dataio::SkippedRow>), PipelineError> {
    match &cfg.data.path {
        Some(path) => {
            let got = ingest_csv(path, &cfg.data.schema, cfg.data.mode).map_err(PipelineError::reading)?;
            Ok((got.records, got.skipped))
        }
        None => {
            let s = &cfg.data.synthetic;
            let recs = synth_dataset(&cfg.turbine, s.rows, s.noise_sigma, s.fault_fraction, s.seed).map_err(PipelineError::reading)?;
            Ok((recs, Vec::new()))
        }
    }
}

fn run_ingest(cfg: &RunConfig, layout: &Layout) -> Result<StageOutcome, PipelineError> {
    let data = section("data", &cfg.data.synthetic) + &section("mode", &cfg.data.mode) + &section("schema", &cfg.data.schema);
    let inputs: Vec<PathBuf> = cfg.data.path.iter().cloned().collect();
    let key =
        stage_key(&[Stage::Ingest.name(), &data, &section("turbine", &cfg.turbine)], &inputs).map_err(|e| match (&cfg.data.path, e) {
            (Some(p), PipelineError::Data(_)) => PipelineError::Data(format!("dataset {} not readable", p.display())),
            (_, e) => e,
        })?;
    let outputs = vec![layout.records(), layout.skipped()];
    if stamp_is_current(layout, Stage::Ingest.name(), &key, &outputs) {
        return Ok(StageOutcome::Skipped);
    }
    // read everything before creating any file
    let (records, skipped) = load_records(cfg)?;
    write_records_csv(&layout.records(), &records).map_err(PipelineError::writing)?;
    let mut text = String::from("row,line,reason\n");
    for s in &skipped {
        let reason = s.reason.replace(['"', '\n'], "'");
        text.push_str(&format!("{},{},\"{}\"\n", s.row, s.line, reason));
    }
    write_text(&layout.skipped(), &text)?;
    write_stamp(layout, Stage::Ingest.name(), &key, &outputs)?;
    Ok(StageOutcome::Ran)
}

/// Reads the canonical records file written by the ingest stage.
pub fn read_records(path: &Path) -> Result<Vec<MetRecord>, PipelineError> {
    Ok(ingest_csv(path, &Schema::default(), IngestMode::Strict)
        .map_err(PipelineError::reading)?
        .records)
}

pub fn write_split(path: &Path, tags: &[SplitTag]) -> Result<(), PipelineError> {
    let mut text = String::from("row,split_tag\n");
    for (i, t) in tags.iter().enumerate() {
        text.push_str(&format!("{i},{}\n", t.as_str()));
    }
    write_text(path, &text)
}

pub fn read_split(path: &Path) -> Result<Vec<SplitTag>, PipelineError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("row,split_tag") {
        return Err(PipelineError::Data(format!("{}: expected header row,split_tag", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let tag = line
                .split_once(',')
                .and_then(|(r, t)| (r.parse::<usize>().ok() == Some(i)).then_some(t));
            tag.and_then(SplitTag::parse)
                .ok_or_else(|| PipelineError::Data(format!("{}: bad line {}: {line:?}", path.display(), i + 2)))
        })
        .collect()
}

fn run_label(cfg: &RunConfig, layout: &Layout) -> Result<StageOutcome, PipelineError> {
    let key = stage_key(
        &[
            Stage::Label.name(),
            &section("turbine", &cfg.turbine),
            &section("split", &cfg.split),
        ],
        &[layout.records()],
    )?;
    let outputs = vec![layout.split(), layout.dataset(), stats_path(&layout.dataset())];
    if stamp_is_current(layout, Stage::Label.name(), &key, &outputs) {
        return Ok(StageOutcome::Skipped);
    }
    let records = read_records(&layout.records())?;
    let tags = split_dataset(records.len(), cfg.split.fractions(), cfg.split.seed, cfg.split.mode).map_err(PipelineError::reading)?;
    let ds = LabeledDataset::build(&records, &tags, &cfg.turbine).map_err(PipelineError::reading)?;
    write_split(&layout.split(), &tags)?;
    write_dataset(&layout.dataset(), &ds).map_err(PipelineError::writing)?;
    write_stamp(layout, Stage::Label.name(), &key, &outputs)?;
    Ok(StageOutcome::Ran)
}

/// Train and held-out (Val + Test) rows used for the SVR.
pub fn svr_held_out(ds: &LabeledDataset) -> Vec<usize> {
    let mut held = ds.indices(SplitTag::Val);
    held.extend(ds.indices(SplitTag::Test));
    held
}

/// Held-out MSE of an SVR on the normalized scale.
pub fn svr_held_out_mse(model: &SvrModel, ds: &LabeledDataset) -> Result<f64, PipelineError> {
    let (xs, ys) = ds.rows(&svr_held_out(ds));
    mse(&model.predict_batch(&xs), &ys).map_err(|_| PipelineError::Data("no held-out rows for the SVR".into()))
}

fn run_train_svr(cfg: &RunConfig, layout: &Layout) -> Result<StageOutcome, PipelineError> {
    let key = stage_key(
        &[Stage::TrainSvr.name(), &section("svr", &cfg.svr)],
        &[layout.dataset(), stats_path(&layout.dataset())],
    )?;
    let outputs = vec![layout.svr_model(), layout.svr_eval(), layout.svr_timing()];
    if stamp_is_current(layout, Stage::TrainSvr.name(), &key, &outputs) {
        return Ok(StageOutcome::Skipped);
    }
    let ds = read_dataset(&layout.dataset()).map_err(PipelineError::reading)?;
    let (_, train_y) = ds.rows(&ds.indices(SplitTag::Train));
    let hyper = cfg.svr.hyper_for(&train_y);
    let start = Instant::now();
    let model = train_svr(&ds, &hyper, cfg.svr.seed)?;
    let wall = start.elapsed().as_secs_f64();
    let held = svr_held_out_mse(&model, &ds)?;
    let mut w = KvWriter::new(EVAL_FORMAT, 1);
    w.str("model", "svr");
    w.int("epochs", 0);
    w.num("held_out_mse", held);
    w.int("held_out_rows", svr_held_out(&ds).len() as i64);
    w.int("iterations", model.iterations as i64);
    w.flag("converged", model.converged);
    w.int("support_vectors", model.n_support() as i64);
    w.num("epsilon", hyper.epsilon);
    w.int("cv_folds", cfg.svr.cv_folds as i64);
    if cfg.svr.cv_folds >= 2 {
        let cv = kfold_cv_split(&ds, SplitTag::Train, cfg.svr.cv_folds, &hyper, cfg.svr.seed)?;
        w.num("cv_mean_mse", cv.mean_mse);
        w.num("cv_std_mse", cv.std_mse);
        w.array("cv_fold_mse", &cv.fold_mses);
    }
    model.save(&layout.svr_model())?;
    write_text(&layout.svr_eval(), &w.finish())?;
    let mut t = KvWriter::new(TIMING_FORMAT, 1);
    t.num("wall_time_seconds", wall);
    write_text(&layout.svr_timing(), &t.finish())?;
    write_stamp(layout, Stage::TrainSvr.name(), &key, &outputs)?;
    Ok(StageOutcome::Ran)
}

/// Result of one architecture training, as persisted by the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct NetEval {
    pub kind: ArchKind,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub best_epoch: usize,
    pub val_mse: f64,
    pub test_mse: f64,
    /// `[tn, fp, fn, tp]` on the test windows.
    pub confusion: [usize; 4],
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub wall_time_seconds: f64,
}

impl NetEval {
    fn to_texts(&self) -> (String, String) {
        let mut w = KvWriter::new(EVAL_FORMAT, 1);
        w.str("model", self.kind.short());
        w.int("epochs", self.epochs as i64);
        w.int("pretrain_epochs", self.pretrain_epochs as i64);
        w.int("best_epoch", self.best_epoch as i64);
        w.num("val_mse", self.val_mse);
        w.num("test_mse", self.test_mse);
        let c = self.confusion;
        w.str("confusion_tn_fp_fn_tp", &format!("{} {} {} {}", c[0], c[1], c[2], c[3]));
        w.array("train_loss_per_epoch", &self.train_loss);
        w.array("val_loss_per_epoch", &self.val_loss);
        let mut t = KvWriter::new(TIMING_FORMAT, 1);
        t.num("wall_time_seconds", self.wall_time_seconds);
        (w.finish(), t.finish())
    }

    fn from_texts(eval: &str, timing: &str) -> Result<NetEval, PipelineError> {
        let doc = KvDoc::parse(eval, EVAL_FORMAT, 1)?;
        let t = KvDoc::parse(timing, TIMING_FORMAT, 1)?;
        let name = doc.str("model")?;
        let kind = ArchKind::from_short(name).ok_or_else(|| PipelineError::Data(format!("unknown model {name:?} in eval file")))?;
        let c: Vec<usize> = doc
            .str("confusion_tn_fp_fn_tp")?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| PipelineError::Data("bad confusion counts".into())))
            .collect::<Result<_, _>>()?;
        if c.len() != 4 {
            return Err(PipelineError::Data("bad confusion counts".into()));
        }
        Ok(NetEval {
            kind,
            epochs: doc.usize("epochs")?,
            pretrain_epochs: doc.usize("pretrain_epochs")?,
            best_epoch: doc.usize("best_epoch")?,
            val_mse: doc.f64("val_mse")?,
            test_mse: doc.f64("test_mse")?,
            confusion: [c[0], c[1], c[2], c[3]],
            train_loss: doc.array("train_loss_per_epoch")?,
            val_loss: doc.array("val_loss_per_epoch")?,
            wall_time_seconds: t.f64("wall_time_seconds")?,
        })
    }

    pub fn load(layout: &Layout, kind: ArchKind) -> Result<NetEval, PipelineError> {
        Self::from_texts(&read_text(&layout.nn_eval(kind))?, &read_text(&layout.nn_timing(kind))?)
    }
}

/// Builds and trains one architecture on a labelled dataset.
pub fn train_architecture(cfg: &RunConfig, ds: &LabeledDataset, kind: ArchKind) -> Result<(NetModel, NetEval), PipelineError> {
    let input_width = if kind.uses_labels() { 1 } else { N_FEATURES };
    let model = build_arch(kind, input_width, &cfg.nn.overrides(kind), cfg.nn.init_seed)
        .map_err(|e| PipelineError::Config(ConfigError::Invalid(e.to_string())))?;
    let tc = cfg.nn.train_config(kind);
    let (mut trained, trace) = train(&model, ds, &tc)?;
    trained.spec = Some(cfg.turbine);
    let windows = make_windows(ds, trained.window, kind)?;
    let test = &windows.test;
    let (test_mse, conf) = if test.is_empty() {
        (f64::NAN, [0; 4])
    } else {
        let preds = trained.predict_set(test)?;
        (mse(&preds, &test.labels)?, confusion(&preds, &test.labels))
    };
    if !test_mse.is_finite() {
        return Err(PipelineError::Data(format!("{}: test split has no windows", kind.short())));
    }
    let eval = NetEval {
        kind,
        epochs: trace.total_epochs(),
        pretrain_epochs: trace.pretrain.as_ref().map_or(0, |p| p.epochs_run),
        best_epoch: trace.best_epoch,
        val_mse: trace.best_val_loss().unwrap_or(f64::NAN),
        test_mse,
        confusion: conf,
        train_loss: trace.train_loss_per_epoch.clone(),
        val_loss: trace.val_loss_per_epoch.clone(),
        wall_time_seconds: trace.wall_time_seconds,
    };
    Ok((trained, eval))
}

fn sweep_one(cfg: &RunConfig, layout: &Layout, ds: &LabeledDataset, kind: ArchKind, key: &str) -> Result<StageOutcome, PipelineError> {
    let name = format!("{}.{}", Stage::SweepNn.name(), kind.short());
    let outputs = vec![layout.nn_model(kind), layout.nn_eval(kind), layout.nn_timing(kind)];
    if stamp_is_current(layout, &name, key, &outputs) {
        return Ok(StageOutcome::Skipped);
    }
    let (model, eval) = train_architecture(cfg, ds, kind)?;
    let (e, t) = eval.to_texts();
    model.save(&layout.nn_model(kind))?;
    write_text(&layout.nn_eval(kind), &e)?;
    write_text(&layout.nn_timing(kind), &t)?;
    write_stamp(layout, &name, key, &outputs)?;
    Ok(StageOutcome::Ran)
}

fn run_sweep(cfg: &RunConfig, layout: &Layout) -> Result<StageOutcome, PipelineError> {
    let kinds = cfg.nn.kinds()?;
    let inputs = [layout.dataset(), stats_path(&layout.dataset())];
    let keys = kinds
        .iter()
        .map(|&k| {
            let arch = section("arch", cfg.nn.section(k)) + &section("train", &cfg.nn.train_config(k));
            stage_key(
                &[
                    Stage::SweepNn.name(),
                    k.short(),
                    &arch,
                    &cfg.nn.init_seed.to_string(),
                    &section("turbine", &cfg.turbine),
                ],
                &inputs,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ds = read_dataset(&layout.dataset()).map_err(PipelineError::reading)?;
    let results: Vec<Result<StageOutcome, PipelineError>> = if cfg.nn.jobs > 1 && crate::exec::is_parallel() {
        crate::exec::map_range_with_threads(kinds.len(), cfg.nn.jobs, |i| sweep_one(cfg, layout, &ds, kinds[i], &keys[i]))
    } else {
        kinds
            .iter()
            .zip(&keys)
            .map(|(&k, key)| sweep_one(cfg, layout, &ds, k, key))
            .collect()
    };
    let mut outcome = StageOutcome::Skipped;
    for r in results {
        if r? == StageOutcome::Ran {
            outcome = StageOutcome::Ran;
        }
    }
    Ok(outcome)
}

/// Labels and normalizes new records with statistics fitted elsewhere.
/// Every row is tagged `Test`.
pub fn inference_dataset(records: &[MetRecord], stats: &NormalizationStats, spec: &TurbineSpec) -> Result<LabeledDataset, PipelineError> {
    let features = records.iter().map(|r| stats.normalize_features(&r.features())).collect();
    let power = records.iter().map(|r| stats.normalize_power(r.power)).collect();
    let labels = records.iter().map(|r| is_fault(r.wind_speed, spec)).collect();
    LabeledDataset::from_parts(features, power, labels, vec![SplitTag::Test; records.len()], *stats).map_err(PipelineError::reading)
}

/// Comparison of the swept architectures, in canonical order.
pub fn nn_report(
    cfg: &RunConfig,
    layout: &Layout,
    row_count: usize,
    timestamp: u64,
) -> Result<crate::report::ComparisonReport, PipelineError> {
    let rows = cfg
        .nn
        .kinds()?
        .into_iter()
        .map(|k| {
            let e = NetEval::load(layout, k)?;
            Ok(EvalRow {
                name: k.display_name().to_string(),
                epochs: e.epochs,
                wall_time_seconds: e.wall_time_seconds,
                mse: e.test_mse,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let mut r = build_report(rows)?.with_fingerprint(fingerprint(cfg, row_count));
    r.timestamp = timestamp;
    Ok(r)
}

fn fingerprint(cfg: &RunConfig, row_count: usize) -> Fingerprint {
    Fingerprint {
        row_count,
        split_seed: cfg.split.seed,
        config_hash: cfg.hash(),
    }
}

/// Writes the empirical power curve of all rows and the SVR predictions on
/// the held-out rows, both in physical units.
pub fn export_plot_data(
    cfg: &RunConfig,
    layout: &Layout,
    ds: &LabeledDataset,
    model: &SvrModel,
    out: &Path,
) -> Result<(PathBuf, PathBuf), PipelineError> {
    let records = read_records(&layout.records())?;
    let samples: Vec<(f64, f64)> = records.iter().map(|r| (r.wind_speed, r.power)).collect();
    let actual = bin_curve(&samples, cfg.bin_width).map_err(|e| PipelineError::Data(e.to_string()))?;
    let held = svr_held_out(ds);
    let (xs, _) = ds.rows(&held);
    let preds = model.predict_batch(&xs);
    let mut predicted: Vec<(f64, f64)> = held
        .iter()
        .zip(&preds)
        .map(|(&i, &p)| (ds.wind_speed(i), ds.stats.denormalize_power(p)))
        .collect();
    predicted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(export_curve_plot(&actual, &predicted, out)?)
}

fn run_report(cfg: &RunConfig, layout: &Layout) -> Result<StageOutcome, PipelineError> {
    let kinds = cfg.nn.kinds()?;
    let mut inputs = vec![
        layout.records(),
        layout.dataset(),
        layout.svr_model(),
        layout.svr_eval(),
        layout.svr_timing(),
    ];
    for &k in &kinds {
        inputs.extend([layout.nn_eval(k), layout.nn_timing(k)]);
    }
    let key = stage_key(&[Stage::Report.name(), &cfg.hash()], &inputs)?;
    let stems = [COMPARISON_STEM, SVR_REPORT_STEM];
    let mut outputs: Vec<PathBuf> = stems
        .iter()
        .flat_map(|s| ["kv", "timings.kv", "txt"].map(|ext| layout.root.join(format!("{s}.{ext}"))))
        .collect();
    outputs.extend([layout.curve(), crate::report::predicted_path(&layout.curve())]);
    if stamp_is_current(layout, Stage::Report.name(), &key, &outputs) {
        return Ok(StageOutcome::Skipped);
    }
    let ds = read_dataset(&layout.dataset()).map_err(PipelineError::reading)?;
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let nn = nn_report(cfg, layout, ds.len(), timestamp)?;
    nn.save(&layout.root, COMPARISON_STEM)?;

    let eval = KvDoc::parse(&read_text(&layout.svr_eval())?, EVAL_FORMAT, 1)?;
    let timing = KvDoc::parse(&read_text(&layout.svr_timing())?, TIMING_FORMAT, 1)?;
    let mut svr = build_report(vec![EvalRow {
        name: SVR_ROW_NAME.to_string(),
        epochs: 0,
        wall_time_seconds: timing.f64("wall_time_seconds")?,
        mse: eval.f64("held_out_mse")?,
    }])?
    .with_fingerprint(fingerprint(cfg, ds.len()));
    svr.timestamp = timestamp;
    svr.save(&layout.root, SVR_REPORT_STEM)?;

    let model = SvrModel::load(&layout.svr_model())?;
    export_plot_data(cfg, layout, &ds, &model, &layout.curve())?;
    write_stamp(layout, Stage::Report.name(), &key, &outputs)?;
    Ok(StageOutcome::Ran)
}

/// Runs the requested stages in the fixed pipeline order.
pub fn run_pipeline(
    cfg: &RunConfig,
    stages: &[Stage],
    mut log: impl FnMut(Stage, StageOutcome),
) -> Result<Vec<(Stage, StageOutcome)>, PipelineError> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.out_dir);
    let mut done = Vec::new();
    for stage in Stage::ALL {
        if !stages.contains(&stage) {
            continue;
        }
        let outcome = match stage {
            Stage::Ingest => run_ingest(cfg, &layout)?,
            Stage::Label => run_label(cfg, &layout)?,
            Stage::TrainSvr => run_train_svr(cfg, &layout)?,
            Stage::SweepNn => run_sweep(cfg, &layout)?,
            Stage::Report => run_report(cfg, &layout)?,
        };
        log(stage, outcome);
        done.push((stage, outcome));
    }
    Ok(done)
}
