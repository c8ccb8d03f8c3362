//! Run configuration: one TOML file, optionally patched by `key=value`
//! overrides and the output-directory environment variable.
//!
//! Precedence, lowest first: built-in defaults, the file, `TURBINE_OUT_DIR`,
//! `--set` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataio::{IngestMode, Schema, SplitFractions, SplitMode};
use crate::neuralnet::{ArchKind, ArchOverrides, TrainConfig};
use crate::powercurve::TurbineSpec;
use crate::svr::SvrHyper;

/// Overrides `out_dir` when set and non-empty.
pub const OUT_DIR_ENV: &str = "TURBINE_OUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("bad override {0:?}: expected key=value")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub rows: usize,
    pub noise_sigma: f64,
    pub fault_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rows: crate::dataio::SURROGATE_ROWS,
            noise_sigma: 0.05,
            fault_fraction: 0.15,
            seed: crate::dataio::SURROGATE_SEED,
        }
    }
}

/// Where the met data comes from: a CSV file, or the generator when `path`
/// is absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub mode: IngestMode,
    pub schema: Schema,
    pub synthetic: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub mode: SplitMode,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: SplitFractions::NN.train,
            val: SplitFractions::NN.val,
            test: SplitFractions::NN.test,
            mode: SplitMode::default(),
            seed: 42,
        }
    }
}

impl SplitConfig {
    pub fn fractions(&self) -> SplitFractions {
        SplitFractions {
            train: self.train,
            val: self.val,
            test: self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    pub c: f64,
    /// Tube half-width; `0.1 ·` std of the training targets when absent.
    pub epsilon: Option<f64>,
    pub kernel_scale: f64,
    pub tolerance: f64,
    pub max_passes: usize,
    pub seed: u64,
    /// Folds for cross-validation on the training rows; 0 skips it.
    pub cv_folds: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig {
            c: SvrHyper::DEFAULT_C,
            epsilon: None,
            kernel_scale: SvrHyper::DEFAULT_KERNEL_SCALE,
            tolerance: SvrHyper::DEFAULT_TOLERANCE,
            max_passes: SvrHyper::DEFAULT_MAX_PASSES,
            seed: 0,
            cv_folds: 5,
        }
    }
}

impl SvrConfig {
    pub fn hyper_for(&self, targets: &[f64]) -> SvrHyper {
        let mut h = SvrHyper::defaults_for(targets);
        h.c = self.c;
        if let Some(e) = self.epsilon {
            h.epsilon = e;
        }
        h.kernel_scale = self.kernel_scale;
        h.tolerance = self.tolerance;
        h.max_passes = self.max_passes;
        h
    }
}

/// Per-architecture section: topology overrides plus training overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSection {
    pub hidden: Option<Vec<usize>>,
    pub window: Option<usize>,
    pub kernel_width: Option<usize>,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnConfig {
    /// Training defaults shared by every architecture.
    pub train: TrainConfig,
    /// Seed of the parameter initialization.
    pub init_seed: u64,
    /// Architectures trained by the sweep, by short name.
    pub archs: Vec<String>,
    /// Concurrent trainings in the sweep.
    pub jobs: usize,
    pub ff: ArchSection,
    pub rnn: ArchSection,
    pub cnn: ArchSection,
    pub sae: ArchSection,
    pub nar: ArchSection,
}

impl Default for NnConfig {
    fn default() -> Self {
        NnConfig {
            train: TrainConfig::default(),
            init_seed: 1,
            archs: ArchKind::ALL.iter().map(|k| k.short().to_string()).collect(),
            jobs: 1,
            ff: ArchSection::default(),
            rnn: ArchSection::default(),
            cnn: ArchSection::default(),
            sae: ArchSection::default(),
            nar: ArchSection::default(),
        }
    }
}

impl NnConfig {
    pub fn section(&self, kind: ArchKind) -> &ArchSection {
        match kind {
            ArchKind::Feedforward => &self.ff,
            ArchKind::Recurrent => &self.rnn,
            ArchKind::Convolutional => &self.cnn,
            ArchKind::SparseAutoencoder => &self.sae,
            ArchKind::NarTimeSeries => &self.nar,
        }
    }

    pub fn overrides(&self, kind: ArchKind) -> ArchOverrides {
        let s = self.section(kind);
        ArchOverrides {
            hidden: s.hidden.clone(),
            window: s.window,
            kernel_width: s.kernel_width,
            rho: s.rho,
            beta: s.beta,
        }
    }

    pub fn train_config(&self, kind: ArchKind) -> TrainConfig {
        let s = self.section(kind);
        let d = self.train;
        TrainConfig {
            max_epochs: s.max_epochs.unwrap_or(d.max_epochs),
            patience: s.patience.unwrap_or(d.patience),
            learning_rate: s.learning_rate.unwrap_or(d.learning_rate),
            momentum: s.momentum.unwrap_or(d.momentum),
            batch_size: s.batch_size.unwrap_or(d.batch_size),
            seed: s.seed.unwrap_or(d.seed),
        }
    }

    /// Architectures in the sweep, in the canonical order.
    pub fn kinds(&self) -> Result<Vec<ArchKind>, ConfigError> {
        let mut kinds = Vec::new();
        for name in &self.archs {
            let k = ArchKind::from_short(name).ok_or_else(|| ConfigError::Invalid(format!("nn.archs: unknown architecture {name:?}")))?;
            if kinds.contains(&k) {
                return Err(ConfigError::Invalid(format!("nn.archs: {name} listed twice")));
            }
            kinds.push(k);
        }
        kinds.sort();
        Ok(kinds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub turbine: TurbineSpec,
    pub split: SplitConfig,
    pub svr: SvrConfig,
    pub nn: NnConfig,
    /// Bin width of the exported empirical curve, m/s.
    pub bin_width: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("turbine-out"),
            data: DataConfig::default(),
            turbine: crate::dataio::surrogate_spec(),
            split: SplitConfig::default(),
            svr: SvrConfig::default(),
            nn: NnConfig::default(),
            bin_width: crate::powercurve::BinnedCurve::DEFAULT_BIN_WIDTH,
        }
    }
}

/// Sets `a.b.c = value` inside a TOML table, creating tables on the way.
/// The value is read as a TOML literal, falling back to a bare string.
fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(assignment.to_string()))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::BadOverride(assignment.to_string()));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::BadOverride(format!("{key}: {part} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses TOML text, applies the overrides, then validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or defaults when `None`), honouring [`OUT_DIR_ENV`]
    /// and the `key=value` overrides. Relative data paths are resolved
    /// against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.display().to_string(),
                source,
            })?,
            None => String::new(),
        };
        let mut all = Vec::new();
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            if !dir.is_empty() {
                all.push(format!("out_dir = {}", toml::Value::String(dir)));
            }
        }
        all.extend(overrides.iter().cloned());
        let mut cfg = Self::from_toml(&text, &all)?;
        if let (Some(base), Some(data)) = (path.and_then(Path::parent), cfg.data.path.as_mut()) {
            if data.is_relative() {
                *data = base.join(&*data);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |m: String| Err(ConfigError::Invalid(m));
        if self.out_dir.as_os_str().is_empty() {
            return inv("out_dir is empty".into());
        }
        if let Err(e) = self.turbine.validate() {
            return inv(format!("turbine: {e}"));
        }
        if let Err(e) = self.split.fractions().validate() {
            return inv(format!("split: {e}"));
        }
        let syn = &self.data.synthetic;
        if self.data.path.is_none() {
            if syn.rows == 0 {
                return inv("data.synthetic.rows must be >= 1".into());
            }
            if !(syn.noise_sigma >= 0.0 && syn.noise_sigma.is_finite()) || !(0.0..=1.0).contains(&syn.fault_fraction) {
                return inv("data.synthetic: need noise_sigma >= 0 and fault_fraction in [0, 1]".into());
            }
        }
        if let Err(e) = self.svr.hyper_for(&[0.0, 1.0]).validate() {
            return inv(format!("svr: {e}"));
        }
        if self.svr.cv_folds == 1 {
            return inv("svr.cv_folds must be 0 (off) or >= 2".into());
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return inv(format!("bin_width must be positive, got {}", self.bin_width));
        }
        if self.nn.jobs == 0 {
            return inv("nn.jobs must be >= 1".into());
        }
        for kind in self.nn.kinds()? {
            if let Err(e) = self.nn.train_config(kind).validate() {
                return inv(format!("nn.{}: {e}", kind.short()));
            }
            if let Err(e) = crate::neuralnet::build_arch(kind, crate::dataio::N_FEATURES, &self.nn.overrides(kind), 0) {
                return inv(format!("nn.{}: {e}", kind.short()));
            }
        }
        Ok(())
    }

    /// Canonical TOML of everything that affects results (no paths).
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.data.path = None;
        // jobs changes scheduling only
        c.nn.jobs = 1;
        toml::to_string(&c).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        short_hash(self.canonical().as_bytes())
    }
}

/// 16-hex-digit SHA-256 prefix.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

/// Stable listing of a config for `--dump-config`-style display.
pub fn describe(cfg: &RunConfig) -> BTreeMap<&'static str, String> {
    let mut m = BTreeMap::new();
    m.insert("out_dir", cfg.out_dir.display().to_string());
    m.insert(
        "data",
        cfg.data
            .path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| format!("synthetic ({} rows, seed {})", cfg.data.synthetic.rows, cfg.data.synthetic.seed)),
    );
    m.insert("config_hash", cfg.hash());
    m
}
