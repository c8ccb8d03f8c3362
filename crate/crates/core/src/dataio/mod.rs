//! Meteorological record ingestion, feature normalization, dataset splitting
//! and the synthetic data generator.
//!
//! Feature order is frozen: see [`FEATURE_NAMES`]. Timestamp parts enter the
//! models as raw numbers (no cyclic encoding).

mod dataset;
mod ingest;
mod normalize;
mod split;
mod synth;

pub use dataset::{read_dataset, stats_path, write_dataset, LabeledDataset};
pub(crate) use dataset::{read_stats as dataset_stats_reader, write_stats as dataset_stats_writer};
pub use ingest::{ingest_csv, write_records_csv, IngestMode, Ingested, Schema, SkippedRow};
pub use normalize::{normalize, NormalizationStats};
pub use split::{split_dataset, SplitFractions, SplitMode, SplitTag};
pub use synth::{nrel_surrogate, surrogate_spec, synth_dataset, SURROGATE_ROWS, SURROGATE_SEED};

use thiserror::Error;

use crate::artifact::FormatError;

/// Number of model input features.
pub const N_FEATURES: usize = 9;

/// Canonical feature order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "month",
    "day",
    "hour",
    "minute",
    "wind_speed",
    "air_temperature",
    "air_pressure",
    "wind_direction",
    "density",
];

/// Column of [`FEATURE_NAMES`] holding hub-height wind speed.
pub const WIND_SPEED: usize = 4;

pub type FeatureVector = [f64; N_FEATURES];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row} (line {line}): {msg}")]
    Parse { row: usize, line: u64, msg: String },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("feature `{0}` is constant over the training rows")]
    DegenerateColumn(String),
    #[error("need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("bad split fractions: {0}")]
    BadFractions(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid generator parameter: {0}")]
    BadParameter(String),
    #[error("malformed dataset file: {0}")]
    Format(#[from] FormatError),
}

/// One timestamped meteorological sample plus observed power output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetRecord {
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    /// m/s
    pub wind_speed: f64,
    /// Kelvin
    pub air_temperature: f64,
    /// Pascals
    pub air_pressure: f64,
    /// Degrees, normalized into `[0, 360)`.
    pub wind_direction: f64,
    /// kg/m³ at hub height
    pub density: f64,
    /// MW
    pub power: f64,
}

impl MetRecord {
    /// Feature vector in [`FEATURE_NAMES`] order (not normalized).
    pub fn features(&self) -> FeatureVector {
        [
            self.month as f64,
            self.day as f64,
            self.hour as f64,
            self.minute as f64,
            self.wind_speed,
            self.air_temperature,
            self.air_pressure,
            self.wind_direction,
            self.density,
        ]
    }

    /// Checks the documented field ranges and finiteness.
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=12).contains(&self.month) {
            return Err(format!("month {} out of 1..=12", self.month));
        }
        if !(1..=31).contains(&self.day) {
            return Err(format!("day {} out of 1..=31", self.day));
        }
        if self.hour > 23 {
            return Err(format!("hour {} out of 0..=23", self.hour));
        }
        if self.minute > 59 {
            return Err(format!("minute {} out of 0..=59", self.minute));
        }
        let reals = [
            ("wind_speed", self.wind_speed),
            ("air_temperature", self.air_temperature),
            ("air_pressure", self.air_pressure),
            ("wind_direction", self.wind_direction),
            ("density", self.density),
            ("power", self.power),
        ];
        for (name, v) in reals {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        if self.wind_speed < 0.0 {
            return Err("wind_speed is negative".into());
        }
        if self.air_temperature <= 0.0 || self.air_pressure <= 0.0 || self.density <= 0.0 {
            return Err("temperature, pressure and density must be positive".into());
        }
        if self.power < 0.0 {
            return Err("power is negative".into());
        }
        if !(0.0..360.0).contains(&self.wind_direction) {
            return Err(format!("wind_direction {} outside [0, 360)", self.wind_direction));
        }
        Ok(())
    }
}

/// Wraps a bearing into `[0, 360)`.
pub fn wrap_direction(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    // rem_euclid of a tiny negative number rounds up to exactly 360
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}
