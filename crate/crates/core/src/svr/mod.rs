//! Gaussian-kernel ε-insensitive support vector regression.
//!
//! Training solves the dual with the pairwise solver in `smo`; prediction is
//! `Σ coefᵢ · k(svᵢ, x) + bias` over the retained support vectors. The
//! default kernel scale is `√9 = 3`, the "medium Gaussian" preset for nine
//! standardized features.

mod cv;
mod kernel;
mod smo;

pub use cv::{fold_assignment, kfold_cv, kfold_cv_split, CvReport};
pub use kernel::{gaussian_kernel, gram_matrix, DENSE_GRAM_MAX_ROWS};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{write_atomic, FormatError, KvDoc, KvWriter};
use crate::dataio::{FeatureVector, LabeledDataset, NormalizationStats, SplitTag, N_FEATURES};
use crate::exec;

const MODEL_FORMAT: &str = "turbine-svr-model";
const MODEL_VERSION: u32 = 1;
/// Coefficients at or below this magnitude are dropped after training.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SvrError {
    #[error("invalid hyperparameter: {0}")]
    BadHyper(String),
    #[error("need at least {needed} training rows, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("k-fold needs n >= k (n = {n}, k = {k})")]
    TooFewSamples { n: usize, k: usize },
    #[error("feature and target lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite training value at row {0}")]
    NonFinite(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrHyper {
    /// Box constraint `C`.
    pub c: f64,
    /// Half-width of the insensitive tube.
    pub epsilon: f64,
    pub kernel_scale: f64,
    /// KKT violation gap at which the solver stops.
    pub tolerance: f64,
    /// Iteration budget in units of the training-set size.
    pub max_passes: usize,
}

impl SvrHyper {
    pub const DEFAULT_C: f64 = 1.0;
    pub const DEFAULT_KERNEL_SCALE: f64 = 3.0;
    pub const DEFAULT_TOLERANCE: f64 = 1e-3;
    pub const DEFAULT_MAX_PASSES: usize = 10_000;

    /// Defaults with `ε = 0.1 · stddev(targets)`.
    pub fn defaults_for(targets: &[f64]) -> Self {
        SvrHyper {
            c: Self::DEFAULT_C,
            epsilon: 0.1 * population_std(targets),
            kernel_scale: Self::DEFAULT_KERNEL_SCALE,
            tolerance: Self::DEFAULT_TOLERANCE,
            max_passes: Self::DEFAULT_MAX_PASSES,
        }
    }

    pub fn validate(&self) -> Result<(), SvrError> {
        let bad = |m: String| Err(SvrError::BadHyper(m));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("C must be positive, got {}", self.c));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.kernel_scale > 0.0 && self.kernel_scale.is_finite()) {
            return bad(format!("kernel_scale must be positive, got {}", self.kernel_scale));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.max_passes == 0 {
            return bad("max_passes must be >= 1".into());
        }
        Ok(())
    }
}

pub(crate) fn population_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub support_vectors: Vec<FeatureVector>,
    /// `α − α*` per support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub hyper: SvrHyper,
    pub stats: Option<NormalizationStats>,
    /// Solver iterations used (pair updates).
    pub iterations: usize,
    /// False if the iteration budget ran out before the KKT gap closed.
    pub converged: bool,
    /// Final value of the minimized dual objective.
    pub dual_objective: f64,
}

/// Fits on raw (already normalized) rows.
pub fn fit(xs: &[FeatureVector], targets: &[f64], hyper: &SvrHyper, seed: u64) -> Result<SvrModel, SvrError> {
    hyper.validate()?;
    if xs.len() != targets.len() {
        return Err(SvrError::LengthMismatch(xs.len(), targets.len()));
    }
    if xs.len() < 2 {
        return Err(SvrError::InsufficientData { needed: 2, got: xs.len() });
    }
    if let Some(i) = (0..xs.len()).find(|&i| !targets[i].is_finite() || xs[i].iter().any(|v| !v.is_finite())) {
        return Err(SvrError::NonFinite(i));
    }
    let sol = smo::solve(xs, targets, hyper, seed);
    let (support_vectors, dual_coefficients) = xs
        .iter()
        .zip(&sol.coef)
        .filter(|(_, c)| c.abs() > SUPPORT_THRESHOLD)
        .map(|(x, c)| (*x, *c))
        .unzip();
    Ok(SvrModel {
        support_vectors,
        dual_coefficients,
        bias: -sol.rho,
        hyper: *hyper,
        stats: None,
        iterations: sol.iterations,
        converged: sol.converged,
        dual_objective: sol.objective,
    })
}

/// Trains on the dataset's `Train` rows and attaches its normalization
/// statistics.
pub fn train_svr(ds: &LabeledDataset, hyper: &SvrHyper, seed: u64) -> Result<SvrModel, SvrError> {
    let (xs, ys) = ds.rows(&ds.indices(SplitTag::Train));
    let mut model = fit(&xs, &ys, hyper, seed)?;
    model.stats = Some(ds.stats);
    Ok(model)
}

impl SvrModel {
    /// Normalized power for one normalized feature vector.
    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let scale = self.hyper.kernel_scale;
        let mut acc = 0.0;
        for (sv, c) in self.support_vectors.iter().zip(&self.dual_coefficients) {
            acc += c * gaussian_kernel(sv, x, scale);
        }
        acc + self.bias
    }

    pub fn predict_batch(&self, xs: &[FeatureVector]) -> Vec<f64> {
        exec::map_slice(xs, |x| self.predict(x))
    }

    pub fn n_support(&self) -> usize {
        self.support_vectors.len()
    }

    pub fn to_text(&self) -> String {
        let mut w = KvWriter::new(MODEL_FORMAT, MODEL_VERSION);
        w.comment("prediction = sum_i coef_i * exp(-|sv_i - x|^2 / kernel_scale^2) + bias");
        w.num("c", self.hyper.c);
        w.num("epsilon", self.hyper.epsilon);
        w.num("kernel_scale", self.hyper.kernel_scale);
        w.num("tolerance", self.hyper.tolerance);
        w.int("max_passes", self.hyper.max_passes as i64);
        w.num("bias", self.bias);
        w.int("iterations", self.iterations as i64);
        w.flag("converged", self.converged);
        w.num("dual_objective", self.dual_objective);
        w.flag("has_stats", self.stats.is_some());
        if let Some(stats) = &self.stats {
            crate::dataio::dataset_stats_writer(&mut w, stats);
        }
        w.array("dual_coefficients", &self.dual_coefficients);
        let flat: Vec<f64> = self.support_vectors.iter().flatten().copied().collect();
        w.matrix("support_vectors", self.support_vectors.len(), N_FEATURES, &flat);
        w.finish()
    }

    pub fn from_text(text: &str) -> Result<SvrModel, SvrError> {
        let doc = KvDoc::parse(text, MODEL_FORMAT, MODEL_VERSION)?;
        let hyper = SvrHyper {
            c: doc.f64("c")?,
            epsilon: doc.f64("epsilon")?,
            kernel_scale: doc.f64("kernel_scale")?,
            tolerance: doc.f64("tolerance")?,
            max_passes: doc.usize("max_passes")?,
        };
        hyper.validate()?;
        let stats = if doc.bool("has_stats")? {
            Some(crate::dataio::dataset_stats_reader(&doc)?)
        } else {
            None
        };
        let coef = doc.array("dual_coefficients")?;
        let m = doc.matrix("support_vectors")?;
        if m.cols != N_FEATURES || m.rows != coef.len() {
            return Err(FormatError::BadValue {
                key: "support_vectors".into(),
                msg: format!("shape {}x{} does not match {} coefficients", m.rows, m.cols, coef.len()),
            }
            .into());
        }
        let support_vectors = m
            .data
            .chunks(N_FEATURES)
            .map(|r| {
                let mut v = [0.0; N_FEATURES];
                v.copy_from_slice(r);
                v
            })
            .collect();
        Ok(SvrModel {
            support_vectors,
            dual_coefficients: coef,
            bias: doc.f64("bias")?,
            hyper,
            stats,
            iterations: doc.usize("iterations")?,
            converged: doc.bool("converged")?,
            dual_objective: doc.f64("dual_objective")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SvrError> {
        write_atomic(path, self.to_text().as_bytes()).map_err(|source| SvrError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<SvrModel, SvrError> {
        let text = std::fs::read_to_string(path).map_err(|source| SvrError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }
}
