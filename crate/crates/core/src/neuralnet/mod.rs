//! From-scratch neural networks for fault classification: dense, Elman and
//! 1-D convolution layers, exact backpropagation, momentum SGD with early
//! stopping, and the five compared architectures.

mod layers;
mod model;
mod persist;
mod train;
mod windows;

pub use layers::{sigmoid, Activation, Conv1d, Dense, Elman, Layer};
pub use model::{build_arch, ArchKind, ArchOverrides, Gradients, NetModel, Objective, Sparsity, WindowSet, DEFAULT_WINDOW};
pub use train::{train, train_windows, EarlyStopping, StopCheck, TrainConfig, TrainTrace};
pub use windows::{make_windows, SplitWindows};

use thiserror::Error;

use crate::artifact::FormatError;
use crate::dataio::SplitTag;

/// Output threshold for the auxiliary confusion counts.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("bad architecture override: {0}")]
    BadOverride(String),
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("input has {got} values, model expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("{0:?} has no reconstruction objective")]
    UnsupportedObjective(ArchKind),
    #[error("{} split has no windows", .0.as_str())]
    EmptySplit(SplitTag),
    #[error("window {window} longer than every split run (longest {longest_run})")]
    WindowTooLong { window: usize, longest_run: usize },
    #[error("training diverged at epoch {epoch}")]
    DivergenceDetected { epoch: usize, trace: Box<TrainTrace> },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Format(#[from] FormatError),
}

/// Confusion counts at `DECISION_THRESHOLD`: `[tn, fp, fn, tp]`.
pub fn confusion(predictions: &[f64], labels: &[f64]) -> [usize; 4] {
    let mut c = [0; 4];
    for (p, y) in predictions.iter().zip(labels) {
        let hit = (*p >= DECISION_THRESHOLD) as usize;
        let truth = (*y >= 0.5) as usize;
        c[truth * 2 + hit] += 1;
    }
    c
}

#[cfg(test)]
mod tests;
