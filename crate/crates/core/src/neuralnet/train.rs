//! Mini-batch SGD with momentum and validation early stopping.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ArchKind, NetModel, Objective, WindowSet};
use super::windows::make_windows;
use super::NetError;
use crate::dataio::{LabeledDataset, SplitTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 500,
            patience: 6,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::BadConfig(m));
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        // zero is allowed: it freezes the parameters, which is handy in tests
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub epochs_run: usize,
    pub train_loss_per_epoch: Vec<f64>,
    pub val_loss_per_epoch: Vec<f64>,
    pub wall_time_seconds: f64,
    /// 1-based epoch whose parameters were returned; 0 if none finished.
    pub best_epoch: usize,
    /// Unsupervised phase of the sparse autoencoder.
    pub pretrain: Option<Box<TrainTrace>>,
}

impl TrainTrace {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_epoch.checked_sub(1).map(|e| self.val_loss_per_epoch[e])
    }

    /// Epochs over all phases.
    pub fn total_epochs(&self) -> usize {
        self.epochs_run + self.pretrain.as_ref().map_or(0, |p| p.epochs_run)
    }
}

/// Stops once `patience` epochs pass without a strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    epoch: usize,
    best_epoch: usize,
    best: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopCheck {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            epoch: 0,
            best_epoch: 0,
            best: f64::INFINITY,
        }
    }

    /// Records the next epoch's validation loss.
    pub fn observe(&mut self, val_loss: f64) -> StopCheck {
        self.epoch += 1;
        let improved = val_loss < self.best;
        if improved {
            self.best = val_loss;
            self.best_epoch = self.epoch;
        }
        StopCheck {
            improved,
            stop: self.epoch - self.best_epoch >= self.patience,
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

fn phase_loss(model: &NetModel, set: &WindowSet, objective: Objective) -> Result<f64, NetError> {
    model.loss(set, objective)
}

/// Trains the layers flagged in `trainable` on one objective.
///
/// Returns the parameters of the best validation epoch. A non-finite loss or
/// parameter aborts with `DivergenceDetected`.
pub fn train_windows(
    model: &NetModel,
    train: &WindowSet,
    val: &WindowSet,
    config: &TrainConfig,
    objective: Objective,
    trainable: &[bool],
) -> Result<(NetModel, TrainTrace), NetError> {
    config.validate()?;
    if train.is_empty() {
        return Err(NetError::EmptySplit(SplitTag::Train));
    }
    if val.is_empty() {
        return Err(NetError::EmptySplit(SplitTag::Val));
    }
    assert_eq!(trainable.len(), model.layers.len(), "one flag per layer");
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = model.clone();
    let mut best = model.clone();
    let mut velocity: Vec<Vec<f64>> = model.layers.iter().map(|l| vec![0.0; l.params().len()]).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut trace = TrainTrace::default();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = current.loss_and_gradients_at(train, batch, objective)?;
            loss_sum += loss * batch.len() as f64;
            for (li, layer) in current.layers.iter_mut().enumerate() {
                if !trainable[li] {
                    continue;
                }
                for ((p, v), g) in layer.params_mut().iter_mut().zip(&mut velocity[li]).zip(&grads.0[li]) {
                    *v = config.momentum * *v - config.learning_rate * g;
                    *p += *v;
                }
            }
        }
        let train_loss = loss_sum / train.len() as f64;
        trace.train_loss_per_epoch.push(train_loss);
        trace.epochs_run = epoch;
        let val_loss = if train_loss.is_finite() && current.params_finite() {
            phase_loss(&current, val, objective)?
        } else {
            f64::NAN
        };
        trace.val_loss_per_epoch.push(val_loss);
        if !val_loss.is_finite() {
            trace.wall_time_seconds = start.elapsed().as_secs_f64();
            trace.best_epoch = stopper.best_epoch();
            return Err(NetError::DivergenceDetected {
                epoch,
                trace: Box::new(trace),
            });
        }
        let check = stopper.observe(val_loss);
        if check.improved {
            best.layers.clone_from(&current.layers);
        }
        if check.stop {
            break;
        }
    }
    trace.best_epoch = stopper.best_epoch();
    trace.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok((best, trace))
}

/// Trains `model` on the dataset's Train windows with early stopping on Val.
///
/// The sparse autoencoder first fits encoder and decoder on reconstruction
/// (recorded as `trace.pretrain`, monitored on the training windows), then
/// the head alone on the labels. The
/// returned model carries the dataset's normalization stats.
pub fn train(model: &NetModel, ds: &LabeledDataset, config: &TrainConfig) -> Result<(NetModel, TrainTrace), NetError> {
    config.validate()?;
    let start = Instant::now();
    let windows = make_windows(ds, model.window, model.kind)?;
    for tag in [SplitTag::Train, SplitTag::Val] {
        if windows.get(tag).0.is_empty() {
            return Err(NetError::EmptySplit(tag));
        }
    }
    let (mut trained, mut trace) = if model.kind == ArchKind::SparseAutoencoder {
        // Pretraining watches reconstruction on the training windows: a
        // chronological validation block lies in unseen months, so its
        // reconstruction error grows with any fit of the raw timestamps.
        let (pre, pre_trace) = train_windows(
            model,
            &windows.train,
            &windows.train,
            config,
            Objective::Reconstruction,
            &[true, true, false],
        )?;
        let (fine, mut trace) = train_windows(
            &pre,
            &windows.train,
            &windows.val,
            config,
            Objective::Supervised,
            &[false, false, true],
        )?;
        trace.pretrain = Some(Box::new(pre_trace));
        (fine, trace)
    } else {
        let all = vec![true; model.layers.len()];
        train_windows(model, &windows.train, &windows.val, config, Objective::Supervised, &all)?
    };
    trained.stats = Some(ds.stats);
    trace.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok((trained, trace))
}
