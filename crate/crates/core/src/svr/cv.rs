use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{fit, SvrError, SvrHyper};
use crate::dataio::{FeatureVector, LabeledDataset, SplitTag};
use crate::exec;
use crate::report::mse;

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    /// Held-out MSE per fold, normalized power units.
    pub fold_mses: Vec<f64>,
    pub mean_mse: f64,
    /// Sample standard deviation of `fold_mses`.
    pub std_mse: f64,
    /// Held-out row positions (into the input slices) per fold.
    pub folds: Vec<Vec<usize>>,
}

/// Seeded k-fold partition: a permutation cut into `k` folds whose sizes
/// differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..k)
        .map(|f| {
            let mut fold = order[f * n / k..(f + 1) * n / k].to_vec();
            fold.sort_unstable();
            fold
        })
        .collect()
}

/// Each fold trains on the remaining rows (in their original order) with
/// the same `hyper` and `seed`. Folds run in parallel; the report is
/// identical to a sequential run.
pub fn kfold_cv(xs: &[FeatureVector], ys: &[f64], k: usize, hyper: &SvrHyper, seed: u64) -> Result<CvReport, SvrError> {
    hyper.validate()?;
    if xs.len() != ys.len() {
        return Err(SvrError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if k < 2 || n < k {
        return Err(SvrError::TooFewSamples { n, k });
    }
    let folds = fold_assignment(n, k, seed);
    let results = exec::map_slice(&folds, |held_out| -> Result<f64, SvrError> {
        let mut is_held = vec![false; n];
        held_out.iter().for_each(|&i| is_held[i] = true);
        let train: Vec<usize> = (0..n).filter(|&i| !is_held[i]).collect();
        let tx: Vec<FeatureVector> = train.iter().map(|&i| xs[i]).collect();
        let ty: Vec<f64> = train.iter().map(|&i| ys[i]).collect();
        let model = fit(&tx, &ty, hyper, seed)?;
        let hx: Vec<FeatureVector> = held_out.iter().map(|&i| xs[i]).collect();
        let hy: Vec<f64> = held_out.iter().map(|&i| ys[i]).collect();
        Ok(mse(&model.predict_batch(&hx), &hy).expect("non-empty fold"))
    });
    let fold_mses = results.into_iter().collect::<Result<Vec<f64>, _>>()?;
    let mean_mse = fold_mses.iter().sum::<f64>() / k as f64;
    let var = fold_mses.iter().map(|m| (m - mean_mse).powi(2)).sum::<f64>() / (k - 1) as f64;
    Ok(CvReport {
        fold_mses,
        mean_mse,
        std_mse: var.sqrt(),
        folds,
    })
}

/// k-fold CV over the rows of one split (normally `Train`).
pub fn kfold_cv_split(ds: &LabeledDataset, tag: SplitTag, k: usize, hyper: &SvrHyper, seed: u64) -> Result<CvReport, SvrError> {
    let (xs, ys) = ds.rows(&ds.indices(tag));
    kfold_cv(&xs, &ys, k, hyper, seed)
}
