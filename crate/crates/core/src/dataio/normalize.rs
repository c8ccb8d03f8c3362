use super::{DataError, FeatureVector, MetRecord, FEATURE_NAMES, N_FEATURES};

/// Train-split statistics: per-feature mean and population standard
/// deviation, and the power range used for min-max scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub feature_mean: FeatureVector,
    pub feature_std: FeatureVector,
    pub power_min: f64,
    pub power_max: f64,
}

impl NormalizationStats {
    /// Fits statistics on the records selected by `train_mask`.
    pub fn fit(records: &[MetRecord], train_mask: &[bool]) -> Result<Self, DataError> {
        if records.len() != train_mask.len() {
            return Err(DataError::LengthMismatch(format!(
                "{} records but {} mask entries",
                records.len(),
                train_mask.len()
            )));
        }
        let train: Vec<&MetRecord> = records.iter().zip(train_mask).filter_map(|(r, &m)| m.then_some(r)).collect();
        if train.len() < 2 {
            return Err(DataError::InsufficientData {
                needed: 2,
                got: train.len(),
            });
        }
        let n = train.len() as f64;
        let mut mean = [0.0; N_FEATURES];
        for r in &train {
            for (m, x) in mean.iter_mut().zip(r.features()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; N_FEATURES];
        for r in &train {
            for (j, x) in r.features().iter().enumerate() {
                let d = x - mean[j];
                var[j] += d * d;
            }
        }
        let mut std = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            std[j] = (var[j] / n).sqrt();
            if std[j] <= 1e-12 * mean[j].abs().max(1.0) {
                return Err(DataError::DegenerateColumn(FEATURE_NAMES[j].into()));
            }
        }
        let power_min = train.iter().map(|r| r.power).fold(f64::INFINITY, f64::min);
        let power_max = train.iter().map(|r| r.power).fold(f64::NEG_INFINITY, f64::max);
        if power_max - power_min <= 1e-12 * power_max.abs().max(1.0) {
            return Err(DataError::DegenerateColumn("power".into()));
        }
        Ok(NormalizationStats {
            feature_mean: mean,
            feature_std: std,
            power_min,
            power_max,
        })
    }

    pub fn normalize_features(&self, raw: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            out[j] = (raw[j] - self.feature_mean[j]) / self.feature_std[j];
        }
        out
    }

    pub fn denormalize_features(&self, z: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            out[j] = z[j] * self.feature_std[j] + self.feature_mean[j];
        }
        out
    }

    pub fn normalize_feature(&self, j: usize, raw: f64) -> f64 {
        (raw - self.feature_mean[j]) / self.feature_std[j]
    }

    pub fn denormalize_feature(&self, j: usize, z: f64) -> f64 {
        z * self.feature_std[j] + self.feature_mean[j]
    }

    /// Min-max power scaling; train rows land in `[0, 1]`, other rows may
    /// fall slightly outside.
    pub fn normalize_power(&self, mw: f64) -> f64 {
        (mw - self.power_min) / (self.power_max - self.power_min)
    }

    pub fn denormalize_power(&self, scaled: f64) -> f64 {
        scaled * (self.power_max - self.power_min) + self.power_min
    }

    /// MW per normalized unit.
    pub fn power_scale(&self) -> f64 {
        self.power_max - self.power_min
    }
}

/// Z-scores the features and min-max scales power using statistics fitted
/// on the `train_mask` rows only.
pub fn normalize(records: &[MetRecord], train_mask: &[bool]) -> Result<(Vec<FeatureVector>, Vec<f64>, NormalizationStats), DataError> {
    let stats = NormalizationStats::fit(records, train_mask)?;
    let features = records.iter().map(|r| stats.normalize_features(&r.features())).collect();
    let power = records.iter().map(|r| stats.normalize_power(r.power)).collect();
    Ok((features, power, stats))
}
