//! Operating regions, the ideal parametric power curve and the method-of-bins
//! empirical curve.
//!
//! Region boundaries are inclusive to the normal band: a wind speed exactly
//! at cut-in or cut-out is Region 2.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PowerCurveError {
    #[error("invalid turbine spec: {0}")]
    InvalidSpec(String),
    #[error("no samples to bin")]
    EmptyInput,
    #[error("bin width must be positive and finite, got {0}")]
    BadBinWidth(f64),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

/// Power-curve geometry. Speeds in m/s, power in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurbineSpec {
    pub cut_in: f64,
    pub rated_speed: f64,
    pub cut_out: f64,
    pub rated_power: f64,
}

impl TurbineSpec {
    pub const DEFAULT_CUT_IN: f64 = 3.0;
    pub const DEFAULT_RATED_SPEED: f64 = 13.0;
    pub const DEFAULT_CUT_OUT: f64 = 25.0;

    pub fn new(cut_in: f64, rated_speed: f64, cut_out: f64, rated_power: f64) -> Result<Self, PowerCurveError> {
        let spec = TurbineSpec {
            cut_in,
            rated_speed,
            cut_out,
            rated_power,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Default thresholds with the given rated power.
    pub fn with_rated_power(rated_power: f64) -> Result<Self, PowerCurveError> {
        Self::new(Self::DEFAULT_CUT_IN, Self::DEFAULT_RATED_SPEED, Self::DEFAULT_CUT_OUT, rated_power)
    }

    pub fn validate(&self) -> Result<(), PowerCurveError> {
        let all_finite = [self.cut_in, self.rated_speed, self.cut_out, self.rated_power]
            .iter()
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(PowerCurveError::InvalidSpec("non-finite field".into()));
        }
        if !(0.0 < self.cut_in && self.cut_in < self.rated_speed && self.rated_speed < self.cut_out) {
            return Err(PowerCurveError::InvalidSpec(format!(
                "need 0 < cut_in < rated_speed < cut_out, got {} / {} / {}",
                self.cut_in, self.rated_speed, self.cut_out
            )));
        }
        if self.rated_power <= 0.0 {
            return Err(PowerCurveError::InvalidSpec(format!(
                "rated_power must be positive, got {}",
                self.rated_power
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// Below cut-in.
    Region1,
    /// Normal operating band, `cut_in ..= cut_out`.
    Region2,
    /// Above cut-out.
    Region3,
}

pub fn classify_region(wind_speed: f64, spec: &TurbineSpec) -> Region {
    if wind_speed < spec.cut_in {
        Region::Region1
    } else if wind_speed > spec.cut_out {
        Region::Region3
    } else {
        Region::Region2
    }
}

/// 1 for Region 1 or Region 3, 0 for normal operation.
pub fn is_fault(wind_speed: f64, spec: &TurbineSpec) -> u8 {
    match classify_region(wind_speed, spec) {
        Region::Region2 => 0,
        Region::Region1 | Region::Region3 => 1,
    }
}

/// Ideal output in MW: zero outside the operating band, a cubic ramp from
/// cut-in to rated speed, then flat at rated power up to cut-out.
pub fn ideal_power(wind_speed: f64, spec: &TurbineSpec) -> f64 {
    let v = wind_speed;
    if v < spec.cut_in || v > spec.cut_out {
        0.0
    } else if v >= spec.rated_speed {
        spec.rated_power
    } else {
        let ci3 = spec.cut_in.powi(3);
        spec.rated_power * (v.powi(3) - ci3) / (spec.rated_speed.powi(3) - ci3)
    }
}

/// Largest slope of the ideal curve inside the operating band (at the rated
/// speed end of the cubic ramp), MW per m/s.
pub fn max_ramp_slope(spec: &TurbineSpec) -> f64 {
    let ci3 = spec.cut_in.powi(3);
    3.0 * spec.rated_power * spec.rated_speed.powi(2) / (spec.rated_speed.powi(3) - ci3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub center: f64,
    pub mean_power: f64,
    pub count: usize,
}

/// Method-of-bins curve: mean power per fixed-width wind-speed bin, sorted
/// by center, empty bins omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCurve {
    pub bin_width: f64,
    pub bins: Vec<Bin>,
}

impl BinnedCurve {
    pub const DEFAULT_BIN_WIDTH: f64 = 0.5;

    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// `[lo, hi)` speed range covered by a bin.
    pub fn bin_range(&self, bin: &Bin) -> (f64, f64) {
        (bin.center - 0.5 * self.bin_width, bin.center + 0.5 * self.bin_width)
    }
}

/// Groups `(wind_speed, power)` samples by `floor(v / bin_width)`.
///
/// Within each bin the powers are summed in sorted order, so the result is
/// exactly invariant to input ordering.
pub fn bin_curve(samples: &[(f64, f64)], bin_width: f64) -> Result<BinnedCurve, PowerCurveError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(PowerCurveError::BadBinWidth(bin_width));
    }
    if samples.is_empty() {
        return Err(PowerCurveError::EmptyInput);
    }
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (i, &(v, p)) in samples.iter().enumerate() {
        if !v.is_finite() || !p.is_finite() {
            return Err(PowerCurveError::NonFinite(i));
        }
        let key = (v / bin_width).floor() as i64;
        groups.entry(key).or_default().push(p);
    }
    let bins = groups
        .into_iter()
        .map(|(key, mut powers)| {
            powers.sort_by(f64::total_cmp);
            let sum: f64 = powers.iter().sum();
            Bin {
                center: (key as f64 + 0.5) * bin_width,
                mean_power: sum / powers.len() as f64,
                count: powers.len(),
            }
        })
        .collect();
    Ok(BinnedCurve { bin_width, bins })
}
