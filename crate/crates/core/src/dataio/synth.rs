//! Seeded synthetic meteorological series for tests and the paper-scale
//! surrogate run.
//!
//! Wind speed follows a persistent latent Gaussian AR(1) process pushed
//! through its CDF to a uniform `u`, then through the quantile function of a
//! Weibull(k = 2) law whose scale is stretched so that `fault_fraction` of
//! the mass lies outside `[cut_in, cut_out]`. Below the smallest share a
//! Weibull can leave outside the band, the best scale is kept and both tails
//! are shrunk proportionally. Consecutive samples stay correlated, as real
//! hub-height wind does.

use std::f64::consts::{PI, SQRT_2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erf;

use super::{wrap_direction, DataError, MetRecord};
use crate::powercurve::{ideal_power, TurbineSpec};

/// Rows in the NREL 2012 site file, and in the shipped surrogate.
pub const SURROGATE_ROWS: usize = 29_736;
pub const SURROGATE_SEED: u64 = 2012;

/// Lag-one correlation of the latent wind process at a 10-minute step.
const PERSISTENCE_10MIN: f64 = 0.97;
const WEIBULL_SHAPE: f64 = 2.0;
const MINUTES_2012: usize = 366 * 24 * 60;
const DAYS_2012: [u32; 12] = [31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
const GAS_CONSTANT_DRY_AIR: f64 = 287.05;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / SQRT_2))
}

/// Weibull law written with `x = λ^−k`: `F(v) = 1 − exp(−x vᵏ)`, plus the
/// tail masses actually used by the quantile map.
#[derive(Debug, Clone, Copy)]
struct WindLaw {
    x: f64,
    cut_in: f64,
    cut_out: f64,
    low_mass: f64,
    high_mass: f64,
}

impl WindLaw {
    fn cdf(&self, v: f64) -> f64 {
        1.0 - (-self.x * v.powf(WEIBULL_SHAPE)).exp()
    }

    fn quantile(&self, p: f64) -> f64 {
        (-(1.0 - p).ln() / self.x).powf(1.0 / WEIBULL_SHAPE)
    }

    fn new(spec: &TurbineSpec, fault_fraction: f64) -> Self {
        let (a, b) = (spec.cut_in.powf(WEIBULL_SHAPE), spec.cut_out.powf(WEIBULL_SHAPE));
        let outside = |x: f64| 1.0 - (-a * x).exp() + (-b * x).exp();
        // the outside share is minimal where a·e^(−ax) = b·e^(−bx)
        let x_min = (b / a).ln() / (b - a);
        let g_min = outside(x_min);
        let (x, ratio) = if fault_fraction <= g_min || fault_fraction >= 1.0 {
            (x_min, fault_fraction / g_min)
        } else {
            // larger x moves mass below cut-in; outside(x) rises from g_min
            let mut lo = x_min;
            let mut hi = 2.0 * x_min;
            while outside(hi) < fault_fraction {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if outside(mid) < fault_fraction {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (0.5 * (lo + hi), 1.0)
        };
        let mut law = WindLaw {
            x,
            cut_in: spec.cut_in,
            cut_out: spec.cut_out,
            low_mass: 0.0,
            high_mass: 0.0,
        };
        law.low_mass = ratio * law.cdf(spec.cut_in);
        law.high_mass = ratio * (1.0 - law.cdf(spec.cut_out));
        law
    }

    fn speed(&self, u: f64) -> f64 {
        let (fa, fb) = (self.cdf(self.cut_in), self.cdf(self.cut_out));
        let inside = 1.0 - self.low_mass - self.high_mass;
        if u < self.low_mass {
            self.quantile(fa * u / self.low_mass).min(self.cut_in.next_down())
        } else if u >= 1.0 - self.high_mass && self.high_mass > 0.0 {
            let r = ((u - (1.0 - self.high_mass)) / self.high_mass).min(1.0 - 1e-12);
            self.quantile(fb + r * (1.0 - fb)).max(self.cut_out.next_up())
        } else {
            let r = if inside > 0.0 {
                ((u - self.low_mass) / inside).clamp(0.0, 1.0)
            } else {
                0.5
            };
            self.quantile(fa + r * (fb - fa)).clamp(self.cut_in, self.cut_out)
        }
    }
}

/// `(month, day, hour, minute)` of a minute offset into 2012, wrapping
/// around the year.
fn calendar(minute_of_year: usize) -> (u8, u8, u8, u8) {
    let m = minute_of_year % MINUTES_2012;
    let mut day_of_year = (m / 1440) as u32;
    let rem = m % 1440;
    let mut month = 0;
    while day_of_year >= DAYS_2012[month] {
        day_of_year -= DAYS_2012[month];
        month += 1;
    }
    (month as u8 + 1, day_of_year as u8 + 1, (rem / 60) as u8, (rem % 60) as u8)
}

/// Generates `n` chronologically ordered records.
///
/// Power is `ideal_power(v) + N(0, noise_sigma · rated_power)` clipped at
/// zero. The sampling cadence is ten minutes, stretched when `n` is small so
/// the series spans the whole year and no timestamp column is constant.
pub fn synth_dataset(spec: &TurbineSpec, n: usize, noise_sigma: f64, fault_fraction: f64, seed: u64) -> Result<Vec<MetRecord>, DataError> {
    spec.validate().map_err(|e| DataError::BadParameter(e.to_string()))?;
    if n == 0 {
        return Err(DataError::BadParameter("n must be at least 1".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(DataError::BadParameter(format!("noise_sigma {noise_sigma}")));
    }
    if !(0.0..=1.0).contains(&fault_fraction) {
        return Err(DataError::BadParameter(format!("fault_fraction {fault_fraction}")));
    }

    let law = WindLaw::new(spec, fault_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let cadence = (MINUTES_2012 / n).max(10);
    let persistence = PERSISTENCE_10MIN.powf(cadence as f64 / 10.0);
    let innovation = (1.0 - persistence * persistence).sqrt();

    let mut latent = gauss();
    let mut direction = 270.0;
    let mut pressure_anomaly = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            latent = persistence * latent + innovation * gauss();
        }
        let wind_speed = law.speed(std_normal_cdf(latent));
        let power = (ideal_power(wind_speed, spec) + noise_sigma * spec.rated_power * gauss()).max(0.0);

        let minute_of_year = i * cadence;
        let (month, day, hour, minute) = calendar(minute_of_year);
        let year_phase = 2.0 * PI * (minute_of_year as f64 / MINUTES_2012 as f64 - 0.3);
        let day_phase = 2.0 * PI * ((minute_of_year % 1440) as f64 / 1440.0 - 0.375);

        let air_temperature = 283.0 + 10.0 * year_phase.sin() + 4.0 * day_phase.sin() + gauss();
        pressure_anomaly = 0.9 * pressure_anomaly + 150.0 * gauss();
        let air_pressure = 101_325.0 - 400.0 * year_phase.sin() + pressure_anomaly;
        direction = wrap_direction(direction + 8.0 * gauss());
        let density = air_pressure / (GAS_CONSTANT_DRY_AIR * air_temperature);

        out.push(MetRecord {
            month,
            day,
            hour,
            minute,
            wind_speed,
            air_temperature,
            air_pressure,
            wind_direction: direction,
            density,
            power,
        });
    }
    Ok(out)
}

/// Turbine geometry of the surrogate site: ten 3 MW machines.
pub fn surrogate_spec() -> TurbineSpec {
    TurbineSpec::with_rated_power(30.0).expect("valid constant spec")
}

/// The shipped stand-in for the NREL 2012 site file: 29,736 rows, 15 %
/// Region 1/3 share, 5 % power noise, fixed seed.
pub fn nrel_surrogate() -> Vec<MetRecord> {
    synth_dataset(&surrogate_spec(), SURROGATE_ROWS, 0.05, 0.15, SURROGATE_SEED).expect("valid constant parameters")
}
