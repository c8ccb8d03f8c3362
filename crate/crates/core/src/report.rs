//! Metrics, the architecture comparison table and power-curve plot data.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::artifact::{fmt_f64, write_atomic, FormatError, KvDoc, KvWriter};
use crate::powercurve::{Bin, BinnedCurve};

const REPORT_FORMAT: &str = "turbine-comparison-report";
const TIMINGS_FORMAT: &str = "turbine-comparison-timings";
const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("duplicate row name `{0}`")]
    DuplicateName(String),
    #[error("invalid row `{name}`: {msg}")]
    InvalidRow { name: String, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report: {0}")]
    Format(#[from] FormatError),
    #[error("malformed plot file {path}: {msg}")]
    PlotFormat { path: String, msg: String },
}

/// Mean of squared differences.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64, ReportError> {
    if predictions.len() != targets.len() {
        return Err(ReportError::LengthMismatch(predictions.len(), targets.len()));
    }
    if predictions.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / predictions.len() as f64)
}

/// `(other − best) / other`: the fraction by which `best` undercuts `other`.
pub fn relative_improvement(best_mse: f64, other_mse: f64) -> f64 {
    (other_mse - best_mse) / other_mse
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    /// Training epochs (0 for SVR).
    pub epochs: usize,
    pub wall_time_seconds: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Fingerprint {
    pub row_count: usize,
    pub split_seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<EvalRow>,
    pub fingerprint: Fingerprint,
    /// Unix seconds at report assembly.
    pub timestamp: u64,
}

pub fn build_report(rows: Vec<EvalRow>) -> Result<ComparisonReport, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let mut seen = HashSet::new();
    for r in &rows {
        if r.name.trim() != r.name || r.name.is_empty() || r.name.contains('\n') {
            return Err(ReportError::InvalidRow {
                name: r.name.clone(),
                msg: "names must be non-empty single-line text without surrounding whitespace".into(),
            });
        }
        if !(r.mse.is_finite() && r.mse >= 0.0) {
            return Err(ReportError::InvalidRow {
                name: r.name.clone(),
                msg: format!("mse {} is not a finite non-negative number", r.mse),
            });
        }
        if !(r.wall_time_seconds.is_finite() && r.wall_time_seconds >= 0.0) {
            return Err(ReportError::InvalidRow {
                name: r.name.clone(),
                msg: "wall time must be finite and non-negative".into(),
            });
        }
        if !seen.insert(r.name.clone()) {
            return Err(ReportError::DuplicateName(r.name.clone()));
        }
    }
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    Ok(ComparisonReport {
        rows,
        fingerprint: Fingerprint::default(),
        timestamp,
    })
}

impl ComparisonReport {
    pub fn with_fingerprint(mut self, fingerprint: Fingerprint) -> Self {
        self.fingerprint = fingerprint;
        self
    }

    /// Index of the minimum-MSE row (first one on ties).
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, r) in self.rows.iter().enumerate() {
            if r.mse < self.rows[best].mse {
                best = i;
            }
        }
        best
    }

    pub fn best(&self) -> &EvalRow {
        &self.rows[self.best_index()]
    }

    /// Lowest-MSE row other than the best, if any.
    pub fn runner_up(&self) -> Option<&EvalRow> {
        let b = self.best_index();
        self.rows
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != b)
            .min_by(|x, y| x.1.mse.total_cmp(&y.1.mse))
            .map(|(_, r)| r)
    }

    /// Aligned plain-text table; the best row is marked with `*`.
    pub fn render_table(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max("Model".len());
        let best = self.best_index();
        let mut out = String::new();
        let _ = writeln!(out, "  {:<name_w$} | {:>6} | {:>10} | {:>10}", "Model", "Epochs", "Time (s)", "MSE");
        let _ = writeln!(
            out,
            "  {}-+-{}-+-{}-+-{}",
            "-".repeat(name_w),
            "-".repeat(6),
            "-".repeat(10),
            "-".repeat(10)
        );
        for (i, r) in self.rows.iter().enumerate() {
            let mark = if i == best { '*' } else { ' ' };
            let _ = writeln!(
                out,
                "{mark} {:<name_w$} | {:>6} | {:>10.2} | {:>10.6}",
                r.name, r.epochs, r.wall_time_seconds, r.mse
            );
        }
        let b = self.best();
        if let Some(second) = self.runner_up() {
            let _ = writeln!(
                out,
                "best: {} (MSE {:.6}), {:.1}% lower than {} (improvement = (runner_up - best) / runner_up)",
                b.name,
                b.mse,
                100.0 * relative_improvement(b.mse, second.mse),
                second.name
            );
            let time_ratio = relative_improvement(second.wall_time_seconds, b.wall_time_seconds);
            if b.wall_time_seconds > 0.0 && time_ratio.is_finite() {
                let _ = writeln!(
                    out,
                    "      trains {:.1}% {} than {} (difference / best time)",
                    100.0 * time_ratio.abs(),
                    if time_ratio >= 0.0 { "longer" } else { "shorter" },
                    second.name
                );
            }
        } else {
            let _ = writeln!(out, "best: {} (MSE {:.6})", b.name, b.mse);
        }
        out
    }

    /// Structured serialization: `(report, timings)`. The report text holds
    /// everything deterministic; wall times and the timestamp live in the
    /// timings text so identical runs produce byte-identical reports.
    pub fn to_texts(&self) -> (String, String) {
        let mut w = KvWriter::new(REPORT_FORMAT, REPORT_VERSION);
        w.int("row_count", self.fingerprint.row_count as i64);
        w.str("split_seed", &self.fingerprint.split_seed.to_string());
        w.str("config_hash", &self.fingerprint.config_hash);
        w.int("rows", self.rows.len() as i64);
        w.int("best_row", self.best_index() as i64);
        for (i, r) in self.rows.iter().enumerate() {
            w.str(&format!("row.{i}.name"), &r.name);
            w.int(&format!("row.{i}.epochs"), r.epochs as i64);
            w.num(&format!("row.{i}.mse"), r.mse);
        }
        let mut t = KvWriter::new(TIMINGS_FORMAT, REPORT_VERSION);
        t.str("timestamp", &self.timestamp.to_string());
        for (i, r) in self.rows.iter().enumerate() {
            t.num(&format!("row.{i}.wall_time_seconds"), r.wall_time_seconds);
        }
        (w.finish(), t.finish())
    }

    pub fn from_texts(report: &str, timings: &str) -> Result<ComparisonReport, ReportError> {
        let doc = KvDoc::parse(report, REPORT_FORMAT, REPORT_VERSION)?;
        let tdoc = KvDoc::parse(timings, TIMINGS_FORMAT, REPORT_VERSION)?;
        let n = doc.usize("rows")?;
        let rows = (0..n)
            .map(|i| {
                Ok(EvalRow {
                    name: doc.str(&format!("row.{i}.name"))?.to_string(),
                    epochs: doc.usize(&format!("row.{i}.epochs"))?,
                    mse: doc.f64(&format!("row.{i}.mse"))?,
                    wall_time_seconds: tdoc.f64(&format!("row.{i}.wall_time_seconds"))?,
                })
            })
            .collect::<Result<Vec<_>, FormatError>>()?;
        let report = build_report(rows)?;
        Ok(ComparisonReport {
            rows: report.rows,
            fingerprint: Fingerprint {
                row_count: doc.usize("row_count")?,
                split_seed: doc.u64("split_seed")?,
                config_hash: doc.str("config_hash")?.to_string(),
            },
            timestamp: tdoc.u64("timestamp")?,
        })
    }

    /// Writes `<stem>.kv`, `<stem>.timings.kv` and `<stem>.txt` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), ReportError> {
        let (r, t) = self.to_texts();
        for (name, body) in [
            (format!("{stem}.kv"), r),
            (format!("{stem}.timings.kv"), t),
            (format!("{stem}.txt"), self.render_table()),
        ] {
            let path = dir.join(name);
            write_atomic(&path, body.as_bytes()).map_err(|source| ReportError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<ComparisonReport, ReportError> {
        let read = |name: String| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| ReportError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        Self::from_texts(&read(format!("{stem}.kv"))?, &read(format!("{stem}.timings.kv"))?)
    }
}

/// Companion path for the predicted series of a curve export
/// (`curve.csv` → `curve_predicted.csv`).
pub fn predicted_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_predicted.{}", ext.to_string_lossy()),
        None => format!("{stem}_predicted"),
    };
    out.with_file_name(name)
}

/// Writes the empirical curve to `out` (`wind_speed,mean_power,count`) and
/// the predicted series to [`predicted_path`] (`wind_speed,predicted_power`).
/// Inputs are physical units (m/s, MW). Nothing is written if either series
/// is empty.
pub fn export_curve_plot(actual: &BinnedCurve, predicted: &[(f64, f64)], out: &Path) -> Result<(PathBuf, PathBuf), ReportError> {
    if actual.bins.is_empty() || predicted.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let mut a = String::from("wind_speed,mean_power,count\n");
    for b in &actual.bins {
        let _ = writeln!(a, "{},{},{}", fmt_f64(b.center), fmt_f64(b.mean_power), b.count);
    }
    let mut p = String::from("wind_speed,predicted_power\n");
    for (v, pw) in predicted {
        let _ = writeln!(p, "{},{}", fmt_f64(*v), fmt_f64(*pw));
    }
    let ppath = predicted_path(out);
    for (path, body) in [(out, &a), (ppath.as_path(), &p)] {
        write_atomic(path, body.as_bytes()).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok((out.to_path_buf(), ppath))
}

fn read_numeric_csv(path: &Path, header: &str, cols: usize) -> Result<Vec<Vec<f64>>, ReportError> {
    let bad = |msg: String| ReportError::PlotFormat {
        path: path.display().to_string(),
        msg,
    };
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(bad(format!("expected header `{header}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let vals = line
                .split(',')
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
            if vals.len() != cols {
                return Err(bad(format!("line {}: expected {cols} columns", i + 2)));
            }
            Ok(vals)
        })
        .collect()
}

/// Parses the empirical-curve file written by [`export_curve_plot`].
pub fn read_curve_plot(path: &Path, bin_width: f64) -> Result<BinnedCurve, ReportError> {
    let rows = read_numeric_csv(path, "wind_speed,mean_power,count", 3)?;
    Ok(BinnedCurve {
        bin_width,
        bins: rows
            .into_iter()
            .map(|r| Bin {
                center: r[0],
                mean_power: r[1],
                count: r[2] as usize,
            })
            .collect(),
    })
}

pub fn read_predicted_plot(path: &Path) -> Result<Vec<(f64, f64)>, ReportError> {
    Ok(read_numeric_csv(path, "wind_speed,predicted_power", 2)?
        .into_iter()
        .map(|r| (r[0], r[1]))
        .collect())
}

/// The five Table-1 rows as published, for reference and tests.
pub fn published_rows() -> Vec<EvalRow> {
    let row = |name: &str, epochs, t, mse| EvalRow {
        name: name.into(),
        epochs,
        wall_time_seconds: t,
        mse,
    };
    vec![
        row("Feedforward Network", 114, 15.00, 0.048979),
        row("Recurrent Neural Network (RNN)", 138, 22.83, 0.026299),
        row("Convolutional Neural Network (CNN)", 129, 18.00, 0.047950),
        row("Sparse Autoencoder", 135, 20.53, 0.029314),
        row("Dynamic Time Series Non Linear Autoregressive (NAR)", 131, 19.18, 0.031452),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powercurve::bin_curve;
    use proptest::prelude::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(ReportError::LengthMismatch(1, 2))));
        assert!(matches!(mse(&[], &[]), Err(ReportError::EmptyInput)));
    }

    #[test]
    fn published_rows_pick_rnn() {
        let r = build_report(published_rows()).unwrap();
        assert_eq!(r.best().name, "Recurrent Neural Network (RNN)");
        assert_eq!(r.best().mse, 0.026299);
        let second = r.runner_up().unwrap();
        assert_eq!(second.name, "Sparse Autoencoder");
        let imp = relative_improvement(r.best().mse, second.mse);
        assert!((imp - (0.029314 - 0.026299) / 0.029314).abs() < 1e-15);
        assert!((imp - 0.103).abs() < 5e-4);
        let table = r.render_table();
        assert!(table.contains("* Recurrent Neural Network (RNN)"));
        assert!(table.contains("10.3% lower than Sparse Autoencoder"));
    }

    #[test]
    fn singleton_is_best_and_duplicates_rejected() {
        let row = EvalRow {
            name: "only".into(),
            epochs: 3,
            wall_time_seconds: 0.5,
            mse: 0.2,
        };
        let r = build_report(vec![row.clone()]).unwrap();
        assert_eq!(r.best_index(), 0);
        assert!(r.render_table().contains("best: only"));
        assert!(matches!(build_report(vec![row.clone(), row]), Err(ReportError::DuplicateName(_))));
        assert!(matches!(build_report(vec![]), Err(ReportError::EmptyInput)));
    }

    #[test]
    fn structured_files_round_trip() {
        let r = build_report(published_rows()).unwrap().with_fingerprint(Fingerprint {
            row_count: 29_736,
            split_seed: 42,
            config_hash: "abc123".into(),
        });
        let dir = tempfile::tempdir().unwrap();
        r.save(dir.path(), "report").unwrap();
        assert_eq!(ComparisonReport::load(dir.path(), "report").unwrap(), r);
    }

    #[test]
    fn plot_export_round_trip_and_empty_guard() {
        let samples: Vec<(f64, f64)> = (0..200).map(|i| (i as f64 * 0.1, (i as f64 * 0.37).sin().abs())).collect();
        let curve = bin_curve(&samples, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("curve.csv");

        assert!(matches!(export_curve_plot(&curve, &[], &out), Err(ReportError::EmptyInput)));
        assert!(!out.exists());
        assert!(!predicted_path(&out).exists());

        let (a, p) = export_curve_plot(&curve, &samples, &out).unwrap();
        assert_eq!(p, dir.path().join("curve_predicted.csv"));
        let back = read_curve_plot(&a, 0.5).unwrap();
        assert_eq!(back.bins.len(), curve.bins.len());
        for (x, y) in back.bins.iter().zip(&curve.bins) {
            assert!((x.mean_power - y.mean_power).abs() < 1e-9);
            assert_eq!(x.count, y.count);
        }
        assert_eq!(read_predicted_plot(&p).unwrap(), samples);
    }

    proptest! {
        #[test]
        fn mse_symmetric_nonnegative(pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..50)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = mse(&a, &b).unwrap();
            prop_assert!(m >= 0.0);
            prop_assert_eq!(m, mse(&b, &a).unwrap());
            prop_assert_eq!(m == 0.0, a == b);
        }

        #[test]
        fn argmin_invariant_under_rescaling(mses in proptest::collection::vec(0.0f64..1.0, 1..8), k in 0.01f64..100.0) {
            let rows = |scale: f64| mses.iter().enumerate().map(|(i, m)| EvalRow {
                name: format!("m{i}"), epochs: 1, wall_time_seconds: 0.0, mse: m * scale,
            }).collect::<Vec<_>>();
            let a = build_report(rows(1.0)).unwrap();
            let b = build_report(rows(k)).unwrap();
            prop_assert_eq!(a.best_index(), b.best_index());
        }
    }
}
