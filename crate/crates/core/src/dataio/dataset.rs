use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{normalize, DataError, FeatureVector, MetRecord, NormalizationStats, SplitTag, FEATURE_NAMES, N_FEATURES, WIND_SPEED};
use crate::artifact::{fmt_f64, write_atomic, KvDoc, KvWriter};
use crate::powercurve::{is_fault, TurbineSpec};

const STATS_FORMAT: &str = "turbine-normalization-stats";
const STATS_VERSION: u32 = 1;

/// Normalized features, targets and split assignment for every row.
///
/// Rows are stored in chronological order; `chronological_index[i]` is the
/// time position of row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<FeatureVector>,
    pub power_target: Vec<f64>,
    pub fault_label: Vec<u8>,
    pub split_tag: Vec<SplitTag>,
    pub stats: NormalizationStats,
    pub chronological_index: Vec<usize>,
}

impl LabeledDataset {
    /// Labels each record by its operating region, then normalizes with
    /// statistics from the `Train` rows.
    pub fn build(records: &[MetRecord], tags: &[SplitTag], spec: &TurbineSpec) -> Result<Self, DataError> {
        if records.len() != tags.len() {
            return Err(DataError::LengthMismatch(format!(
                "{} records but {} split tags",
                records.len(),
                tags.len()
            )));
        }
        let mask: Vec<bool> = tags.iter().map(|t| *t == SplitTag::Train).collect();
        let (features, power_target, stats) = normalize(records, &mask)?;
        let fault_label = records.iter().map(|r| is_fault(r.wind_speed, spec)).collect();
        Ok(LabeledDataset {
            features,
            power_target,
            fault_label,
            split_tag: tags.to_vec(),
            stats,
            chronological_index: (0..records.len()).collect(),
        })
    }

    pub fn from_parts(
        features: Vec<FeatureVector>,
        power_target: Vec<f64>,
        fault_label: Vec<u8>,
        split_tag: Vec<SplitTag>,
        stats: NormalizationStats,
    ) -> Result<Self, DataError> {
        let n = features.len();
        if power_target.len() != n || fault_label.len() != n || split_tag.len() != n {
            return Err(DataError::LengthMismatch(format!(
                "features {n}, power {}, labels {}, tags {}",
                power_target.len(),
                fault_label.len(),
                split_tag.len()
            )));
        }
        if fault_label.iter().any(|l| *l > 1) {
            return Err(DataError::LengthMismatch("fault labels must be 0 or 1".into()));
        }
        Ok(LabeledDataset {
            features,
            power_target,
            fault_label,
            split_tag,
            stats,
            chronological_index: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn indices(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split_tag[i] == tag).collect()
    }

    pub fn count(&self, tag: SplitTag) -> usize {
        self.split_tag.iter().filter(|t| **t == tag).count()
    }

    /// Features and power targets for the given rows.
    pub fn rows(&self, idx: &[usize]) -> (Vec<FeatureVector>, Vec<f64>) {
        (
            idx.iter().map(|&i| self.features[i]).collect(),
            idx.iter().map(|&i| self.power_target[i]).collect(),
        )
    }

    /// Physical wind speed of row `i`, m/s.
    pub fn wind_speed(&self, i: usize) -> f64 {
        self.stats.denormalize_feature(WIND_SPEED, self.features[i][WIND_SPEED])
    }

    /// Row indices sorted by time position.
    pub fn chronological_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| self.chronological_index[i]);
        order
    }
}

/// Companion statistics file for a dataset CSV (`dataset.csv` →
/// `dataset.stats`).
pub fn stats_path(dataset_path: &Path) -> PathBuf {
    dataset_path.with_extension("stats")
}

pub(crate) fn stats_to_text(stats: &NormalizationStats) -> String {
    let mut w = KvWriter::new(STATS_FORMAT, STATS_VERSION);
    write_stats(&mut w, stats);
    w.finish()
}

pub(crate) fn write_stats(w: &mut KvWriter, stats: &NormalizationStats) {
    w.str("feature_names", &FEATURE_NAMES.join(" "));
    w.array("feature_mean", &stats.feature_mean);
    w.array("feature_std", &stats.feature_std);
    w.num("power_min", stats.power_min);
    w.num("power_max", stats.power_max);
}

pub(crate) fn read_stats(doc: &KvDoc) -> Result<NormalizationStats, crate::artifact::FormatError> {
    let mean = doc.array_len("feature_mean", N_FEATURES)?;
    let std = doc.array_len("feature_std", N_FEATURES)?;
    let mut feature_mean = [0.0; N_FEATURES];
    let mut feature_std = [0.0; N_FEATURES];
    feature_mean.copy_from_slice(&mean);
    feature_std.copy_from_slice(&std);
    Ok(NormalizationStats {
        feature_mean,
        feature_std,
        power_min: doc.f64("power_min")?,
        power_max: doc.f64("power_max")?,
    })
}

/// Writes the canonical dataset CSV (rows in chronological order, columns:
/// the nine normalized features, `power_target`, `fault_label`,
/// `split_tag`) plus its `.stats` companion.
pub fn write_dataset(path: &Path, ds: &LabeledDataset) -> Result<(), DataError> {
    let mut buf = String::with_capacity(ds.len() * 200);
    buf.push_str(&FEATURE_NAMES.join(","));
    buf.push_str(",power_target,fault_label,split_tag\n");
    for i in ds.chronological_order() {
        for x in &ds.features[i] {
            buf.push_str(&fmt_f64(*x));
            buf.push(',');
        }
        let _ = writeln!(
            buf,
            "{},{},{}",
            fmt_f64(ds.power_target[i]),
            ds.fault_label[i],
            ds.split_tag[i].as_str()
        );
    }
    let io = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    write_atomic(&stats_path(path), stats_to_text(&ds.stats).as_bytes()).map_err(io)?;
    write_atomic(path, buf.as_bytes()).map_err(io)
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset, DataError> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| DataError::Io { path: p, source }
    };
    let spath = stats_path(path);
    let stats_text = fs::read_to_string(&spath).map_err(io(&spath))?;
    let stats = read_stats(&KvDoc::parse(&stats_text, STATS_FORMAT, STATS_VERSION)?)?;
    let text = fs::read_to_string(path).map_err(io(path))?;

    let mut lines = text.lines();
    let header = lines.next().ok_or(DataError::EmptyFile)?;
    let expected = format!("{},power_target,fault_label,split_tag", FEATURE_NAMES.join(","));
    if header != expected {
        return Err(DataError::Parse {
            row: 0,
            line: 1,
            msg: "unexpected dataset header".into(),
        });
    }
    let (mut features, mut power, mut labels, mut tags) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let bad = |msg: &str| DataError::Parse {
            row,
            line: row as u64 + 1,
            msg: msg.into(),
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != N_FEATURES + 3 {
            return Err(bad("wrong column count"));
        }
        let mut f = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            f[j] = cols[j].parse().map_err(|_| bad("bad feature value"))?;
        }
        features.push(f);
        power.push(cols[N_FEATURES].parse().map_err(|_| bad("bad power_target"))?);
        labels.push(cols[N_FEATURES + 1].parse().map_err(|_| bad("bad fault_label"))?);
        tags.push(SplitTag::parse(cols[N_FEATURES + 2]).ok_or_else(|| bad("bad split_tag"))?);
    }
    if features.is_empty() {
        return Err(DataError::EmptyFile);
    }
    LabeledDataset::from_parts(features, power, labels, tags, stats)
}
