//! Sliding windows over the chronological order, never crossing a change of
//! split tag.

use super::model::{ArchKind, WindowSet};
use super::NetError;
use crate::dataio::{LabeledDataset, SplitTag, N_FEATURES};

/// Window sets per split, plus the dataset row each window ends on.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitWindows {
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
    pub train_rows: Vec<usize>,
    pub val_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

impl SplitWindows {
    pub fn get(&self, tag: SplitTag) -> (&WindowSet, &[usize]) {
        match tag {
            SplitTag::Train => (&self.train, &self.train_rows),
            SplitTag::Val => (&self.val, &self.val_rows),
            SplitTag::Test => (&self.test, &self.test_rows),
        }
    }

    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

/// Maximal runs of consecutive (in time) rows sharing a split tag.
fn runs(ds: &LabeledDataset) -> Vec<(SplitTag, Vec<usize>)> {
    let mut out: Vec<(SplitTag, Vec<usize>)> = Vec::new();
    for i in ds.chronological_order() {
        let tag = ds.split_tag[i];
        match out.last_mut() {
            Some((t, rows)) if *t == tag => rows.push(i),
            _ => out.push((tag, vec![i])),
        }
    }
    out
}

/// Builds windows of `window` steps.
///
/// Feature kinds: the window holds the feature vectors at steps
/// `t − window + 1 ..= t` and is labelled with the fault label at `t`, so a
/// run of `m` rows gives `m − window + 1` windows. `NarTimeSeries`: the
/// window holds the labels at `t − window .. t` (strictly past) and the
/// target is the label at `t`, giving `m − window` windows per run.
pub fn make_windows(ds: &LabeledDataset, window: usize, kind: ArchKind) -> Result<SplitWindows, NetError> {
    if window == 0 {
        return Err(NetError::WindowTooLong { window, longest_run: 0 });
    }
    let width = if kind.uses_labels() { 1 } else { N_FEATURES };
    let mut out = SplitWindows {
        train: WindowSet::new(window, width),
        val: WindowSet::new(window, width),
        test: WindowSet::new(window, width),
        train_rows: Vec::new(),
        val_rows: Vec::new(),
        test_rows: Vec::new(),
    };
    let runs = runs(ds);
    let mut buf = Vec::with_capacity(window * width);
    for (tag, rows) in &runs {
        let (set, ends) = match tag {
            SplitTag::Train => (&mut out.train, &mut out.train_rows),
            SplitTag::Val => (&mut out.val, &mut out.val_rows),
            SplitTag::Test => (&mut out.test, &mut out.test_rows),
        };
        if kind.uses_labels() {
            for t in window..rows.len() {
                buf.clear();
                buf.extend(rows[t - window..t].iter().map(|&r| ds.fault_label[r] as f64));
                set.push(&buf, ds.fault_label[rows[t]] as f64);
                ends.push(rows[t]);
            }
        } else if rows.len() >= window {
            for t in window - 1..rows.len() {
                buf.clear();
                for &r in &rows[t + 1 - window..=t] {
                    buf.extend_from_slice(&ds.features[r]);
                }
                set.push(&buf, ds.fault_label[rows[t]] as f64);
                ends.push(rows[t]);
            }
        }
    }
    if out.total() == 0 {
        let longest_run = runs.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
        return Err(NetError::WindowTooLong { window, longest_run });
    }
    Ok(out)
}
