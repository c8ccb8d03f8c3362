use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<SplitTag> {
        match s {
            "train" => Some(SplitTag::Train),
            "val" => Some(SplitTag::Val),
            "test" => Some(SplitTag::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Seeded permutation of row indices.
    Random,
    /// Contiguous train, val, test blocks in time order.
    #[default]
    Chronological,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub const NN: SplitFractions = SplitFractions {
        train: 0.7,
        val: 0.15,
        test: 0.15,
    };

    pub fn validate(&self) -> Result<(), DataError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(DataError::BadFractions(format!(
                "fractions must be finite and non-negative, got {parts:?}"
            )));
        }
        if self.train <= 0.0 {
            return Err(DataError::BadFractions("train fraction must be positive".into()));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::BadFractions(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// `(train, val, test)` counts: val and test are `round(n·f)`, train
    /// takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let val = ((n as f64 * self.val).round() as usize).min(n);
        let test = ((n as f64 * self.test).round() as usize).min(n - val);
        (n - val - test, val, test)
    }
}

/// Assigns one split tag per index.
pub fn split_dataset(n: usize, fractions: SplitFractions, seed: u64, mode: SplitMode) -> Result<Vec<SplitTag>, DataError> {
    fractions.validate()?;
    let (train, val, _) = fractions.counts(n);
    let tag_at = |pos: usize| {
        if pos < train {
            SplitTag::Train
        } else if pos < train + val {
            SplitTag::Val
        } else {
            SplitTag::Test
        }
    };
    match mode {
        SplitMode::Chronological => Ok((0..n).map(tag_at).collect()),
        SplitMode::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut tags = vec![SplitTag::Train; n];
            for (pos, &idx) in order.iter().enumerate() {
                tags[idx] = tag_at(pos);
            }
            Ok(tags)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn count(tags: &[SplitTag]) -> (usize, usize, usize) {
        let c = |t| tags.iter().filter(|x| **x == t).count();
        (c(SplitTag::Train), c(SplitTag::Val), c(SplitTag::Test))
    }

    #[test]
    fn seventy_fifteen_fifteen() {
        let tags = split_dataset(100, SplitFractions::NN, 42, SplitMode::Random).unwrap();
        assert_eq!(count(&tags), (70, 15, 15));
    }

    #[test]
    fn seventy_thirty() {
        let f = SplitFractions {
            train: 0.7,
            val: 0.3,
            test: 0.0,
        };
        let tags = split_dataset(10, f, 1, SplitMode::Random).unwrap();
        assert_eq!(count(&tags), (7, 3, 0));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = split_dataset(500, SplitFractions::NN, 7, SplitMode::Random).unwrap();
        let b = split_dataset(500, SplitFractions::NN, 7, SplitMode::Random).unwrap();
        let c = split_dataset(500, SplitFractions::NN, 8, SplitMode::Random).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn chronological_blocks_are_contiguous() {
        let tags = split_dataset(20, SplitFractions::NN, 0, SplitMode::Chronological).unwrap();
        assert!(tags.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(count(&tags), (14, 3, 3));
    }

    #[test]
    fn bad_fractions() {
        let bad = |train, val, test| {
            matches!(
                split_dataset(10, SplitFractions { train, val, test }, 0, SplitMode::Random),
                Err(DataError::BadFractions(_))
            )
        };
        assert!(bad(0.5, 0.2, 0.2));
        assert!(bad(0.0, 0.5, 0.5));
        assert!(bad(1.1, -0.1, 0.0));
        assert!(bad(f64::NAN, 0.5, 0.5));
    }

    proptest! {
        #[test]
        fn tags_partition_with_rounding_rule(n in 1usize..=1000, seed in any::<u64>(), chrono in any::<bool>()) {
            let mode = if chrono { SplitMode::Chronological } else { SplitMode::Random };
            let tags = split_dataset(n, SplitFractions::NN, seed, mode).unwrap();
            prop_assert_eq!(tags.len(), n);
            let (tr, va, te) = count(&tags);
            let want_val = (n as f64 * 0.15).round() as usize;
            prop_assert_eq!(va, want_val);
            prop_assert_eq!(te, want_val);
            prop_assert_eq!(tr, n - 2 * want_val);
        }
    }
}
