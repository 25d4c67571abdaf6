use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.80,
            val_frac: 0.05,
            test_frac: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(HarnessError::InvalidSplit("fractions must lie in [0, 1]".into()));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(HarnessError::InvalidSplit("fractions must sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

impl FromStr for SplitName {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            "all" => Ok(SplitName::All),
            other => Err(HarnessError::InvalidSplit(format!("unknown split {other}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn get(&self, name: SplitName) -> Vec<String> {
        match name {
            SplitName::Train => self.train.clone(),
            SplitName::Val => self.val.clone(),
            SplitName::Test => self.test.clone(),
            SplitName::All => {
                let mut all = self.train.clone();
                all.extend(self.val.iter().cloned());
                all.extend(self.test.iter().cloned());
                all
            }
        }
    }
}

fn floor_count(n: usize, frac: f64) -> usize {
    // tolerate products like 20000 * 0.15 landing a hair under an integer
    (n as f64 * frac + 1e-9).floor() as usize
}

/// Seeded shuffle of the sorted ids, then contiguous train | val | test cuts.
/// Validation and test sizes are floored; the remainder goes to train.
pub fn split_dataset(ids: &[String], spec: &SplitSpec) -> Result<DatasetSplit, HarnessError> {
    spec.validate()?;
    if ids.is_empty() {
        return Err(HarnessError::EmptyManifest);
    }
    let mut order = ids.to_vec();
    order.sort();
    order.dedup();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));

    let n = order.len();
    let n_val = floor_count(n, spec.val_frac);
    let n_test = floor_count(n, spec.test_frac);
    let n_train = n - n_val - n_test;

    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok(DatasetSplit {
        train: order,
        val,
        test,
    })
}
