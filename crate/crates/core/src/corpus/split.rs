use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EntityRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<EntityRecord>,
    pub validation: Vec<EntityRecord>,
    pub test: Vec<EntityRecord>,
    pub seed: u64,
}

/// Entity ids per split, written next to the data for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub test_count: usize,
    pub train_val_ratio: f64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn manifest(&self, test_count: usize, train_val_ratio: f64) -> SplitManifest {
        let ids = |rs: &[EntityRecord]| rs.iter().map(|r| r.entity_id.clone()).collect();
        SplitManifest {
            seed: self.seed,
            test_count,
            train_val_ratio,
            train: ids(&self.train),
            validation: ids(&self.validation),
            test: ids(&self.test),
        }
    }
}

/// Shuffles with `seed`, takes `test_count` records as the test set and splits
/// the remainder into train/validation at `train_val_ratio`.
pub fn split_dataset(
    records: Vec<EntityRecord>,
    seed: u64,
    test_count: usize,
    train_val_ratio: f64,
) -> Result<DatasetSplit> {
    if !(train_val_ratio > 0.0 && train_val_ratio < 1.0) {
        return Err(Error::Config(format!(
            "train/validation ratio must lie in (0, 1), got {train_val_ratio}"
        )));
    }
    if records.len() < test_count {
        return Err(Error::InsufficientRecords {
            required: test_count,
            available: records.len(),
        });
    }
    let mut records = records;
    // canonical order first so the split does not depend on input order
    records.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.shuffle(&mut rng);

    let rest = records.split_off(test_count);
    let test = records;
    let train_len = (rest.len() as f64 * train_val_ratio).round() as usize;
    let mut train = rest;
    let validation = train.split_off(train_len.min(train.len()));
    Ok(DatasetSplit {
        train,
        validation,
        test,
        seed,
    })
}
