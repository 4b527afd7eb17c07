use rand::seq::SliceRandom;

use super::config::TrainConfig;
use crate::data::{random_crop, Sample};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, purpose};
use crate::tensor::FeatureMap;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchItem {
    pub id: String,
    pub input: FeatureMap<f32>,
    /// Present for labeled items only.
    pub label: Option<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub labeled: Vec<BatchItem>,
    pub unlabeled: Vec<BatchItem>,
}

impl Batch {
    /// Labeled items first, then unlabeled.
    pub fn items(&self) -> impl Iterator<Item = &BatchItem> {
        self.labeled.iter().chain(&self.unlabeled)
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Index of the `draw`-th sample from a pool of `n`, visiting the pool in a
/// fresh permutation every epoch.
pub fn epoch_index(n: usize, draw: usize, seed: u64, tag: u64) -> usize {
    let epoch = draw / n;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut keyed_rng(seed, &[tag, epoch as u64]));
    order[draw % n]
}

fn item(sample: &Sample, config: &TrainConfig, t: usize, slot: usize) -> Result<BatchItem> {
    let mut rng = keyed_rng(config.seed, &[purpose::CROP, t as u64, slot as u64]);
    let patch = random_crop(sample, config.patch(), &mut rng)?;
    Ok(BatchItem {
        id: patch.id().to_string(),
        input: patch.volume.to_feature_map(),
        label: patch.mask.as_ref().map(|m| m.labels().to_vec()),
    })
}

/// The batch for iteration `t`: `labeled_per_batch` labeled crops, then
/// the unlabeled crops the mode uses. Depends only on `(config.seed, t)`.
pub fn compose_batch(labeled: &[Sample], unlabeled: &[Sample], config: &TrainConfig, t: usize) -> Result<Batch> {
    if labeled.is_empty() {
        return Err(Error::Data("labeled pool is empty".into()));
    }
    let nl = config.labeled_per_batch;
    let nu = config.unlabeled_per_batch();
    if nu > 0 && unlabeled.is_empty() {
        return Err(Error::Data(format!(
            "mode needs {nu} unlabeled items per batch but the unlabeled pool is empty"
        )));
    }
    let labeled_items = (0..nl)
        .map(|j| {
            let s = &labeled[epoch_index(labeled.len(), t * nl + j, config.seed, purpose::LABELED_EPOCH)];
            if s.mask.is_none() {
                return Err(Error::Data(format!("labeled case {} has no mask", s.id())));
            }
            item(s, config, t, j)
        })
        .collect::<Result<_>>()?;
    let unlabeled_items = (0..nu)
        .map(|j| {
            let s = &unlabeled[epoch_index(unlabeled.len(), t * nu + j, config.seed, purpose::UNLABELED_EPOCH)];
            let mut it = item(s, config, t, nl + j)?;
            it.label = None;
            Ok(it)
        })
        .collect::<Result<_>>()?;
    Ok(Batch {
        labeled: labeled_items,
        unlabeled: unlabeled_items,
    })
}
