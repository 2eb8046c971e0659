use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{precision_recall, EvalReport};
use crate::num::Scalar;
use crate::textpipe::{fit_transform, oversample, Document, Preprocessor, TfidfConfig, VectorSpace};

/// What the holdout split preserves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stratify {
    /// Class proportions.
    ClassDistribution,
    /// Centrality bin of each document, aligned with the document list.
    CentralityBins(Vec<usize>),
}

impl Stratify {
    fn keys(&self, docs: &[Document]) -> Result<(Vec<usize>, &'static str)> {
        match self {
            Stratify::ClassDistribution => docs
                .iter()
                .map(|d| {
                    d.label
                        .ok_or_else(|| Error::InvalidConfig(format!("document `{}` has no label", d.post_id)))
                })
                .collect::<Result<_>>()
                .map(|k| (k, "class")),
            Stratify::CentralityBins(bins) => {
                if bins.len() != docs.len() {
                    return Err(Error::LengthMismatch {
                        left: docs.len(),
                        right: bins.len(),
                    });
                }
                Ok((bins.clone(), "bin"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoldoutConfig {
    /// Fraction of every stratum that goes to training.
    pub split: f64,
    pub tfidf: TfidfConfig,
    pub train: TrainConfig,
    /// Neighbour count for oversampling; `None` disables it.
    pub smote_k: Option<usize>,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        HoldoutConfig {
            split: 0.8,
            tfidf: TfidfConfig::default(),
            train: TrainConfig::default(),
            smote_k: Some(5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HoldoutRun<T> {
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Vector space fitted on the training fold.
    pub space: VectorSpace<T>,
    pub report: EvalReport<T>,
}

impl<T> HoldoutRun<T> {
    /// The run had a test class that was never predicted.
    pub fn has_zero_prediction_class(&self) -> bool {
        !self.report.zero_prediction_classes.is_empty()
    }
}

/// Splits item positions stratum by stratum: `round(split·n)` of each
/// stratum (at least one, at most `n − 1`) go to training. Both returned
/// lists are sorted.
pub fn stratified_split(keys: &[usize], split: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    split_named(keys, "stratum", split, seed)
}

fn split_named(keys: &[usize], kind: &str, split: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::InvalidConfig(format!("split must lie in (0, 1), got {split}")));
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &k) in keys.iter().enumerate() {
        strata.entry(k).or_default().push(i);
    }
    let mut train = Vec::with_capacity(keys.len());
    let mut test = Vec::with_capacity(keys.len());
    for (&key, members) in &strata {
        let n = members.len();
        if n < 2 {
            return Err(Error::StratumTooSmall {
                stratum: format!("{kind} {key}"),
                size: n,
            });
        }
        let n_train = ((split * n as f64).round() as usize).clamp(1, n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(key as u64);
        let mut in_train = vec![false; n];
        for i in index::sample(&mut rng, n, n_train) {
            in_train[i] = true;
        }
        for (&m, &t) in members.iter().zip(&in_train) {
            if t {
                train.push(m);
            } else {
                test.push(m);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn run_once<T: Scalar>(
    docs: &[Document],
    labels: &[usize],
    classes: &[String],
    keys: &[usize],
    kind: &str,
    seed: u64,
    config: &HoldoutConfig,
    pre: &Preprocessor,
) -> Result<HoldoutRun<T>> {
    let (train_idx, test_idx) = split_named(keys, kind, config.split, seed)?;
    let train_docs: Vec<Document> = train_idx.iter().map(|&i| docs[i].clone()).collect();
    let test_docs: Vec<Document> = test_idx.iter().map(|&i| docs[i].clone()).collect();
    let (space, mut train_m) = fit_transform::<T>(&train_docs, config.tfidf, pre)?;
    if let Some(k) = config.smote_k {
        train_m = oversample(&train_m, k, seed)?.matrix;
    }
    let train_cfg = TrainConfig {
        seed,
        ..config.train
    };
    let model = train(&train_m, classes, &train_cfg)?;
    let test_m = space.transform(&test_docs, pre);
    let predicted = model.predict(&test_m)?.classes;
    let truth: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
    let report = precision_recall(&truth, &predicted, classes.len())?;
    Ok(HoldoutRun {
        seed,
        train: train_idx,
        test: test_idx,
        space,
        report,
    })
}

/// One stratified train/test split per seed. Each run fits the vector space,
/// oversamples and trains on its training fold only, then evaluates on the
/// held-out fold. Runs execute in parallel; results follow `seeds` order.
pub fn repeated_holdout<T: Scalar>(
    docs: &[Document],
    classes: &[String],
    stratify: &Stratify,
    seeds: &[u64],
    config: &HoldoutConfig,
    pre: &Preprocessor,
) -> Result<Vec<HoldoutRun<T>>> {
    let labels: Vec<usize> = docs
        .iter()
        .map(|d| {
            d.label
                .ok_or_else(|| Error::InvalidConfig(format!("document `{}` has no label", d.post_id)))
        })
        .collect::<Result<_>>()?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
        return Err(Error::UnknownClass(bad.to_string()));
    }
    let (keys, kind) = stratify.keys(docs)?;
    seeds
        .par_iter()
        .map(|&seed| run_once(docs, &labels, classes, &keys, kind, seed, config, pre))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_proportions() {
        let keys: Vec<usize> = (0..100).map(|i| usize::from(i >= 70)).collect();
        let (train, test) = stratified_split(&keys, 0.8, 7).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert_eq!(train.iter().filter(|&&i| keys[i] == 1).count(), 24);
        let again = stratified_split(&keys, 0.8, 7).unwrap();
        assert_eq!(again, (train, test));
    }

    #[test]
    fn tiny_stratum_named() {
        let err = stratified_split(&[0, 0, 0, 5], 0.8, 1).unwrap_err();
        match err {
            Error::StratumTooSmall { stratum, size } => {
                assert_eq!(stratum, "stratum 5");
                assert_eq!(size, 1);
            }
            other => panic!("{other}"),
        }
        assert!(stratified_split(&[0, 0], 1.0, 1).is_err());
    }
}
