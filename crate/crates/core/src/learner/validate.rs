use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{Label, LabeledDataset};
use super::ripper::{learn, LearnerParams};
use super::rules::RuleSet;
use super::LearnError;
use crate::exec::Execution;
use crate::rng::{derive_seed, stream};

/// Confusion counts with presence as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Metrics {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn add(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::Presence, Label::Presence) => self.tp += 1,
            (Label::Presence, Label::Absence) => self.fp += 1,
            (Label::Absence, Label::Presence) => self.fn_ += 1,
            (Label::Absence, Label::Absence) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &Metrics) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn evaluate(ruleset: &RuleSet, data: &LabeledDataset) -> Result<Metrics, LearnError> {
    let bound = ruleset.bind(data.fields())?;
    let mut m = Metrics::default();
    for (row, &label) in data.rows().iter().zip(data.labels()) {
        m.add(bound.classify(row), label);
    }
    Ok(m)
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(data: &LabeledDataset, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed, &[0x666f_6c64]);
    let mut fold = vec![0usize; data.len()];
    let mut next = 0usize;
    for class in [Label::Presence, Label::Absence] {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

/// Pooled precision and recall of `k`-fold stratified cross-validation.
pub fn cross_validate(
    data: &LabeledDataset,
    k: usize,
    params: &LearnerParams,
    exec: Execution,
) -> Result<Metrics, LearnError> {
    if k < 2 || data.len() < k {
        return Err(LearnError::TooFewSamples {
            needed: k.max(2),
            actual: data.len(),
        });
    }
    let fold = stratified_folds(data, k, params.seed);
    let results = exec.map_indexed(k, |f| -> Result<Metrics, LearnError> {
        let train: Vec<usize> = (0..data.len()).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..data.len()).filter(|&i| fold[i] == f).collect();
        let fold_params = LearnerParams {
            seed: derive_seed(params.seed, &[f as u64]),
            ..params.clone()
        };
        let rs = learn(&data.subset(&train), &fold_params)?;
        evaluate(&rs, &data.subset(&test))
    });
    let mut pooled = Metrics::default();
    for r in results {
        pooled.merge(&r?);
    }
    Ok(pooled)
}
