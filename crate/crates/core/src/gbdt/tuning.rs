//! Train/test splitting, stratified cross validation and random search.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::f1;
use super::train::train;
use super::tree::Hyperparameters;
use crate::resample::{balance_training, SmoteConfig};
use crate::{seed, Error, Matrix, Result};

/// Row indices of a train/test partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn class_indices(y: &[u8]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &v) in y.iter().enumerate() {
        out[usize::from(v == 1)].push(i);
    }
    out
}

/// Stratified split: each class contributes `round(ratio * n_class)` rows to
/// the training part (at least one row to each side when the class has two).
pub fn split_train_test(y: &[u8], ratio: f64, seed: u64) -> Result<Split> {
    if y.len() < 5 {
        return Err(Error::TooFewRows {
            needed: 5,
            got: y.len(),
        });
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidFraction(ratio));
    }
    let classes = class_indices(y);
    if classes.iter().any(Vec::is_empty) {
        return Err(Error::SingleClass);
    }
    let mut rng = seed::rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut idx in classes {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut k = libm::round(ratio * n as f64) as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        }
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Fold id per row. Every class is shuffled and dealt round-robin, with the
/// second class continuing where the first stopped so fold sizes stay even.
pub fn stratified_folds(y: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidFolds(folds));
    }
    let classes = class_indices(y);
    for (class, idx) in classes.iter().enumerate() {
        if idx.len() < folds {
            return Err(Error::TooFewPerClass {
                class: class as u8,
                count: idx.len(),
                folds,
            });
        }
    }
    let mut rng = seed::rng(seed);
    let mut fold_of = vec![0; y.len()];
    let mut next = 0;
    for mut idx in classes {
        idx.shuffle(&mut rng);
        for i in idx {
            fold_of[i] = next % folds;
            next += 1;
        }
    }
    Ok(fold_of)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    /// Balancing applied to each fold's training part; `None` disables it.
    pub smote: Option<SmoteConfig>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            smote: Some(SmoteConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub mean_f1: f64,
    pub fold_f1: Vec<f64>,
}

/// Stratified k-fold F1. Balancing, when enabled, only ever sees the
/// training part of a fold.
pub fn cross_validate(x: &Matrix, y: &[u8], hp: &Hyperparameters, config: &CvConfig, seed: u64) -> Result<CvOutcome> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    hp.validate()?;
    let fold_of = stratified_folds(y, config.folds, seed::derive(seed, 0))?;
    let mut fold_f1 = Vec::with_capacity(config.folds);
    for fold in 0..config.folds {
        let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| fold_of[i] == fold);
        let tx = x.select_rows(&train_idx);
        let ty: Vec<u8> = train_idx.iter().map(|&i| y[i]).collect();
        let fold_seed = seed::derive(seed, 1 + fold as u64);
        let model = match config.smote {
            Some(smote) => {
                let b = balance_training(&tx, &ty, fold_seed, smote)?;
                train(&b.x, &b.y, hp, fold_seed)?
            }
            None => train(&tx, &ty, hp, fold_seed)?,
        };
        let pred = model.classify_all(&x.select_rows(&test_idx))?;
        let truth: Vec<u8> = test_idx.iter().map(|&i| y[i]).collect();
        fold_f1.push(f1(&truth, &pred)?);
    }
    let mean_f1 = fold_f1.iter().sum::<f64>() / fold_f1.len() as f64;
    Ok(CvOutcome { mean_f1, fold_f1 })
}

/// Closed real interval; `log` draws uniformly in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub log: bool,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi, log: false }
    }

    pub fn log(lo: f64, hi: f64) -> Self {
        Self { lo, hi, log: true }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if self.lo == self.hi {
            return self.lo;
        }
        if self.log {
            let (a, b) = (libm::log(self.lo), libm::log(self.hi));
            libm::exp(a + u * (b - a)).clamp(self.lo, self.hi)
        } else {
            self.lo + u * (self.hi - self.lo)
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        let ok = self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi && (!self.log || self.lo > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidHyperparameter(alloc::format!("bad range for {name}")))
        }
    }
}

/// Closed integer interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub lo: usize,
    pub hi: usize,
}

impl IntRange {
    pub fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        rng.random_range(self.lo..=self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub max_depth: IntRange,
    pub learning_rate: Range,
    pub gamma: Range,
    pub min_child_weight: IntRange,
    pub n_estimators: IntRange,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            max_depth: IntRange::new(3, 10),
            learning_rate: Range::log(0.01, 0.3),
            gamma: Range::new(0.0, 5.0),
            min_child_weight: IntRange::new(1, 10),
            n_estimators: IntRange::new(50, 500),
        }
    }
}

impl SearchSpace {
    /// A space containing only `hp`.
    pub fn point(hp: &Hyperparameters) -> Self {
        let mcw = hp.min_child_weight as usize;
        Self {
            max_depth: IntRange::new(hp.max_depth, hp.max_depth),
            learning_rate: Range::new(hp.learning_rate, hp.learning_rate),
            gamma: Range::new(hp.gamma, hp.gamma),
            min_child_weight: IntRange::new(mcw, mcw),
            n_estimators: IntRange::new(hp.n_estimators, hp.n_estimators),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.learning_rate.check("learning_rate")?;
        self.gamma.check("gamma")?;
        for (name, r) in [
            ("max_depth", self.max_depth),
            ("min_child_weight", self.min_child_weight),
            ("n_estimators", self.n_estimators),
        ] {
            if r.lo > r.hi {
                return Err(Error::InvalidHyperparameter(alloc::format!("bad range for {name}")));
            }
        }
        Ok(())
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Hyperparameters {
        Hyperparameters {
            max_depth: self.max_depth.draw(rng),
            learning_rate: self.learning_rate.draw(rng),
            gamma: self.gamma.draw(rng),
            min_child_weight: self.min_child_weight.draw(rng) as f64,
            n_estimators: self.n_estimators.draw(rng),
            lambda: 1.0,
        }
    }

    /// `n_iter` independent draws from one seeded stream.
    pub fn candidates(&self, n_iter: usize, seed: u64) -> Result<Vec<Hyperparameters>> {
        self.validate()?;
        let mut rng = seed::rng(seed);
        let out: Vec<Hyperparameters> = (0..n_iter).map(|_| self.draw(&mut rng)).collect();
        out.iter().try_for_each(Hyperparameters::validate)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub hyperparameters: Hyperparameters,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Hyperparameters,
    pub best_score: f64,
    pub trials: Vec<Trial>,
}

/// Index of the highest score, the earliest on ties. NaN never wins.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Random search maximizing mean cross-validated F1. Every candidate is
/// scored on the same folds.
pub fn random_search(
    x: &Matrix,
    y: &[u8],
    space: &SearchSpace,
    n_iter: usize,
    cv: &CvConfig,
    seed: u64,
) -> Result<SearchOutcome> {
    if n_iter == 0 {
        return Err(Error::InvalidHyperparameter("n_iter must be >= 1".into()));
    }
    let candidates = space.candidates(n_iter, seed::derive(seed, 0))?;
    let cv_seed = seed::derive(seed, 1);
    let trials = candidates
        .into_iter()
        .map(|hp| {
            cross_validate(x, y, &hp, cv, cv_seed).map(|o| Trial {
                hyperparameters: hp,
                mean_f1: o.mean_f1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    finish_search(trials)
}

/// Picks the winner among already scored trials.
pub fn finish_search(trials: Vec<Trial>) -> Result<SearchOutcome> {
    let scores: Vec<f64> = trials.iter().map(|t| t.mean_f1).collect();
    let i = select_best(&scores).ok_or(Error::EmptyInput)?;
    Ok(SearchOutcome {
        best: trials[i].hyperparameters,
        best_score: trials[i].mean_f1,
        trials,
    })
}
