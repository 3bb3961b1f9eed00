//! Cross-validation harness: stratified k-fold splits, repeated runs, and
//! the four-row feature-set ablation.
//!
//! Protocol per fold: the training portion is class-balanced (augmentation
//! never touches test folds), a forest is trained on it, and accuracy is
//! measured on the untouched test fold. Folds and repeats run in parallel;
//! results are reduced in (repeat, fold) order so reports are byte-identical
//! regardless of scheduling.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::features::{
    balance_dataset, prepare_samples, DatasetSample, FeatureConfig, FeatureSet, Label,
    LabeledSample,
};
use crate::gbdt::{fit, Forest, Hyperparams};

/// Classification threshold used when scoring test folds.
pub const EVAL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("dataset has a single class after preparation")]
    SingleClass,
    #[error("repeat {repeat}, fold {fold}: {source}")]
    FoldFailed {
        repeat: usize,
        fold: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

/// Cross-validation settings. Defaults mirror the evaluation protocol:
/// 10 folds, 10 repeats, 2 px augmentation noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvConfig {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub feature_set: FeatureSet,
    pub hyperparams: Hyperparams,
    pub noise_sigma: f64,
}

impl CvConfig {
    pub fn new(seed: u64, feature_set: FeatureSet) -> Self {
        Self {
            k: 10,
            repeats: 10,
            seed,
            feature_set,
            hyperparams: Hyperparams::default(),
            noise_sigma: 2.0,
        }
    }
}

/// One train/test partition, as sorted index lists into the prepared
/// sample vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.r#fn
    }

    fn add(&mut self, other: Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.r#fn += other.r#fn;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub accuracy: f64,
    #[serde(flatten)]
    pub confusion: Confusion,
    /// Augmented training duplicates created for this fold.
    pub augmented: usize,
}

/// Aggregated cross-validation result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub config: CvConfig,
    /// Samples used after preparation.
    pub n_samples: usize,
    /// Frames excluded because the side rule could not resolve.
    pub excluded: usize,
    /// Mean of the per-repeat means — the headline number.
    pub mean_accuracy: f64,
    pub per_repeat_means: Vec<f64>,
    /// Mean over all (repeat, fold) cells, reported alongside.
    pub fold_mean_accuracy: f64,
    pub confusion_totals: Confusion,
    pub per_fold: Vec<FoldResult>,
}

impl CvReport {
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fold_seed(seed: u64, repeat: usize, fold: usize, lane: u64) -> u64 {
    splitmix64(seed ^ splitmix64(((repeat as u64) << 20) ^ ((fold as u64) << 2) ^ lane))
}

/// Per-class stratified partition into k folds. Per class, fold sizes
/// differ by at most one; folds are disjoint and exhaustive; deterministic
/// in (seed, repeat_index).
pub fn kfold_split(
    labels: &[Label],
    k: usize,
    seed: u64,
    repeat_index: usize,
) -> Result<Vec<FoldSplit>, EvalError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if k < 2 {
        return Err(EvalError::TooFewSamples(format!("k = {k} is below 2")));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, label) in labels.iter().enumerate() {
        by_class[if label.is_at_risk() { 0 } else { 1 }].push(i);
    }
    for (class, idxs) in by_class.iter().enumerate() {
        if idxs.len() < k {
            let name = if class == 0 { Label::AtRisk } else { Label::NotAtRisk };
            return Err(EvalError::TooFewSamples(format!(
                "class {name} has {} samples but k = {k}",
                idxs.len()
            )));
        }
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(fold_seed(
        seed,
        repeat_index,
        0,
        0x5EED,
    ));
    let mut test_folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    // Rotate each class's starting fold by the remainders already handed
    // out, so per-class extras land on different folds and total fold
    // sizes also differ by at most one.
    let mut start = 0usize;
    for idxs in by_class.iter_mut() {
        idxs.shuffle(&mut rng);
        for (j, &idx) in idxs.iter().enumerate() {
            test_folds[(j + start) % k].push(idx);
        }
        start += idxs.len() % k;
    }

    let n = labels.len();
    let mut splits = Vec::with_capacity(k);
    for mut test in test_folds {
        test.sort_unstable();
        let mut in_test = vec![false; n];
        for &i in &test {
            in_test[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
        splits.push(FoldSplit { train, test });
    }
    Ok(splits)
}

fn run_fold(
    samples: &[LabeledSample],
    split: &FoldSplit,
    cfg: &CvConfig,
    repeat: usize,
    fold: usize,
) -> Result<FoldResult, EvalError> {
    let wrap = |e: Box<dyn std::error::Error + Send + Sync>| EvalError::FoldFailed {
        repeat,
        fold,
        source: e,
    };

    let train: Vec<LabeledSample> = split.train.iter().map(|&i| samples[i].clone()).collect();
    let balanced = balance_dataset(&train, cfg.noise_sigma, fold_seed(cfg.seed, repeat, fold, 0xBA))
        .map_err(|e| wrap(Box::new(e)))?;
    let augmented = balanced.len() - train.len();

    // No-leakage audit: augmentation happened strictly inside the training
    // portion of this split.
    let test_ids: std::collections::HashSet<&str> =
        split.test.iter().map(|&i| samples[i].source_id.as_str()).collect();
    let train_ids: std::collections::HashSet<&str> =
        split.train.iter().map(|&i| samples[i].source_id.as_str()).collect();
    for s in &balanced {
        assert!(
            train_ids.contains(s.source_id.as_str()),
            "augmented sample {} escaped its training fold",
            s.source_id
        );
        assert!(
            !test_ids.contains(s.source_id.as_str()),
            "training sample {} leaked into the test fold",
            s.source_id
        );
    }

    let forest: Forest = fit(&balanced, &cfg.hyperparams, fold_seed(cfg.seed, repeat, fold, 0xF1))
        .map_err(|e| wrap(Box::new(e)))?;

    let mut confusion = Confusion::default();
    for &i in &split.test {
        let p = forest.predict_proba(&samples[i].features).map_err(|e| wrap(Box::new(e)))?;
        let predicted_risk = p >= EVAL_THRESHOLD;
        match (predicted_risk, samples[i].label.is_at_risk()) {
            (true, true) => confusion.tp += 1,
            (true, false) => confusion.fp += 1,
            (false, false) => confusion.tn += 1,
            (false, true) => confusion.r#fn += 1,
        }
    }
    let accuracy = (confusion.tp + confusion.tn) as f64 / split.test.len() as f64;
    Ok(FoldResult { repeat, fold, accuracy, confusion, augmented })
}

/// Runs repeated stratified k-fold cross-validation on a dataset.
pub fn cross_validate(records: &[DatasetSample], cfg: &CvConfig) -> Result<CvReport, EvalError> {
    let prepared = prepare_samples(records, cfg.feature_set, &FeatureConfig::default());
    let samples = prepared.samples;
    let excluded = prepared.skipped.len();
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    if labels.iter().all(|l| l.is_at_risk()) || labels.iter().all(|l| !l.is_at_risk()) {
        return Err(EvalError::SingleClass);
    }
    if cfg.repeats < 1 {
        return Err(EvalError::TooFewSamples("repeats must be >= 1".into()));
    }

    let mut tasks = Vec::with_capacity(cfg.repeats * cfg.k);
    for repeat in 0..cfg.repeats {
        let splits = kfold_split(&labels, cfg.k, cfg.seed, repeat)?;
        for (fold, split) in splits.into_iter().enumerate() {
            tasks.push((repeat, fold, split));
        }
    }

    let mut results: Vec<FoldResult> = tasks
        .par_iter()
        .map(|(repeat, fold, split)| run_fold(&samples, split, cfg, *repeat, *fold))
        .collect::<Result<_, _>>()?;
    results.sort_by_key(|r| (r.repeat, r.fold));

    let mut per_repeat_means = Vec::with_capacity(cfg.repeats);
    for repeat in 0..cfg.repeats {
        let accs: Vec<f64> =
            results.iter().filter(|r| r.repeat == repeat).map(|r| r.accuracy).collect();
        per_repeat_means.push(accs.iter().sum::<f64>() / accs.len() as f64);
    }
    let mean_accuracy = per_repeat_means.iter().sum::<f64>() / per_repeat_means.len() as f64;
    let fold_mean_accuracy =
        results.iter().map(|r| r.accuracy).sum::<f64>() / results.len() as f64;
    let mut confusion_totals = Confusion::default();
    for r in &results {
        confusion_totals.add(r.confusion);
    }
    assert_eq!(
        confusion_totals.total(),
        cfg.repeats * samples.len(),
        "confusion totals must cover every test evaluation exactly once"
    );

    Ok(CvReport {
        config: cfg.clone(),
        n_samples: samples.len(),
        excluded,
        mean_accuracy,
        per_repeat_means,
        fold_mean_accuracy,
        confusion_totals,
        per_fold: results,
    })
}

/// Runs [`cross_validate`] once per feature set with shared fold partitions
/// (same seed, same sample order), so rows differ only in features.
pub fn ablation_table(
    records: &[DatasetSample],
    base: &CvConfig,
) -> Result<Vec<(FeatureSet, CvReport)>, EvalError> {
    FeatureSet::ALL
        .iter()
        .map(|&set| {
            let cfg = CvConfig { feature_set: set, ..base.clone() };
            cross_validate(records, &cfg).map(|report| (set, report))
        })
        .collect()
}

/// Aligned plain-text table, one row per report.
pub fn format_table(rows: &[(FeatureSet, &CvReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<38} {:>10} {:>9} {:>9} {:>8} {:>7} {:>8} {:>7}\n",
        "feature representation", "mean acc", "min rep", "max rep", "tp", "fp", "tn", "fn"
    ));
    for (set, report) in rows {
        let min = report.per_repeat_means.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = report.per_repeat_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let c = &report.confusion_totals;
        out.push_str(&format!(
            "{:<38} {:>9.2}% {:>8.2}% {:>8.2}% {:>8} {:>7} {:>8} {:>7}\n",
            set.describe(),
            report.mean_accuracy * 100.0,
            min * 100.0,
            max * 100.0,
            c.tp,
            c.fp,
            c.tn,
            c.r#fn
        ));
    }
    out
}

/// Per-fold rows as CSV: repeat, fold, feature_set, accuracy, tp, fp, tn, fn.
pub fn folds_to_csv(rows: &[(FeatureSet, &CvReport)]) -> String {
    let mut out = String::from("repeat,fold,feature_set,accuracy,tp,fp,tn,fn\n");
    for (set, report) in rows {
        for f in &report.per_fold {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                f.repeat,
                f.fold,
                set.cli_name(),
                f.accuracy,
                f.confusion.tp,
                f.confusion.fp,
                f.confusion.tn,
                f.confusion.r#fn
            ));
        }
    }
    out
}
