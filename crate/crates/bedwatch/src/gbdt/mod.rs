//! Gradient-boosted decision trees for binary risk classification.
//!
//! A from-scratch booster with logistic loss: each round fits one tree to
//! the current gradients/hessians, growing leaf-wise (always splitting the
//! leaf with the highest gain) with exact greedy split search over sorted
//! unique feature values. Second-order (Newton) leaf values, shrunk by the
//! learning rate, are stored directly in the leaves, so a prediction is
//! `sigmoid(base_score + sum of routed leaf values)`.
//!
//! No histogram binning and no row/feature subsampling: datasets here are
//! small and exactness is what makes the brute-force oracle tests possible.

mod train;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureSet, FeatureVector, Label, LabeledSample};

pub use train::{best_root_split, fit, fit_raw, RootSplit};

/// Model file format version.
pub const MODEL_FORMAT: &str = "bedwatch-forest";
pub const MODEL_VERSION: u32 = 1;

/// Clamp applied to probabilities so outputs stay strictly inside (0, 1)
/// even when the raw score saturates the sigmoid.
const PROB_CLAMP: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("all training labels are identical")]
    SingleClass,
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported model version {found} (this build reads version {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
}

/// Training hyperparameters. Defaults: learning rate 0.1, 100 trees,
/// 31 leaves, unlimited depth, 20 samples per leaf, no L2 penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub n_trees: usize,
    pub max_leaves: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub lambda_l2: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            n_trees: 100,
            max_leaves: 31,
            max_depth: None,
            min_samples_leaf: 20,
            lambda_l2: 0.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(TrainError::InvalidHyperparams("learning_rate must be > 0".into()));
        }
        if self.n_trees < 1 {
            return Err(TrainError::InvalidHyperparams("n_trees must be >= 1".into()));
        }
        if self.max_leaves < 2 {
            return Err(TrainError::InvalidHyperparams("max_leaves must be >= 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(TrainError::InvalidHyperparams("min_samples_leaf must be >= 1".into()));
        }
        if !self.lambda_l2.is_finite() || self.lambda_l2 < 0.0 {
            return Err(TrainError::InvalidHyperparams("lambda_l2 must be >= 0".into()));
        }
        Ok(())
    }
}

/// A regression tree node. Routing is `x[feature] <= threshold` to the left
/// child; leaf values already include the learning-rate shrinkage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn route(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Collects every split threshold, as (feature, threshold) pairs.
    pub fn thresholds(&self, out: &mut Vec<(usize, f64)>) {
        if let TreeNode::Split { feature, threshold, left, right } = self {
            out.push((*feature, *threshold));
            left.thresholds(out);
            right.thresholds(out);
        }
    }
}

/// How raw pixel quantities were scaled into model inputs; stored so a model
/// file is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingMeta {
    /// Divisors for keypoint x/y coordinates (the working resolution).
    pub coord_divisors: [f64; 2],
    /// Distances are divided by this per-frame quantity.
    pub distance_divisor: DistanceDivisor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceDivisor {
    BedShortAxis,
}

impl Default for ScalingMeta {
    fn default() -> Self {
        Self {
            coord_divisors: [
                crate::geometry::ROI_TARGET_WIDTH,
                crate::geometry::ROI_TARGET_HEIGHT,
            ],
            distance_divisor: DistanceDivisor::BedShortAxis,
        }
    }
}

/// A trained boosted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    format: String,
    version: u32,
    hyperparams: Hyperparams,
    feature_set: FeatureSet,
    scaling: ScalingMeta,
    base_score: f64,
    trees: Vec<TreeNode>,
}

pub(crate) fn sigmoid(raw: f64) -> f64 {
    let p = if raw >= 0.0 {
        1.0 / (1.0 + (-raw).exp())
    } else {
        let e = raw.exp();
        e / (1.0 + e)
    };
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

impl Forest {
    pub(crate) fn new(
        hyperparams: Hyperparams,
        feature_set: FeatureSet,
        base_score: f64,
        trees: Vec<TreeNode>,
    ) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            hyperparams,
            feature_set,
            scaling: ScalingMeta::default(),
            base_score,
            trees,
        }
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn feature_set(&self) -> FeatureSet {
        self.feature_set
    }

    pub fn scaling(&self) -> &ScalingMeta {
        &self.scaling
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    fn check_schema(&self, features: &FeatureVector) -> Result<(), PredictError> {
        if features.set() != self.feature_set {
            return Err(PredictError::SchemaMismatch(format!(
                "model expects feature set '{}', got '{}'",
                self.feature_set,
                features.set()
            )));
        }
        if features.len() != self.feature_set.dimension() {
            return Err(PredictError::SchemaMismatch(format!(
                "model expects {} features, got {}",
                self.feature_set.dimension(),
                features.len()
            )));
        }
        Ok(())
    }

    /// Raw additive score before the sigmoid.
    pub fn raw_score(&self, values: &[f64]) -> f64 {
        let mut raw = self.base_score;
        for tree in &self.trees {
            raw += tree.route(values);
        }
        raw
    }

    /// Probability of the at-risk class, strictly within (0, 1).
    pub fn predict_proba(&self, features: &FeatureVector) -> Result<f64, PredictError> {
        self.check_schema(features)?;
        Ok(sigmoid(self.raw_score(features.values())))
    }

    /// Hard label at the given probability threshold; a tie counts as
    /// at-risk (fail-safe bias).
    pub fn predict(&self, features: &FeatureVector, threshold: f64) -> Result<Label, PredictError> {
        let p = self.predict_proba(features)?;
        Ok(if p >= threshold { Label::AtRisk } else { Label::NotAtRisk })
    }

    /// Writes the versioned self-describing model document. JSON numbers are
    /// emitted with round-trip precision, so save/load reproduces predictions
    /// bit-exactly.
    pub fn save_model<W: Write>(&self, mut w: W) -> Result<(), ModelIoError> {
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(|e| ModelIoError::CorruptModel(e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn load_model<R: Read>(mut r: R) -> Result<Self, ModelIoError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| ModelIoError::CorruptModel(e.to_string()))?;
        let format = value.get("format").and_then(|v| v.as_str());
        if format != Some(MODEL_FORMAT) {
            return Err(ModelIoError::CorruptModel(format!(
                "missing or unknown format tag {format:?}"
            )));
        }
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ModelIoError::CorruptModel("missing version".into()))?;
        if version != MODEL_VERSION as u64 {
            return Err(ModelIoError::VersionMismatch { found: version, expected: MODEL_VERSION });
        }
        serde_json::from_value(value).map_err(|e| ModelIoError::CorruptModel(e.to_string()))
    }
}

/// Per-sample logistic loss, used by the descent tests and reports.
pub fn log_loss(probability: f64, label: Label) -> f64 {
    let y = if label.is_at_risk() { 1.0 } else { 0.0 };
    -(y * probability.ln() + (1.0 - y) * (1.0 - probability).ln())
}

/// Training-set accuracy at a 0.5 threshold, for quick reporting.
pub fn training_accuracy(forest: &Forest, samples: &[LabeledSample]) -> Result<f64, PredictError> {
    let mut correct = 0usize;
    for s in samples {
        if forest.predict(&s.features, 0.5)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::DimScale;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn knee_vector(dl: f64, dr: f64) -> FeatureVector {
        FeatureVector::new(
            FeatureSet::KneeDist,
            vec![dl, dr],
            vec![DimScale { min: 0.0, max: 100.0 }; 2],
        )
        .unwrap()
    }

    pub(crate) fn knee_sample(label: Label, id: &str, dl: f64, dr: f64) -> LabeledSample {
        LabeledSample { features: knee_vector(dl, dr), label, source_id: id.to_string() }
    }

    /// 1-D dataset (second dim constant) with label = (x > 0.5).
    pub(crate) fn threshold_dataset(n: usize, seed: u64) -> Vec<LabeledSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let x: f64 = rng.random();
                let label = if x > 0.5 { Label::AtRisk } else { Label::NotAtRisk };
                knee_sample(label, &format!("t{i}"), x, 0.25)
            })
            .collect()
    }

    #[test]
    fn empty_forest_predicts_base_rate() {
        let forest = Forest::new(Hyperparams::default(), FeatureSet::KneeDist, 0.0, Vec::new());
        let p = forest.predict_proba(&knee_vector(0.3, 0.7)).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn predict_threshold_semantics() {
        let forest = Forest::new(Hyperparams::default(), FeatureSet::KneeDist, 0.0, Vec::new());
        let fv = knee_vector(0.1, 0.1);
        // proba is exactly 0.5: the tie counts as at-risk.
        assert_eq!(forest.predict(&fv, 0.5).unwrap(), Label::AtRisk);
        assert_eq!(forest.predict(&fv, 0.51).unwrap(), Label::NotAtRisk);
        assert_eq!(forest.predict(&fv, 0.0).unwrap(), Label::AtRisk);
    }

    #[test]
    fn proba_stays_in_open_interval() {
        let tree = TreeNode::Leaf { value: 500.0 };
        let forest = Forest::new(Hyperparams::default(), FeatureSet::KneeDist, 0.0, vec![tree]);
        let p = forest.predict_proba(&knee_vector(0.0, 0.0)).unwrap();
        assert!(p > 0.0 && p < 1.0);
        let tree = TreeNode::Leaf { value: -500.0 };
        let forest = Forest::new(Hyperparams::default(), FeatureSet::KneeDist, 0.0, vec![tree]);
        let p = forest.predict_proba(&knee_vector(0.0, 0.0)).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let forest = Forest::new(Hyperparams::default(), FeatureSet::KneeHeadDist, 0.0, Vec::new());
        assert!(matches!(
            forest.predict_proba(&knee_vector(0.1, 0.2)),
            Err(PredictError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let samples = threshold_dataset(200, 3);
        let hp = Hyperparams { n_trees: 20, min_samples_leaf: 5, ..Hyperparams::default() };
        let forest = fit(&samples, &hp, 0).unwrap();

        let mut buf = Vec::new();
        forest.save_model(&mut buf).unwrap();
        let loaded = Forest::load_model(buf.as_slice()).unwrap();
        assert_eq!(loaded, forest);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let fv = knee_vector(rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0));
            let a = forest.predict_proba(&fv).unwrap();
            let b = loaded.predict_proba(&fv).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_model_is_corrupt() {
        let forest = Forest::new(Hyperparams::default(), FeatureSet::KneeDist, 0.1, Vec::new());
        let mut buf = Vec::new();
        forest.save_model(&mut buf).unwrap();
        buf.truncate(buf.len() / 2);
        assert!(matches!(
            Forest::load_model(buf.as_slice()),
            Err(ModelIoError::CorruptModel(_))
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let forest = Forest::new(Hyperparams::default(), FeatureSet::KneeDist, 0.1, Vec::new());
        let mut buf = Vec::new();
        forest.save_model(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(
            Forest::load_model(text.as_bytes()),
            Err(ModelIoError::VersionMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn monotone_routing_between_thresholds() {
        // Noisy labels so trees cut the informative feature in several
        // places (perfectly separable data degenerates to one shared cut).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<LabeledSample> = (0..300)
            .map(|i| {
                let x: f64 = rng.random();
                let noisy = x + rng.random_range(-0.2..0.2);
                let label = if noisy > 0.5 { Label::AtRisk } else { Label::NotAtRisk };
                knee_sample(label, &format!("m{i}"), x, rng.random())
            })
            .collect();
        let hp = Hyperparams { n_trees: 15, min_samples_leaf: 3, ..Hyperparams::default() };
        let forest = fit(&samples, &hp, 0).unwrap();
        let mut cuts: Vec<(usize, f64)> = Vec::new();
        for tree in forest.trees() {
            tree.thresholds(&mut cuts);
        }
        // Perturb feature 0 inside a gap between consecutive thresholds:
        // the prediction must be bit-identical.
        let mut t0: Vec<f64> = cuts.iter().filter(|(f, _)| *f == 0).map(|(_, t)| *t).collect();
        t0.sort_by(f64::total_cmp);
        t0.dedup();
        assert!(t0.len() >= 2, "expected several cuts on the informative feature");
        for w in t0.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let a = forest.predict_proba(&knee_vector(lo + (hi - lo) * 0.25, 0.25)).unwrap();
            let b = forest.predict_proba(&knee_vector(lo + (hi - lo) * 0.75, 0.25)).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
