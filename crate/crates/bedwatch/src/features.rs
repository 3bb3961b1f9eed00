//! Feature assembly, class balancing, and the newline-delimited dataset
//! file format.
//!
//! Four feature layouts are supported, from the two knee distances alone up
//! to the full 17-keypoint coordinates plus knee and head distances. The
//! concatenation order is frozen: `[keypoint x,y pairs in COCO order (if
//! included)] ++ [left-knee distance, right-knee distance] ++ [head distance
//! (if included)]`. Keypoint coordinates are divided by the 1080x828 working
//! resolution; distances are divided by the fitted bed's short-axis length,
//! which makes them bed-size invariant.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::FrameRecord;
use crate::geometry::{
    determine_side, fit_bed_model, head_point, knee_distances, side_distance, BedModel,
    GeometryError, Side, Skeleton, DEFAULT_SIDE_MIN_CONFIDENCE, KEYPOINT_COUNT, ROI_TARGET_HEIGHT,
    ROI_TARGET_WIDTH,
};

/// Frame-level class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    AtRisk,
    NotAtRisk,
}

impl Label {
    pub fn is_at_risk(self) -> bool {
        matches!(self, Label::AtRisk)
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::AtRisk => "at_risk",
            Label::NotAtRisk => "not_at_risk",
        })
    }
}

/// The four feature layouts, in ablation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    /// Two knee distances.
    #[serde(rename = "knee")]
    KneeDist,
    /// Knee distances plus the head distance.
    #[serde(rename = "knee-head")]
    KneeHeadDist,
    /// 17 keypoint coordinates plus knee distances.
    #[serde(rename = "kp-knee")]
    KeypointsKnee,
    /// 17 keypoint coordinates plus knee and head distances.
    #[serde(rename = "kp-knee-head")]
    KeypointsKneeHead,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [
        FeatureSet::KneeDist,
        FeatureSet::KneeHeadDist,
        FeatureSet::KeypointsKnee,
        FeatureSet::KeypointsKneeHead,
    ];

    pub fn includes_keypoints(self) -> bool {
        matches!(self, FeatureSet::KeypointsKnee | FeatureSet::KeypointsKneeHead)
    }

    pub fn includes_head(self) -> bool {
        matches!(self, FeatureSet::KneeHeadDist | FeatureSet::KeypointsKneeHead)
    }

    pub fn dimension(self) -> usize {
        let mut d = 2; // the two knee distances are always present
        if self.includes_keypoints() {
            d += 2 * KEYPOINT_COUNT;
        }
        if self.includes_head() {
            d += 1;
        }
        d
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            FeatureSet::KneeDist => "knee",
            FeatureSet::KneeHeadDist => "knee-head",
            FeatureSet::KeypointsKnee => "kp-knee",
            FeatureSet::KeypointsKneeHead => "kp-knee-head",
        }
    }

    /// Human-readable row label for report tables.
    pub fn describe(self) -> &'static str {
        match self {
            FeatureSet::KneeDist => "knee distances",
            FeatureSet::KneeHeadDist => "knee + head distances",
            FeatureSet::KeypointsKnee => "17 keypoints + knee distances",
            FeatureSet::KeypointsKneeHead => "17 keypoints + knee + head distances",
        }
    }
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "knee" => Ok(FeatureSet::KneeDist),
            "knee-head" => Ok(FeatureSet::KneeHeadDist),
            "kp-knee" => Ok(FeatureSet::KeypointsKnee),
            "kp-knee-head" => Ok(FeatureSet::KeypointsKneeHead),
            other => Err(format!(
                "unknown feature set '{other}' (expected knee|knee-head|kp-knee|kp-knee-head)"
            )),
        }
    }
}

/// Per-dimension (min, max) used to scale the raw pixel quantity into the
/// stored feature value: `scaled = (raw - min) / (max - min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimScale {
    pub min: f64,
    pub max: f64,
}

impl DimScale {
    fn span(self) -> f64 {
        self.max - self.min
    }
}

/// A flat feature vector with its layout tag and the per-dimension scaling
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    set: FeatureSet,
    values: Vec<f64>,
    scales: Vec<DimScale>,
}

impl FeatureVector {
    pub fn new(set: FeatureSet, values: Vec<f64>, scales: Vec<DimScale>) -> Result<Self, FeatureError> {
        if values.len() != set.dimension() || scales.len() != set.dimension() {
            return Err(FeatureError::Dimension {
                set,
                expected: set.dimension(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite);
        }
        Ok(Self { set, values, scales })
    }

    pub fn set(&self) -> FeatureSet {
        self.set
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scales(&self) -> &[DimScale] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One training sample. Augmented duplicates share their origin's
/// `source_id`, which is what the no-leakage audit keys on.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: Label,
    pub source_id: String,
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("feature vector for {set} must have {expected} values, found {found}")]
    Dimension {
        set: FeatureSet,
        expected: usize,
        found: usize,
    },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("class {0} has no samples")]
    EmptyClass(Label),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Frame(#[from] crate::frame::FrameError),
}

/// Confidence gates used while assembling features. The side rule is gated
/// (default 0.05); raw coordinates and distance landmarks are not (0.0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub side_min_confidence: f64,
    pub landmark_min_confidence: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            side_min_confidence: DEFAULT_SIDE_MIN_CONFIDENCE,
            landmark_min_confidence: 0.0,
        }
    }
}

/// Assembles one feature vector from a skeleton and a fitted bed.
///
/// The side rule picks the boundary; an `Indeterminate` side falls back to
/// the nearer long edge per landmark. A `MissingLandmark` from the side rule
/// (head or knee below the confidence gate) propagates to the caller.
pub fn build_features(
    skeleton: &Skeleton,
    bed: &BedModel,
    set: FeatureSet,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    let side = determine_side(skeleton, bed, cfg.side_min_confidence)?;
    build_features_with_side(skeleton, bed, set, side, cfg)
}

/// Same as [`build_features`] with the side already determined.
pub fn build_features_with_side(
    skeleton: &Skeleton,
    bed: &BedModel,
    set: FeatureSet,
    side: Side,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    let dim = set.dimension();
    let mut values = Vec::with_capacity(dim);
    let mut scales = Vec::with_capacity(dim);
    let short = bed.short_axis_length();

    if set.includes_keypoints() {
        for kp in skeleton.keypoints() {
            values.push(kp.position.x / ROI_TARGET_WIDTH);
            scales.push(DimScale { min: 0.0, max: ROI_TARGET_WIDTH });
            values.push(kp.position.y / ROI_TARGET_HEIGHT);
            scales.push(DimScale { min: 0.0, max: ROI_TARGET_HEIGHT });
        }
    }

    let (dl, dr) = knee_distances(skeleton, bed, side, cfg.landmark_min_confidence)?;
    values.push(dl / short);
    scales.push(DimScale { min: 0.0, max: short });
    values.push(dr / short);
    scales.push(DimScale { min: 0.0, max: short });

    if set.includes_head() {
        let head = head_point(skeleton, cfg.landmark_min_confidence)?;
        let dh = side_distance(head, bed, side)?;
        values.push(dh / short);
        scales.push(DimScale { min: 0.0, max: short });
    }

    FeatureVector::new(set, values, scales)
}

/// Oversamples the minority class until class counts are equal.
///
/// Duplicates are drawn uniformly at random (seeded) from the minority
/// class; each duplicate's pre-normalization pixel quantities are perturbed
/// with i.i.d. Gaussian noise of `noise_sigma` pixels, applied through the
/// per-dimension scaling (`value += N(0, sigma) / span`). Originals pass
/// through unmodified and the output order is a deterministic shuffle of
/// the seed. A `noise_sigma` of zero yields bit-identical duplicates.
pub fn balance_dataset(
    samples: &[LabeledSample],
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<LabeledSample>, FeatureError> {
    let at_risk: Vec<&LabeledSample> = samples.iter().filter(|s| s.label.is_at_risk()).collect();
    let not_at_risk: Vec<&LabeledSample> =
        samples.iter().filter(|s| !s.label.is_at_risk()).collect();
    if at_risk.is_empty() {
        return Err(FeatureError::EmptyClass(Label::AtRisk));
    }
    if not_at_risk.is_empty() {
        return Err(FeatureError::EmptyClass(Label::NotAtRisk));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let minority = if at_risk.len() < not_at_risk.len() { &at_risk } else { &not_at_risk };
    let needed = at_risk.len().abs_diff(not_at_risk.len());

    let mut out: Vec<LabeledSample> = samples.to_vec();
    out.reserve(needed);
    let normal = if noise_sigma > 0.0 {
        Some(Normal::new(0.0, noise_sigma).expect("sigma >= 0"))
    } else {
        None
    };
    for _ in 0..needed {
        let pick = minority[rng.random_range(0..minority.len())];
        let mut dup = pick.clone();
        if let Some(normal) = &normal {
            for (v, scale) in dup.features.values.iter_mut().zip(dup.features.scales.iter()) {
                *v += normal.sample(&mut rng) / scale.span();
            }
        }
        out.push(dup);
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// One line of the dataset file: the label, a stable source id, and the raw
/// frame. Features are always recomputed from the frame so every feature-set
/// ablation shares one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub label: Label,
    pub source_id: String,
    pub frame: FrameRecord,
}

/// Optional first line of a dataset file identifying its generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub generator_version: String,
    pub seed: u64,
    pub params: serde_json::Value,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid frame: {message}")]
    Validation { line: usize, message: String },
    #[error("dataset is empty")]
    Empty,
}

pub fn write_dataset<W: Write>(
    mut w: W,
    header: Option<&DatasetHeader>,
    samples: &[DatasetSample],
) -> Result<(), DatasetError> {
    if let Some(header) = header {
        serde_json::to_writer(&mut w, header).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    for sample in samples {
        serde_json::to_writer(&mut w, sample).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(
    r: R,
) -> Result<(Option<DatasetHeader>, Vec<DatasetSample>), DatasetError> {
    let mut header = None;
    let mut samples = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if line_no == 1 {
            if let Ok(h) = serde_json::from_str::<DatasetHeader>(&line) {
                header = Some(h);
                continue;
            }
        }
        let sample: DatasetSample =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        sample.frame.validate().map_err(|e| DatasetError::Validation {
            line: line_no,
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok((header, samples))
}

/// A dataset turned into feature vectors. Frames whose side rule cannot
/// resolve (head or knee confidence below the gate, or a degenerate bed
/// contour) are reported in `skipped` rather than silently dropped.
#[derive(Debug)]
pub struct PreparedDataset {
    pub samples: Vec<LabeledSample>,
    pub skipped: Vec<(String, FeatureError)>,
}

pub fn prepare_samples(
    records: &[DatasetSample],
    set: FeatureSet,
    cfg: &FeatureConfig,
) -> PreparedDataset {
    let mut samples = Vec::with_capacity(records.len());
    let mut skipped = Vec::new();
    for record in records {
        let built = record
            .frame
            .skeleton()
            .map_err(FeatureError::from)
            .and_then(|skel| {
                let bed = fit_bed_model(&record.frame.contour_points())?;
                build_features(&skel, &bed, set, cfg)
            });
        match built {
            Ok(features) => samples.push(LabeledSample {
                features,
                label: record.label,
                source_id: record.source_id.clone(),
            }),
            Err(e) => skipped.push((record.source_id.clone(), e)),
        }
    }
    PreparedDataset { samples, skipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CocoKeypoint, Keypoint, Point2};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn bed() -> BedModel {
        fit_bed_model(&[
            Point2::new(0.0, 0.0),
            Point2::new(100.0, 0.0),
            Point2::new(100.0, 200.0),
            Point2::new(0.0, 200.0),
        ])
        .unwrap()
    }

    fn skeleton_at(head: (f64, f64), lk: (f64, f64), rk: (f64, f64)) -> Skeleton {
        let mut kps = [Keypoint::new(40.0, 40.0, 0.8); KEYPOINT_COUNT];
        kps[CocoKeypoint::Nose.index()] = Keypoint::new(head.0, head.1, 0.9);
        kps[CocoKeypoint::LeftKnee.index()] = Keypoint::new(lk.0, lk.1, 0.9);
        kps[CocoKeypoint::RightKnee.index()] = Keypoint::new(rk.0, rk.1, 0.9);
        Skeleton::new(kps).unwrap()
    }

    fn sample(label: Label, id: &str, dl: f64, dr: f64) -> LabeledSample {
        let scales = vec![DimScale { min: 0.0, max: 100.0 }; 2];
        LabeledSample {
            features: FeatureVector::new(FeatureSet::KneeDist, vec![dl, dr], scales).unwrap(),
            label,
            source_id: id.to_string(),
        }
    }

    #[test]
    fn knee_dist_layout_and_normalization() {
        let bed = bed();
        // Knees at the bed centroid on the left side: 50 px / 100 px width.
        let skel = skeleton_at((20.0, 30.0), (50.0, 100.0), (50.0, 100.0));
        let fv = build_features_with_side(&skel, &bed, FeatureSet::KneeDist, Side::Left, &FeatureConfig::default())
            .unwrap();
        assert_eq!(fv.values(), &[0.5, 0.5]);
    }

    #[test]
    fn head_distance_is_trailing() {
        let bed = bed();
        let skel = skeleton_at((25.0, 30.0), (20.0, 100.0), (30.0, 100.0));
        let knee = build_features(&skel, &bed, FeatureSet::KneeDist, &FeatureConfig::default()).unwrap();
        let knee_head =
            build_features(&skel, &bed, FeatureSet::KneeHeadDist, &FeatureConfig::default()).unwrap();
        assert_eq!(knee_head.len(), 3);
        assert_eq!(&knee_head.values()[..2], knee.values());
        // Head at x=25 on the left side: distance 25 px / 100 px width.
        assert_relative_eq!(knee_head.values()[2], 0.25, max_relative = 1e-12);
    }

    #[test]
    fn full_layout_has_37_dimensions() {
        let bed = bed();
        let skel = skeleton_at((20.0, 30.0), (25.0, 100.0), (30.0, 100.0));
        let fv =
            build_features(&skel, &bed, FeatureSet::KeypointsKneeHead, &FeatureConfig::default()).unwrap();
        assert_eq!(fv.len(), 37);
        assert_eq!(FeatureSet::KeypointsKneeHead.dimension(), 37);
        assert_eq!(FeatureSet::KeypointsKnee.dimension(), 36);
        // First pair is the nose, normalized by the working resolution.
        assert_relative_eq!(fv.values()[0], 20.0 / 1080.0, max_relative = 1e-12);
        assert_relative_eq!(fv.values()[1], 30.0 / 828.0, max_relative = 1e-12);
    }

    #[test]
    fn distance_features_are_scale_invariant() {
        // Scaling bed and skeleton together leaves normalized distances
        // untouched: distances and the bed width scale by the same factor.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let s = rng.random_range(0.3..3.0f64);
            let bed1 = bed();
            let skel1 = skeleton_at(
                (rng.random_range(5.0..45.0), rng.random_range(10.0..90.0)),
                (rng.random_range(5.0..45.0), rng.random_range(100.0..190.0)),
                (rng.random_range(5.0..45.0), rng.random_range(100.0..190.0)),
            );
            let contour2: Vec<Point2> = bed1.corners().iter().map(|p| p.scale(s)).collect();
            let bed2 = fit_bed_model(&contour2).unwrap();
            let skel2 = skel1.map_points(|p| p.scale(s)).unwrap();
            let cfg = FeatureConfig::default();
            let f1 = build_features(&skel1, &bed1, FeatureSet::KneeHeadDist, &cfg).unwrap();
            let f2 = build_features(&skel2, &bed2, FeatureSet::KneeHeadDist, &cfg).unwrap();
            for (a, b) in f1.values().iter().zip(f2.values()) {
                assert_relative_eq!(a, b, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn balance_equalizes_counts() {
        let mut samples = vec![
            sample(Label::AtRisk, "a0", -0.1, 0.4),
            sample(Label::AtRisk, "a1", -0.2, 0.3),
        ];
        for i in 0..6 {
            samples.push(sample(Label::NotAtRisk, &format!("n{i}"), 0.3, 0.5));
        }
        let out = balance_dataset(&samples, 2.0, 99).unwrap();
        assert_eq!(out.len(), 12);
        assert_eq!(out.iter().filter(|s| s.label.is_at_risk()).count(), 6);
        // Provenance: every augmented id exists in the input.
        for s in &out {
            assert!(samples.iter().any(|orig| orig.source_id == s.source_id));
        }
        // Originals pass through unmodified.
        for orig in &samples {
            assert!(out.contains(orig));
        }
    }

    #[test]
    fn balance_zero_sigma_duplicates_bitwise() {
        let samples = vec![
            sample(Label::AtRisk, "a0", -0.125, 0.375),
            sample(Label::NotAtRisk, "n0", 0.25, 0.5),
            sample(Label::NotAtRisk, "n1", 0.3, 0.55),
            sample(Label::NotAtRisk, "n2", 0.35, 0.6),
        ];
        let out = balance_dataset(&samples, 0.0, 7).unwrap();
        assert_eq!(out.len(), 6);
        let dupes: Vec<_> = out.iter().filter(|s| s.source_id == "a0").collect();
        assert_eq!(dupes.len(), 3);
        for d in dupes {
            assert_eq!(d.features.values(), samples[0].features.values());
        }
    }

    #[test]
    fn balance_already_balanced_is_noop_modulo_order() {
        let samples = vec![
            sample(Label::AtRisk, "a0", -0.1, 0.4),
            sample(Label::NotAtRisk, "n0", 0.3, 0.5),
        ];
        let mut out = balance_dataset(&samples, 3.0, 1).unwrap();
        out.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        assert_eq!(out, samples);
    }

    #[test]
    fn balance_rejects_empty_class() {
        let samples = vec![sample(Label::AtRisk, "a0", -0.1, 0.4)];
        assert!(matches!(
            balance_dataset(&samples, 1.0, 0),
            Err(FeatureError::EmptyClass(Label::NotAtRisk))
        ));
    }

    #[test]
    fn balance_is_deterministic() {
        let mut samples = vec![sample(Label::AtRisk, "a0", -0.1, 0.4)];
        for i in 0..9 {
            samples.push(sample(Label::NotAtRisk, &format!("n{i}"), 0.3, 0.5));
        }
        let a = balance_dataset(&samples, 2.0, 1234).unwrap();
        let b = balance_dataset(&samples, 2.0, 1234).unwrap();
        assert_eq!(a, b);
        let c = balance_dataset(&samples, 2.0, 1235).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dataset_file_round_trip() {
        let frame = crate::frame::tests::sample_frame();
        let samples = vec![
            DatasetSample { label: Label::AtRisk, source_id: "s0".into(), frame: frame.clone() },
            DatasetSample { label: Label::NotAtRisk, source_id: "s1".into(), frame },
        ];
        let header = DatasetHeader {
            generator_version: "test".into(),
            seed: 42,
            params: serde_json::json!({"n": 2}),
        };
        let mut buf = Vec::new();
        write_dataset(&mut buf, Some(&header), &samples).unwrap();
        let (h, back) = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(h, Some(header));
        assert_eq!(back, samples);
    }

    #[test]
    fn dataset_reports_bad_lines() {
        let err = read_dataset("not json\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn dimension_always_matches_schema(
            hx in 5.0..95.0f64, hy in 5.0..195.0f64,
            lx in 5.0..95.0f64, ly in 5.0..195.0f64,
            rx in 5.0..95.0f64, ry in 5.0..195.0f64,
            set_idx in 0usize..4,
        ) {
            let set = FeatureSet::ALL[set_idx];
            let fv = build_features(
                &skeleton_at((hx, hy), (lx, ly), (rx, ry)),
                &bed(),
                set,
                &FeatureConfig::default(),
            ).unwrap();
            prop_assert_eq!(fv.len(), set.dimension());
        }

        #[test]
        fn balance_counts_match_max(n_pos in 1usize..12, n_neg in 1usize..12, seed in 0u64..1000) {
            let mut samples = Vec::new();
            for i in 0..n_pos {
                samples.push(sample(Label::AtRisk, &format!("p{i}"), -0.1, 0.2));
            }
            for i in 0..n_neg {
                samples.push(sample(Label::NotAtRisk, &format!("n{i}"), 0.4, 0.5));
            }
            let out = balance_dataset(&samples, 1.0, seed).unwrap();
            let pos = out.iter().filter(|s| s.label.is_at_risk()).count();
            prop_assert_eq!(pos, n_pos.max(n_neg));
            prop_assert_eq!(out.len() - pos, n_pos.max(n_neg));
        }
    }
}
