//! In-bed fall-risk assessment from bed contours and 2D pose keypoints.
//!
//! The pipeline takes per-frame observations (a segmented bed contour plus
//! 17 COCO keypoints with confidences), fits an oriented bed rectangle,
//! derives relative-position features (which side of the bed the body is
//! on, signed knee/head distances to the relevant boundary), classifies
//! frames with a gradient-boosted tree ensemble, and turns the per-frame
//! scores into debounced alert events over a stream.
//!
//! Module map:
//! - [`geometry`] — bed model fitting, side rule, signed distances, ROI.
//! - [`frame`] — the per-frame observation record and its validation.
//! - [`features`] — the four feature layouts, class balancing, dataset IO.
//! - [`gbdt`] — the boosted-tree trainer, predictor, and model files.
//! - [`synth`] — labeled synthetic scene/dataset generation.
//! - [`eval`] — stratified k-fold cross-validation and the ablation table.
//! - [`stream`] — frame ingestion, scoring, and alert debouncing.

pub mod eval;
pub mod features;
pub mod frame;
pub mod gbdt;
pub mod geometry;
pub mod stream;
pub mod synth;

pub use features::{FeatureSet, Label};
pub use frame::FrameRecord;
pub use gbdt::{Forest, Hyperparams};
