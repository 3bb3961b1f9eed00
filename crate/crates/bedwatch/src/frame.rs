//! The per-frame observation record: one timestamped bed contour plus a
//! 17-keypoint pose. This is the post-pose-estimation wire format shared by
//! the dataset files and the monitor's input stream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    GeometryError, Keypoint, Point2, RoiTransform, Skeleton, KEYPOINT_COUNT, ROI_TARGET_HEIGHT,
    ROI_TARGET_WIDTH,
};

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("expected {KEYPOINT_COUNT} keypoints, found {0}")]
    KeypointCount(usize),
    #[error("bed contour has {0} points, need at least 4")]
    ContourTooSmall(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("keypoint confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("{kind} coordinate ({x}, {y}) outside image bounds {w}x{h}")]
    OutOfImage {
        kind: &'static str,
        x: f64,
        y: f64,
        w: u32,
        h: u32,
    },
}

/// One observation: timestamp, session id, image size, bed contour polygon
/// and the 17 `[x, y, confidence]` keypoints in COCO order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub ts: f64,
    pub session: String,
    pub image_w: u32,
    pub image_h: u32,
    pub bed_contour: Vec<[f64; 2]>,
    pub keypoints: Vec<[f64; 3]>,
}

impl FrameRecord {
    /// Schema and bounds validation. Timestamp monotonicity is a stream
    /// property and is checked by the ingestor, not here.
    pub fn validate(&self) -> Result<(), FrameError> {
        if self.keypoints.len() != KEYPOINT_COUNT {
            return Err(FrameError::KeypointCount(self.keypoints.len()));
        }
        if self.bed_contour.len() < 4 {
            return Err(FrameError::ContourTooSmall(self.bed_contour.len()));
        }
        if !self.ts.is_finite() {
            return Err(FrameError::NonFinite("ts"));
        }
        let (w, h) = (self.image_w, self.image_h);
        for &[x, y] in &self.bed_contour {
            if !x.is_finite() || !y.is_finite() {
                return Err(FrameError::NonFinite("bed_contour"));
            }
            if x < 0.0 || y < 0.0 || x > w as f64 || y > h as f64 {
                return Err(FrameError::OutOfImage { kind: "bed contour", x, y, w, h });
            }
        }
        for &[x, y, c] in &self.keypoints {
            if !x.is_finite() || !y.is_finite() || !c.is_finite() {
                return Err(FrameError::NonFinite("keypoints"));
            }
            if !(0.0..=1.0).contains(&c) {
                return Err(FrameError::Confidence(c));
            }
            if x < 0.0 || y < 0.0 || x > w as f64 || y > h as f64 {
                return Err(FrameError::OutOfImage { kind: "keypoint", x, y, w, h });
            }
        }
        Ok(())
    }

    pub fn contour_points(&self) -> Vec<Point2> {
        self.bed_contour.iter().map(|&[x, y]| Point2::new(x, y)).collect()
    }

    pub fn skeleton(&self) -> Result<Skeleton, FrameError> {
        if self.keypoints.len() != KEYPOINT_COUNT {
            return Err(FrameError::KeypointCount(self.keypoints.len()));
        }
        let mut kps = [Keypoint::new(0.0, 0.0, 0.0); KEYPOINT_COUNT];
        for (slot, &[x, y, c]) in kps.iter_mut().zip(self.keypoints.iter()) {
            *slot = Keypoint::new(x, y, c);
        }
        Skeleton::new(kps).map_err(|e| match e {
            GeometryError::InvalidConfidence(c) => FrameError::Confidence(c),
            _ => FrameError::NonFinite("keypoints"),
        })
    }
}

/// Maps every coordinate of a frame through the ROI crop-and-resize. The bed
/// contour must lie inside the crop rectangle; keypoints are mapped as-is
/// (a limb may legitimately leave the bed region of interest).
pub fn apply_roi(frame: &FrameRecord, t: &RoiTransform) -> Result<FrameRecord, GeometryError> {
    for &[x, y] in &frame.bed_contour {
        let p = Point2::new(x, y);
        if !p.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if !t.contains(p) {
            return Err(GeometryError::OutOfBounds(
                "bed contour exits the crop rectangle",
            ));
        }
    }
    let bed_contour = frame
        .bed_contour
        .iter()
        .map(|&[x, y]| {
            let p = t.map_point(Point2::new(x, y));
            [p.x, p.y]
        })
        .collect();
    let keypoints = frame
        .keypoints
        .iter()
        .map(|&[x, y, c]| {
            let p = t.map_point(Point2::new(x, y));
            [p.x, p.y, c]
        })
        .collect();
    Ok(FrameRecord {
        ts: frame.ts,
        session: frame.session.clone(),
        image_w: ROI_TARGET_WIDTH as u32,
        image_h: ROI_TARGET_HEIGHT as u32,
        bed_contour,
        keypoints,
    })
}
