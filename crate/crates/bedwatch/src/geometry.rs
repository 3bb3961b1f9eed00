//! Bed and body geometry.
//!
//! The bed is modelled as the minimum-area oriented rectangle enclosing the
//! segmented bed contour. Its two long edges become the `left_line` and
//! `right_line`, and the `middle_line` joins the midpoints of the two short
//! edges. Landmarks are scored against those boundaries with signed
//! perpendicular distances: positive inside the bed, negative outside.
//!
//! Everything here is a pure function of its inputs; `BedModel` and
//! `Skeleton` are immutable once built and safe to share across threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Working resolution all frames are normalized to.
pub const ROI_TARGET_WIDTH: f64 = 1080.0;
/// Working resolution all frames are normalized to.
pub const ROI_TARGET_HEIGHT: f64 = 828.0;

/// Number of pose keypoints per skeleton (COCO layout).
pub const KEYPOINT_COUNT: usize = 17;

/// Default confidence gate for the side-determination rule. Raw coordinate
/// features use 0.0 (no gate); the side rule must not flip on garbage points.
pub const DEFAULT_SIDE_MIN_CONFIDENCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate contour: {0}")]
    DegenerateContour(&'static str),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("missing landmark: {0}")]
    MissingLandmark(&'static str),
    #[error("out of bounds: {0}")]
    OutOfBounds(&'static str),
}

/// A point in image coordinates: x rightward, y downward, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        // sqrt rather than hypot: scaling by a power of two is then exact,
        // which the scale-equivariance contract relies on.
        (self.x * self.x + self.y * self.y).sqrt()
    }

    /// Counter-clockwise 90-degree rotation (positive-cross convention).
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;

    fn add(self, other: Point2) -> Point2 {
        Point2::new(self.x + other.x, self.y + other.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;

    fn sub(self, other: Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }
}

/// A directed line through `a` and `b` (direction a -> b), used for the bed
/// boundaries. Offsets are measured against the infinite line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub a: Point2,
    pub b: Point2,
}

impl Line {
    pub fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }

    pub fn midpoint(&self) -> Point2 {
        Point2::new((self.a.x + self.b.x) / 2.0, (self.a.y + self.b.y) / 2.0)
    }

    /// Signed perpendicular offset of `p`: positive on the left of the
    /// direction a -> b (positive-cross convention), magnitude equal to the
    /// point-line distance.
    pub fn offset(&self, p: Point2) -> f64 {
        let dir = self.b - self.a;
        dir.cross(p - self.a) / dir.norm()
    }
}

/// One pose keypoint: position plus the estimator's confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub position: Point2,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self {
            position: Point2::new(x, y),
            confidence,
        }
    }
}

/// COCO keypoint indices. The skeleton stores keypoints in this order, so
/// the index invariant (17 unique slots) holds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum CocoKeypoint {
    Nose = 0,
    LeftEye = 1,
    RightEye = 2,
    LeftEar = 3,
    RightEar = 4,
    LeftShoulder = 5,
    RightShoulder = 6,
    LeftElbow = 7,
    RightElbow = 8,
    LeftWrist = 9,
    RightWrist = 10,
    LeftHip = 11,
    RightHip = 12,
    LeftKnee = 13,
    RightKnee = 14,
    LeftAnkle = 15,
    RightAnkle = 16,
}

impl CocoKeypoint {
    pub const fn index(self) -> usize {
        self as usize
    }
}

/// A full 17-keypoint pose in COCO order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    keypoints: [Keypoint; KEYPOINT_COUNT],
}

impl Skeleton {
    pub fn new(keypoints: [Keypoint; KEYPOINT_COUNT]) -> Result<Self, GeometryError> {
        for kp in &keypoints {
            if !kp.position.is_finite() || !kp.confidence.is_finite() {
                return Err(GeometryError::NonFinite);
            }
            if !(0.0..=1.0).contains(&kp.confidence) {
                return Err(GeometryError::InvalidConfidence(kp.confidence));
            }
        }
        Ok(Self { keypoints })
    }

    pub fn get(&self, which: CocoKeypoint) -> Keypoint {
        self.keypoints[which.index()]
    }

    pub fn keypoints(&self) -> &[Keypoint; KEYPOINT_COUNT] {
        &self.keypoints
    }

    /// Applies a point transform to every keypoint, keeping confidences.
    pub fn map_points<F: Fn(Point2) -> Point2>(&self, f: F) -> Result<Self, GeometryError> {
        let mut out = self.keypoints;
        for kp in &mut out {
            kp.position = f(kp.position);
        }
        Self::new(out)
    }
}

/// Which long edge of the bed a distance is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Left,
    Right,
}

/// Which half of the bed the body occupies, per the head-plus-both-knees
/// rule. `Indeterminate` covers straddling bodies and points exactly on the
/// middle line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Indeterminate,
}

/// Oriented rectangle model of the bed with its three reference lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BedModel {
    corners: [Point2; 4],
    left_line: Line,
    right_line: Line,
    middle_line: Line,
    long_axis_length: f64,
    short_axis_length: f64,
}

impl BedModel {
    pub fn corners(&self) -> &[Point2; 4] {
        &self.corners
    }

    pub fn left_line(&self) -> &Line {
        &self.left_line
    }

    pub fn right_line(&self) -> &Line {
        &self.right_line
    }

    pub fn middle_line(&self) -> &Line {
        &self.middle_line
    }

    pub fn long_axis_length(&self) -> f64 {
        self.long_axis_length
    }

    pub fn short_axis_length(&self) -> f64 {
        self.short_axis_length
    }

    pub fn boundary(&self, which: Boundary) -> &Line {
        match which {
            Boundary::Left => &self.left_line,
            Boundary::Right => &self.right_line,
        }
    }

    pub fn centroid(&self) -> Point2 {
        let mut c = Point2::new(0.0, 0.0);
        for p in &self.corners {
            c = c + *p;
        }
        c.scale(0.25)
    }

    /// Perpendicular distance from `p` to the given long edge, positive on
    /// the bed-interior side of that line, negative outside.
    pub fn signed_distance(&self, p: Point2, which: Boundary) -> Result<f64, GeometryError> {
        if !p.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        let line = self.boundary(which);
        let off = line.offset(p);
        // The centroid is always strictly interior, so its offset fixes
        // which side of the line counts as positive.
        let interior = line.offset(self.centroid());
        Ok(off * interior.signum())
    }

    /// Offset of `p` from the middle line, positive toward the left line.
    /// Zero means exactly on the middle line.
    pub fn middle_offset_toward_left(&self, p: Point2) -> f64 {
        let off = self.middle_line.offset(p);
        let left_ref = self.middle_line.offset(self.left_line.midpoint());
        off * left_ref.signum()
    }
}

fn canonical_long_axis(u: Point2) -> Point2 {
    // Orient the long axis so "rotate it to vertical" is unambiguous:
    // y positive, or x positive when horizontal.
    if u.y < 0.0 || (u.y == 0.0 && u.x < 0.0) {
        u.scale(-1.0)
    } else {
        u
    }
}

/// x-coordinate of `p` after the rotation that maps `u` onto the downward
/// vertical axis. Used to decide which long edge is "left".
fn rotated_x(p: Point2, u: Point2) -> f64 {
    p.cross(u)
}

/// Andrew's monotone chain. Returns the hull in positive-cross order with
/// collinear points dropped.
fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .expect("finite")
            .then(a.y.partial_cmp(&b.y).expect("finite"))
    });
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() < 3 {
        return pts;
    }

    let turn = |o: Point2, a: Point2, b: Point2| (a - o).cross(b - o);
    let mut hull: Vec<Point2> = Vec::with_capacity(pts.len() * 2);
    for &p in pts.iter() {
        while hull.len() >= 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower_len && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Fits the bed model: the minimum-area oriented rectangle over the
/// contour's convex hull (the optimum has a side flush with a hull edge).
/// The two longer edges become `left_line`/`right_line`; "left" is the edge
/// with the smaller x after rotating the long axis to vertical.
pub fn fit_bed_model(contour: &[Point2]) -> Result<BedModel, GeometryError> {
    if contour.len() < 4 {
        return Err(GeometryError::DegenerateContour("fewer than 4 points"));
    }
    if contour.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite);
    }

    let hull = convex_hull(contour);
    if hull.len() < 3 {
        return Err(GeometryError::DegenerateContour("all points collinear"));
    }

    // Scan hull edge directions, tracking the best axis-aligned box in each
    // edge frame. Coordinates are taken relative to hull[0] for precision.
    let origin = hull[0];
    let mut best: Option<(f64, Point2, f64, f64, f64, f64)> = None;
    for i in 0..hull.len() {
        let e = hull[(i + 1) % hull.len()] - hull[i];
        let len = e.norm();
        if len == 0.0 {
            continue;
        }
        let u = e.scale(1.0 / len);
        let n = u.perp();
        let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &hull {
            let r = *p - origin;
            let x = r.dot(u);
            let y = r.dot(n);
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
        let area = (max_x - min_x) * (max_y - min_y);
        if best.is_none() || area < best.as_ref().unwrap().0 {
            best = Some((area, u, min_x, max_x, min_y, max_y));
        }
    }
    let (_, u, min_x, max_x, min_y, max_y) = best.expect("hull has edges");
    let n = u.perp();

    let extent_u = max_x - min_x;
    let extent_n = max_y - min_y;
    let (long_len, short_len) = if extent_u >= extent_n {
        (extent_u, extent_n)
    } else {
        (extent_n, extent_u)
    };
    if short_len <= 1e-9 {
        return Err(GeometryError::DegenerateContour("zero-width contour"));
    }

    let center =
        origin + u.scale((min_x + max_x) / 2.0) + n.scale((min_y + max_y) / 2.0);
    let long_dir = canonical_long_axis(if extent_u >= extent_n { u } else { n });
    let lat_dir = long_dir.perp();

    let mid_a = center + lat_dir.scale(short_len / 2.0);
    let mid_b = center - lat_dir.scale(short_len / 2.0);
    let (left_mid, right_mid) = if rotated_x(mid_a, long_dir) < rotated_x(mid_b, long_dir) {
        (mid_a, mid_b)
    } else {
        (mid_b, mid_a)
    };

    let half = long_dir.scale(long_len / 2.0);
    let left_line = Line::new(left_mid - half, left_mid + half);
    let right_line = Line::new(right_mid - half, right_mid + half);
    let middle_line = Line::new(center - half, center + half);

    // Positive-cross counter-clockwise corner order.
    let corners = [left_line.b, left_line.a, right_line.a, right_line.b];

    Ok(BedModel {
        corners,
        left_line,
        right_line,
        middle_line,
        long_axis_length: long_len,
        short_axis_length: short_len,
    })
}

/// Resolves the head landmark: the nose when confident enough, otherwise the
/// centroid of the confident eyes/ears.
pub fn head_point(skeleton: &Skeleton, min_confidence: f64) -> Result<Point2, GeometryError> {
    let nose = skeleton.get(CocoKeypoint::Nose);
    if nose.confidence >= min_confidence {
        return Ok(nose.position);
    }
    let fallback = [
        CocoKeypoint::LeftEye,
        CocoKeypoint::RightEye,
        CocoKeypoint::LeftEar,
        CocoKeypoint::RightEar,
    ];
    let mut sum = Point2::new(0.0, 0.0);
    let mut count = 0usize;
    for which in fallback {
        let kp = skeleton.get(which);
        if kp.confidence >= min_confidence {
            sum = sum + kp.position;
            count += 1;
        }
    }
    if count == 0 {
        return Err(GeometryError::MissingLandmark("head"));
    }
    Ok(sum.scale(1.0 / count as f64))
}

fn knee(skeleton: &Skeleton, which: CocoKeypoint, min_confidence: f64) -> Result<Point2, GeometryError> {
    let kp = skeleton.get(which);
    if kp.confidence < min_confidence {
        return Err(GeometryError::MissingLandmark(match which {
            CocoKeypoint::LeftKnee => "left knee",
            _ => "right knee",
        }));
    }
    Ok(kp.position)
}

/// Head-plus-both-knees rule: the body is on a side only when all three
/// points are strictly on that side of the middle line. Any point exactly on
/// the middle line, or a straddling configuration, is `Indeterminate`.
pub fn determine_side(
    skeleton: &Skeleton,
    bed: &BedModel,
    min_confidence: f64,
) -> Result<Side, GeometryError> {
    let head = head_point(skeleton, min_confidence)?;
    let left_knee = knee(skeleton, CocoKeypoint::LeftKnee, min_confidence)?;
    let right_knee = knee(skeleton, CocoKeypoint::RightKnee, min_confidence)?;

    let offs = [
        bed.middle_offset_toward_left(head),
        bed.middle_offset_toward_left(left_knee),
        bed.middle_offset_toward_left(right_knee),
    ];
    if offs.iter().all(|&o| o > 0.0) {
        Ok(Side::Left)
    } else if offs.iter().all(|&o| o < 0.0) {
        Ok(Side::Right)
    } else {
        Ok(Side::Indeterminate)
    }
}

/// Signed distance of one landmark to the boundary selected by `side`. For
/// `Indeterminate` the nearer long edge is used per landmark; because the
/// two interior-signed offsets sum to the bed width, that is their minimum.
pub fn side_distance(p: Point2, bed: &BedModel, side: Side) -> Result<f64, GeometryError> {
    match side {
        Side::Left => bed.signed_distance(p, Boundary::Left),
        Side::Right => bed.signed_distance(p, Boundary::Right),
        Side::Indeterminate => {
            let l = bed.signed_distance(p, Boundary::Left)?;
            let r = bed.signed_distance(p, Boundary::Right)?;
            Ok(l.min(r))
        }
    }
}

/// Signed distances of (left knee, right knee) to the boundary selected by
/// `side`; see [`side_distance`].
pub fn knee_distances(
    skeleton: &Skeleton,
    bed: &BedModel,
    side: Side,
    min_confidence: f64,
) -> Result<(f64, f64), GeometryError> {
    let left_knee = knee(skeleton, CocoKeypoint::LeftKnee, min_confidence)?;
    let right_knee = knee(skeleton, CocoKeypoint::RightKnee, min_confidence)?;
    Ok((
        side_distance(left_knee, bed, side)?,
        side_distance(right_knee, bed, side)?,
    ))
}

/// Crop-and-resize mapping into the fixed 1080x828 working resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiTransform {
    pub source_width: f64,
    pub source_height: f64,
    pub crop_origin: Point2,
    pub crop_width: f64,
    pub crop_height: f64,
}

impl RoiTransform {
    pub fn new(
        source_width: f64,
        source_height: f64,
        crop_origin: Point2,
        crop_width: f64,
        crop_height: f64,
    ) -> Result<Self, GeometryError> {
        let vals = [source_width, source_height, crop_width, crop_height];
        if vals.iter().any(|v| !v.is_finite()) || !crop_origin.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if crop_width <= 0.0 || crop_height <= 0.0 {
            return Err(GeometryError::OutOfBounds("empty crop rectangle"));
        }
        if crop_origin.x < 0.0
            || crop_origin.y < 0.0
            || crop_origin.x + crop_width > source_width
            || crop_origin.y + crop_height > source_height
        {
            return Err(GeometryError::OutOfBounds(
                "crop rectangle exits the source image",
            ));
        }
        Ok(Self {
            source_width,
            source_height,
            crop_origin,
            crop_width,
            crop_height,
        })
    }

    /// Identity mapping for frames already at the working resolution.
    pub fn identity() -> Self {
        Self {
            source_width: ROI_TARGET_WIDTH,
            source_height: ROI_TARGET_HEIGHT,
            crop_origin: Point2::new(0.0, 0.0),
            crop_width: ROI_TARGET_WIDTH,
            crop_height: ROI_TARGET_HEIGHT,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.crop_origin.x
            && p.y >= self.crop_origin.y
            && p.x <= self.crop_origin.x + self.crop_width
            && p.y <= self.crop_origin.y + self.crop_height
    }

    /// Source coordinates -> working-resolution coordinates.
    pub fn map_point(&self, p: Point2) -> Point2 {
        Point2::new(
            (p.x - self.crop_origin.x) * (ROI_TARGET_WIDTH / self.crop_width),
            (p.y - self.crop_origin.y) * (ROI_TARGET_HEIGHT / self.crop_height),
        )
    }

    /// Inverse of [`map_point`](Self::map_point).
    pub fn unmap_point(&self, p: Point2) -> Point2 {
        Point2::new(
            p.x * (self.crop_width / ROI_TARGET_WIDTH) + self.crop_origin.x,
            p.y * (self.crop_height / ROI_TARGET_HEIGHT) + self.crop_origin.y,
        )
    }
}
