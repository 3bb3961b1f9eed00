//! Synthetic scene generation: labeled (bed, skeleton) frames covering the
//! in-bed action classes, used as training corpus and test oracle.
//!
//! A scene is built in bed-local coordinates (lateral, longitudinal), posed
//! by a template, then placed into the 1080x828 frame. Ground truth comes
//! from the knee rule evaluated on the noise-free landmarks against the true
//! rectangle: at-risk iff the nearer-edge knee distance drops below `tau`.
//! Templates place each knee either strictly inside (distance >= tau + 3 px)
//! or strictly beyond (<= tau - 3 px) the risk boundary, so noise-free
//! datasets are separable by the knee-distance features by construction.
//!
//! Observation noise is one knob: `keypoint_noise_sigma` jitters both the
//! keypoints and the bed contour samples, so zero noise means exact
//! geometry. Generation is deterministic: every scene derives its own rng
//! from (seed, index), so scenes may be produced in any order or in
//! parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{DatasetHeader, DatasetSample, Label};
use crate::frame::FrameRecord;
use crate::geometry::{
    determine_side, fit_bed_model, knee_distances, BedModel, GeometryError, Keypoint, Point2,
    Skeleton, DEFAULT_SIDE_MIN_CONFIDENCE, KEYPOINT_COUNT, ROI_TARGET_HEIGHT, ROI_TARGET_WIDTH,
};

/// Margin (px) templates keep between a knee and the risk boundary.
const RISK_MARGIN: f64 = 3.0;

/// How far (px) a risky knee may reach beyond the risk boundary.
const RISK_DEPTH: f64 = 30.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Posture archetypes covering the action classes of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PostureTemplate {
    /// Lying near the bed center. Not at risk by construction.
    LyingCenter,
    /// Lying shifted toward one long edge, knees still inside.
    LyingEdge,
    /// One knee hanging past the risk boundary.
    KneeOverEdge,
    /// Sitting on the edge, both lower legs over the side.
    SittingEdge,
    /// Crawling toward one edge, torso angled, one knee over.
    ClimbingOut,
    /// Rolling over mid-bed; produces either label depending on the
    /// sampled knee placement.
    TurningAround,
}

impl PostureTemplate {
    pub const ALL: [PostureTemplate; 6] = [
        PostureTemplate::LyingCenter,
        PostureTemplate::LyingEdge,
        PostureTemplate::KneeOverEdge,
        PostureTemplate::SittingEdge,
        PostureTemplate::ClimbingOut,
        PostureTemplate::TurningAround,
    ];
}

/// Parameters for one synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub bed_width: f64,
    pub bed_length: f64,
    pub bed_rotation_deg: f64,
    pub bed_center: Point2,
    pub posture: PostureTemplate,
    pub keypoint_noise_sigma: f64,
    pub dropout_prob: f64,
    /// Risk boundary for the ground-truth rule, in pixels from the bed
    /// edge (positive moves the boundary inward).
    pub risk_tau: f64,
}

impl SceneParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |msg: String| Err(SynthError::InvalidParams(msg));
        if !(200.0..=500.0).contains(&self.bed_width) {
            return err(format!("bed_width {} outside [200, 500]", self.bed_width));
        }
        if !(500.0..=800.0).contains(&self.bed_length) {
            return err(format!("bed_length {} outside [500, 800]", self.bed_length));
        }
        if !(-25.0..=25.0).contains(&self.bed_rotation_deg) {
            return err(format!("bed_rotation {} outside [-25, 25] deg", self.bed_rotation_deg));
        }
        if !self.keypoint_noise_sigma.is_finite()
            || self.keypoint_noise_sigma < 0.0
            || !(0.0..=1.0).contains(&self.dropout_prob)
        {
            return err("noise sigma must be >= 0 and dropout a probability".into());
        }
        let tau_cap = 0.15 * self.bed_width;
        if !self.risk_tau.is_finite() || self.risk_tau.abs() > tau_cap.min(40.0) {
            return err(format!(
                "risk tau {} outside +/-{:.1} px for this bed",
                self.risk_tau,
                tau_cap.min(40.0)
            ));
        }
        for corner in self.bed_corners() {
            if corner.x < 0.0
                || corner.y < 0.0
                || corner.x > ROI_TARGET_WIDTH
                || corner.y > ROI_TARGET_HEIGHT
            {
                return err(format!(
                    "bed corner ({:.1}, {:.1}) outside the {}x{} frame",
                    corner.x, corner.y, ROI_TARGET_WIDTH, ROI_TARGET_HEIGHT
                ));
            }
        }
        Ok(())
    }

    fn axes(&self) -> (Point2, Point2) {
        let theta = self.bed_rotation_deg.to_radians();
        let u = Point2::new(theta.cos(), theta.sin());
        (u, u.perp())
    }

    /// Exact rectangle corners in perimeter order.
    pub fn bed_corners(&self) -> [Point2; 4] {
        let (u, v) = self.axes();
        let hu = u.scale(self.bed_length / 2.0);
        let hv = v.scale(self.bed_width / 2.0);
        [
            ((self.bed_center - hu) - hv),
            ((self.bed_center + hu) - hv),
            ((self.bed_center + hu) + hv),
            ((self.bed_center - hu) + hv),
        ]
    }

    /// Bed-local (lateral, longitudinal) to frame coordinates.
    fn to_frame(&self, local: Point2) -> Point2 {
        let (u, v) = self.axes();
        (self.bed_center + u.scale(local.y)) + v.scale(local.x)
    }
}

/// Local-pose scratch: lateral x (toward one long edge), longitudinal y
/// (toward the feet), both centered on the bed.
struct LocalPose {
    points: [Point2; KEYPOINT_COUNT],
}

/// Knee placement relative to the risk boundary at `tau`.
#[derive(Clone, Copy)]
enum KneeBand {
    /// Nearer-edge distance kept >= tau + margin.
    Safe,
    /// Hangs past the boundary on `edge_sign`'s edge: distance <= tau - margin.
    Risky,
}

fn pair(center: f64, half: f64) -> (f64, f64) {
    (center - half, center + half)
}

/// Builds the clean local pose for a template. Every stochastic quantity
/// comes from `rng` in a fixed order.
fn template_pose(params: &SceneParams, rng: &mut ChaCha8Rng) -> LocalPose {
    let w = params.bed_width;
    let l = params.bed_length;
    let tau = params.risk_tau;

    let body_len = l * rng.random_range(0.60..0.75);
    let sh_half = body_len * rng.random_range(0.095..0.115);
    let hip_half = body_len * rng.random_range(0.060..0.075);
    let mu0 = l * rng.random_range(-0.05..0.05);
    let sign_mu: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let edge_draw: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let limb_jitter = rng.random_range(1.0..2.5);
    let jitter = move |rng: &mut ChaCha8Rng| rng.random_range(-1.0..1.0) * limb_jitter;

    // Template-level layout decisions. `edge_sign` is the edge the body
    // leans toward; risky knees always hang over that edge so limb spans
    // stay anatomical.
    let (lat_c, lat_compress, mu_compress, torso_angle, knee_bands, edge_sign) =
        match params.posture {
            PostureTemplate::LyingCenter => {
                let lat = w * rng.random_range(-0.10..0.10);
                (lat, 1.0, 1.0, 0.0, [KneeBand::Safe, KneeBand::Safe], edge_draw)
            }
            PostureTemplate::LyingEdge => {
                let lat = edge_draw * (w / 2.0 - w * rng.random_range(0.18..0.32));
                (lat, 1.0, 1.0, 0.0, [KneeBand::Safe, KneeBand::Safe], edge_draw)
            }
            PostureTemplate::KneeOverEdge => {
                let lat = edge_draw * (w / 2.0 - w * rng.random_range(0.10..0.25));
                let bands = if rng.random_bool(0.5) {
                    [KneeBand::Risky, KneeBand::Safe]
                } else {
                    [KneeBand::Safe, KneeBand::Risky]
                };
                (lat, 1.0, 1.0, 0.0, bands, edge_draw)
            }
            PostureTemplate::SittingEdge => {
                let lat = edge_draw * (w / 2.0 - w * rng.random_range(0.0..0.06));
                (lat, 0.9, 0.55, 0.0, [KneeBand::Risky, KneeBand::Risky], edge_draw)
            }
            PostureTemplate::ClimbingOut => {
                let lat = edge_draw * (w / 2.0 - w * rng.random_range(0.05..0.20));
                // Cap the torso swing so the head reaches at most ~0.45 bed
                // widths past the edge (narrow beds, long bodies).
                let head_radius = 0.42 * body_len * 0.85;
                let cap = (0.45 * w / head_radius).min(1.0).asin();
                let angle = edge_draw * rng.random_range(0.3..0.8f64).min(cap);
                let bands = if rng.random_bool(0.5) {
                    [KneeBand::Risky, KneeBand::Safe]
                } else {
                    [KneeBand::Safe, KneeBand::Risky]
                };
                (lat, 1.0, 0.85, angle, bands, edge_draw)
            }
            PostureTemplate::TurningAround => {
                let lat = edge_draw * w * rng.random_range(0.05..0.25);
                let risky = rng.random_bool(0.5);
                let bands = if risky {
                    if rng.random_bool(0.5) {
                        [KneeBand::Risky, KneeBand::Safe]
                    } else {
                        [KneeBand::Safe, KneeBand::Risky]
                    }
                } else {
                    [KneeBand::Safe, KneeBand::Safe]
                };
                // Rolls toward the nearer edge.
                (lat, rng.random_range(0.3..0.6), 1.0, 0.0, bands, edge_draw)
            }
        };

    let mu = |f: f64| mu0 + f * body_len * mu_compress * sign_mu;
    let mut pts = [Point2::new(0.0, 0.0); KEYPOINT_COUNT];

    // Head cluster.
    pts[0] = Point2::new(lat_c + jitter(rng), mu(-0.40));
    let (eye_l, eye_r) = pair(lat_c, 0.022 * body_len * lat_compress);
    pts[1] = Point2::new(eye_l + jitter(rng), mu(-0.42));
    pts[2] = Point2::new(eye_r + jitter(rng), mu(-0.42));
    let (ear_l, ear_r) = pair(lat_c, 0.042 * body_len * lat_compress);
    pts[3] = Point2::new(ear_l + jitter(rng), mu(-0.41));
    pts[4] = Point2::new(ear_r + jitter(rng), mu(-0.41));

    // Torso and arms.
    let (sh_l, sh_r) = pair(lat_c, sh_half * lat_compress);
    pts[5] = Point2::new(sh_l + jitter(rng), mu(-0.30));
    pts[6] = Point2::new(sh_r + jitter(rng), mu(-0.30));
    let (el_l, el_r) = pair(lat_c, (sh_half + 0.02 * body_len) * lat_compress);
    pts[7] = Point2::new(el_l + jitter(rng), mu(-0.15));
    pts[8] = Point2::new(el_r + jitter(rng), mu(-0.15));
    let (wr_l, wr_r) = pair(lat_c, (sh_half + 0.005 * body_len) * lat_compress);
    pts[9] = Point2::new(wr_l + jitter(rng), mu(-0.02));
    pts[10] = Point2::new(wr_r + jitter(rng), mu(-0.02));
    let (hip_l, hip_r) = pair(lat_c, hip_half * lat_compress);
    pts[11] = Point2::new(hip_l + jitter(rng), mu(0.02));
    pts[12] = Point2::new(hip_r + jitter(rng), mu(0.02));

    // Climbing poses lean the upper body toward the edge: rotate everything
    // above the hips about the hip center.
    if torso_angle != 0.0 {
        let pivot = Point2::new(lat_c, mu(0.02));
        let (s, c) = torso_angle.sin_cos();
        for p in pts.iter_mut().take(11) {
            let r = *p - pivot;
            *p = pivot + Point2::new(c * r.x - s * r.y, s * r.x + c * r.y);
        }
    }

    // Knees: placed directly against their risk band so the ground-truth
    // label is guaranteed regardless of the rest of the pose.
    let knee_mu = match params.posture {
        PostureTemplate::SittingEdge => mu(0.08),
        _ => mu(0.22),
    };
    let ankle_mu = match params.posture {
        PostureTemplate::SittingEdge => mu(0.12),
        _ => mu(0.42),
    };
    let safe_cap = w / 2.0 - (tau + RISK_MARGIN);
    let (knee_nat_l, knee_nat_r) = pair(lat_c, hip_half * rng.random_range(0.8..1.2));
    let mut knee_lat = [knee_nat_l, knee_nat_r];
    for (lat, band) in knee_lat.iter_mut().zip(knee_bands.iter()) {
        match band {
            KneeBand::Safe => {
                // Clamp the natural placement inside the safe region.
                if lat.abs() > safe_cap {
                    *lat = lat.signum() * safe_cap;
                }
            }
            KneeBand::Risky => {
                let d = tau - rng.random_range(RISK_MARGIN..RISK_DEPTH);
                *lat = edge_sign * (w / 2.0 - d);
            }
        }
    }
    pts[13] = Point2::new(knee_lat[0], knee_mu + jitter(rng) * 0.5);
    pts[14] = Point2::new(knee_lat[1], knee_mu + jitter(rng) * 0.5);

    // Ankles trail the knees; over-edge legs reach a little further out.
    for (ankle_idx, knee_idx) in [(15usize, 13usize), (16usize, 14usize)] {
        let out = match knee_bands[knee_idx - 13] {
            KneeBand::Risky => edge_sign * rng.random_range(5.0..20.0),
            KneeBand::Safe => rng.random_range(-0.03..0.03) * w,
        };
        pts[ankle_idx] = Point2::new(pts[knee_idx].x + out, ankle_mu + jitter(rng) * 0.5);
    }

    LocalPose { points: pts }
}

fn clamp_to_frame(p: Point2) -> Point2 {
    Point2::new(p.x.clamp(0.0, ROI_TARGET_WIDTH), p.y.clamp(0.0, ROI_TARGET_HEIGHT))
}

/// Ground-truth rule: at-risk iff the side-rule knee distance of either knee
/// falls below `tau`. Used only to label synthetic scenes.
pub fn oracle_label(skeleton: &Skeleton, bed: &BedModel, tau: f64) -> Result<Label, GeometryError> {
    let side = determine_side(skeleton, bed, DEFAULT_SIDE_MIN_CONFIDENCE)?;
    let (dl, dr) = knee_distances(skeleton, bed, side, 0.0)?;
    Ok(if dl.min(dr) < tau { Label::AtRisk } else { Label::NotAtRisk })
}

/// Generates one frame and its ground-truth label. Deterministic in
/// (`params`, `rng_seed`).
pub fn generate_scene(
    params: &SceneParams,
    rng_seed: u64,
) -> Result<(FrameRecord, Label), SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    // Clean geometry and its label come first so the label never depends on
    // observation noise.
    let pose = template_pose(params, &mut rng);
    let clean: Vec<Point2> = pose.points.iter().map(|&p| params.to_frame(p)).collect();
    let corners = params.bed_corners();
    let true_bed = fit_bed_model(&corners)?;
    let mut clean_kps = [Keypoint::new(0.0, 0.0, 1.0); KEYPOINT_COUNT];
    for (kp, p) in clean_kps.iter_mut().zip(&clean) {
        kp.position = *p;
    }
    let clean_skeleton = Skeleton::new(clean_kps)?;
    let label = oracle_label(&clean_skeleton, &true_bed, params.risk_tau)?;

    let sigma = params.keypoint_noise_sigma;
    let noise = if sigma > 0.0 { Some(Normal::new(0.0, sigma).expect("sigma >= 0")) } else { None };
    let perturb = |rng: &mut ChaCha8Rng, p: Point2| match &noise {
        Some(n) => {
            clamp_to_frame(Point2::new(p.x + n.sample(rng), p.y + n.sample(rng)))
        }
        None => clamp_to_frame(p),
    };

    // Bed contour: corners plus interior samples along each edge, jittered
    // with the same observation noise as the keypoints.
    let mut contour = Vec::with_capacity(32);
    let per_edge = [9usize, 5, 9, 5];
    for (i, &interior) in per_edge.iter().enumerate() {
        let a = corners[i];
        let b = corners[(i + 1) % 4];
        contour.push(perturb(&mut rng, a));
        for k in 1..=interior {
            let t = k as f64 / (interior + 1) as f64;
            let p = Point2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
            contour.push(perturb(&mut rng, p));
        }
    }

    let mut keypoints = Vec::with_capacity(KEYPOINT_COUNT);
    for &p in &clean {
        let noisy = perturb(&mut rng, p);
        let confidence = if rng.random_bool(params.dropout_prob) {
            rng.random_range(0.0..0.049)
        } else {
            rng.random_range(0.55..0.98)
        };
        keypoints.push([noisy.x, noisy.y, confidence]);
    }

    let frame = FrameRecord {
        ts: 0.0,
        session: "scene".to_string(),
        image_w: ROI_TARGET_WIDTH as u32,
        image_h: ROI_TARGET_HEIGHT as u32,
        bed_contour: contour.iter().map(|p| [p.x, p.y]).collect(),
        keypoints,
    };
    Ok((frame, label))
}

/// Dataset-level generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub class_mix: f64,
    pub seed: u64,
    pub tau: f64,
    pub keypoint_noise_sigma: f64,
    pub dropout_prob: f64,
    /// Probability of flipping a stored label, for robustness studies.
    /// Zero by default so benchmarks stay deterministic oracles.
    pub label_flip_prob: f64,
}

impl GeneratorConfig {
    pub fn new(n: usize, class_mix: f64, seed: u64) -> Self {
        Self {
            n,
            class_mix,
            seed,
            tau: 0.0,
            keypoint_noise_sigma: 2.0,
            dropout_prob: 0.02,
            label_flip_prob: 0.0,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn scene_rng_seed(seed: u64, index: usize, lane: u64) -> u64 {
    splitmix64(seed ^ splitmix64((index as u64) << 1 | lane))
}

/// Picks a posture so the expected at-risk fraction approximates
/// `class_mix`. TurningAround contributes risk 0.5; a slice of the
/// probability mass is reserved for it when the mix allows.
fn pick_posture(rng: &mut ChaCha8Rng, class_mix: f64) -> PostureTemplate {
    let turning_share = (2.0 * class_mix.min(1.0 - class_mix)).min(0.2);
    let risky_share = class_mix - turning_share / 2.0;
    let u: f64 = rng.random();
    if u < risky_share {
        match rng.random_range(0..3u8) {
            0 => PostureTemplate::KneeOverEdge,
            1 => PostureTemplate::SittingEdge,
            _ => PostureTemplate::ClimbingOut,
        }
    } else if u < risky_share + turning_share {
        PostureTemplate::TurningAround
    } else if rng.random_bool(0.5) {
        PostureTemplate::LyingCenter
    } else {
        PostureTemplate::LyingEdge
    }
}

fn sample_scene_params(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<SceneParams, SynthError> {
    // Keep landmarks clear of the frame border: risky knees and ankles reach
    // at most ~RISK_DEPTH + 20 px past the bed edge, plus noise spread.
    let margin = 64.0 + 4.0 * cfg.keypoint_noise_sigma;
    // The per-scene tau cap is 15% of the bed width; keep sampled beds wide
    // enough for the requested tau.
    let min_width = (220.0f64).max(cfg.tau.abs() / 0.15 + 1.0);
    if min_width >= 480.0 {
        return Err(SynthError::InvalidParams(format!(
            "tau {} exceeds what any sampled bed supports",
            cfg.tau
        )));
    }
    for _ in 0..100 {
        let bed_width = rng.random_range(min_width..480.0);
        let bed_length = rng.random_range(520.0..780.0);

        // Largest rotation that still fits vertically with the margin.
        let half_diag = (bed_length * bed_length + bed_width * bed_width).sqrt() / 2.0;
        let budget = ROI_TARGET_HEIGHT / 2.0 - margin;
        let theta_fit = if budget >= half_diag {
            25.0f64
        } else {
            let phi = (bed_width / bed_length).atan();
            ((budget / half_diag).asin() - phi).to_degrees().clamp(0.0, 25.0)
        };
        let bed_rotation_deg = rng.random_range(-1.0..1.0) * theta_fit;

        let theta = bed_rotation_deg.to_radians();
        let hx = (bed_length / 2.0) * theta.cos().abs() + (bed_width / 2.0) * theta.sin().abs();
        let hy = (bed_length / 2.0) * theta.sin().abs() + (bed_width / 2.0) * theta.cos().abs();
        let x_lo = hx + margin;
        let x_hi = ROI_TARGET_WIDTH - hx - margin;
        let y_lo = hy + margin;
        let y_hi = ROI_TARGET_HEIGHT - hy - margin;
        if x_lo >= x_hi || y_lo >= y_hi {
            continue;
        }
        let bed_center = Point2::new(rng.random_range(x_lo..x_hi), rng.random_range(y_lo..y_hi));
        let params = SceneParams {
            bed_width,
            bed_length,
            bed_rotation_deg,
            bed_center,
            posture: pick_posture(rng, cfg.class_mix),
            keypoint_noise_sigma: cfg.keypoint_noise_sigma,
            dropout_prob: cfg.dropout_prob,
            risk_tau: cfg.tau,
        };
        params.validate()?;
        return Ok(params);
    }
    Err(SynthError::InvalidParams(
        "could not fit a bed into the frame with the requested noise margin".into(),
    ))
}

/// Generates a labeled dataset. Scene `i` depends only on (`seed`, `i`), so
/// output is independent of generation order.
pub fn generate_dataset(
    cfg: &GeneratorConfig,
) -> Result<(DatasetHeader, Vec<DatasetSample>), SynthError> {
    if cfg.n < 2 {
        return Err(SynthError::InvalidParams(format!("n = {} is below 2", cfg.n)));
    }
    if !(cfg.class_mix > 0.0 && cfg.class_mix < 1.0) {
        return Err(SynthError::InvalidParams(format!(
            "class_mix {} outside (0, 1)",
            cfg.class_mix
        )));
    }
    if !(0.0..=1.0).contains(&cfg.label_flip_prob) {
        return Err(SynthError::InvalidParams("label_flip_prob outside [0, 1]".into()));
    }

    let mut samples = Vec::with_capacity(cfg.n);
    let session = format!("gen-{}", cfg.seed);
    for i in 0..cfg.n {
        let mut params_rng = ChaCha8Rng::seed_from_u64(scene_rng_seed(cfg.seed, i, 0));
        let params = sample_scene_params(cfg, &mut params_rng)?;
        let (mut frame, mut label) = generate_scene(&params, scene_rng_seed(cfg.seed, i, 1))?;
        if cfg.label_flip_prob > 0.0 && params_rng.random_bool(cfg.label_flip_prob) {
            label = match label {
                Label::AtRisk => Label::NotAtRisk,
                Label::NotAtRisk => Label::AtRisk,
            };
        }
        frame.ts = i as f64 / 15.0;
        frame.session = session.clone();
        samples.push(DatasetSample {
            label,
            source_id: format!("scene-{i:06}"),
            frame,
        });
    }

    let header = DatasetHeader {
        generator_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        params: serde_json::to_value(cfg).expect("config serializes"),
    };
    Ok((header, samples))
}
