//! Seeded synthetic scenes, prediction perturbation, and the independent
//! brute-force oracles (Monte-Carlo IoU, reference AP) used by property
//! tests and acceptance runs.
//!
//! All randomness flows through ChaCha8 streams derived from
//! `(seed, purpose, substream)` with documented mixing, so every artifact is
//! bit-reproducible across platforms. Gaussian draws use the Box-Muller
//! transform on two uniform variates.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{iou_2d, iou_3d, iou_bev, Difficulty, EvalConfig, Metric};
use crate::geometry::{amodal_bbox, ry_to_alpha, wrap_angle, Cuboid3, Dim3, Point2, Point3};
use crate::kitti::ObjectLabel;
use crate::Calibration;

// ---------------------------------------------------------------------------
// seeded streams
// ---------------------------------------------------------------------------

/// Independent randomness purposes; each gets its own ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    Scene = 1,
    Noise = 2,
    MonteCarlo = 3,
}

/// Derive the generator for `(seed, stream, substream)`.
///
/// Mixing: `seed XOR stream * 0x9E3779B97F4A7C15 XOR substream *
/// 0xD1B54A32D192ED03`, fed to `ChaCha8Rng::seed_from_u64` (SplitMix64
/// expansion). Substreams index frames so generation can run frame-parallel.
pub fn stream_rng(seed: u64, stream: RngStream, substream: u64) -> ChaCha8Rng {
    let mixed = seed
        ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ substream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Standard normal draw via Box-Muller.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

// ---------------------------------------------------------------------------
// scene generation
// ---------------------------------------------------------------------------

/// KITTI-style pinhole calibration used by default: f = 721.54,
/// principal point (609.56, 172.85), image 1242x375.
pub fn kitti_like_calibration() -> Calibration {
    Calibration::pinhole(721.54, 609.56, 172.85, 1242, 375)
}

/// Sampling intervals for object dimensions (h, w, l), meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimRanges {
    pub h: (f64, f64),
    pub w: (f64, f64),
    pub l: (f64, f64),
}

impl Default for DimRanges {
    fn default() -> Self {
        Self {
            h: (1.35, 1.85),
            w: (1.55, 1.95),
            l: (3.2, 4.6),
        }
    }
}

/// Scene sampling parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    /// Inclusive range of object counts per frame.
    pub n_objects: (usize, usize),
    /// Camera-frame z interval, meters; the default matches where most
    /// real instances sit (5 m to 80 m).
    pub depth_range: (f64, f64),
    /// Camera-frame x interval, meters.
    pub lateral_range: (f64, f64),
    /// Yaw interval, radians.
    pub yaw_range: (f64, f64),
    pub dim_ranges: DimRanges,
    /// Bottom-face height below the camera, meters (ground plane).
    pub ground_y: f64,
    pub calib: Calibration,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_objects: (4, 9),
            depth_range: (5.0, 80.0),
            lateral_range: (-14.0, 14.0),
            yaw_range: (-std::f64::consts::PI, std::f64::consts::PI),
            dim_ranges: DimRanges::default(),
            ground_y: 1.65,
            calib: kitti_like_calibration(),
        }
    }
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        let ordered = |r: (f64, f64)| r.0 <= r.1 && r.0.is_finite() && r.1.is_finite();
        if self.n_objects.0 > self.n_objects.1 {
            return Err(Error::InvalidSceneSpec {
                reason: format!("object count range {:?} is empty", self.n_objects),
            });
        }
        if !ordered(self.depth_range) || self.depth_range.0 <= 0.0 {
            return Err(Error::InvalidSceneSpec {
                reason: format!("depth range {:?} invalid", self.depth_range),
            });
        }
        if !ordered(self.lateral_range) || !ordered(self.yaw_range) {
            return Err(Error::InvalidSceneSpec {
                reason: "lateral/yaw ranges must be ordered and finite".into(),
            });
        }
        let d = self.dim_ranges;
        if !(ordered(d.h) && ordered(d.w) && ordered(d.l) && d.h.0 > 0.0 && d.w.0 > 0.0 && d.l.0 > 0.0)
        {
            return Err(Error::InvalidSceneSpec {
                reason: "dimension ranges must be positive and ordered".into(),
            });
        }
        Ok(())
    }
}

/// Labels plus calibration for one synthetic frame.
#[derive(Debug, Clone)]
pub struct Scene {
    pub labels: Vec<ObjectLabel>,
    pub calib: Calibration,
}

const PLACEMENT_ATTEMPTS: usize = 1000;

/// Generate one frame. Deterministic in `(spec.seed, frame)`.
///
/// Each object is rejection-sampled until its clipped 2D box is at least
/// 3 px tall/wide with the box center strictly inside the image and every
/// cuboid corner in front of the camera. Truncation derives from the
/// clipping fraction; synthetic scenes carry no occlusion (always 0).
pub fn generate_scene(spec: &SceneSpec, frame: u64) -> Result<Scene> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, RngStream::Scene, frame);
    let count = rng.random_range(spec.n_objects.0..=spec.n_objects.1);
    let mut labels = Vec::with_capacity(count);
    for index in 0..count {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let z = uniform(&mut rng, spec.depth_range);
            let x = uniform(&mut rng, spec.lateral_range);
            let yaw = uniform(&mut rng, spec.yaw_range);
            let dims = Dim3::new(
                uniform(&mut rng, spec.dim_ranges.h),
                uniform(&mut rng, spec.dim_ranges.w),
                uniform(&mut rng, spec.dim_ranges.l),
            );
            let cuboid = Cuboid3::new(Point3::new(x, spec.ground_y, z), dims, yaw);
            let Ok(full) = amodal_bbox(&spec.calib, &cuboid, false) else {
                continue;
            };
            let clipped = full.clip_to_image(spec.calib.image_width, spec.calib.image_height);
            if clipped.width() < 3.0 || clipped.height() < 3.0 {
                continue;
            }
            let center = clipped.center();
            let inside = center.x > 0.0
                && center.x < f64::from(spec.calib.image_width) - 1.0
                && center.y > 0.0
                && center.y < f64::from(spec.calib.image_height) - 1.0;
            if !inside {
                continue;
            }
            let truncation = (1.0 - clipped.area() / full.area()).clamp(0.0, 1.0);
            let alpha = ry_to_alpha(yaw, x, z).expect("z > 0");
            labels.push(ObjectLabel {
                class_name: "Car".into(),
                truncation,
                occlusion: 0,
                alpha,
                bbox2d: clipped,
                dims,
                location: cuboid.location,
                rotation_y: cuboid.yaw,
                score: None,
            });
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::PlacementExhausted {
                index,
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
    }
    Ok(Scene {
        labels,
        calib: spec.calib.clone(),
    })
}

/// Generate `frames` consecutive scenes (substreams 0..frames).
pub fn generate_dataset(spec: &SceneSpec, frames: u64) -> Result<Vec<Scene>> {
    (0..frames).map(|f| generate_scene(spec, f)).collect()
}

// ---------------------------------------------------------------------------
// perturbation
// ---------------------------------------------------------------------------

/// Gaussian corruption model for turning ground truth into predictions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseModel {
    /// Pixel sigma applied to the projected 3D center.
    pub center_px_sigma: f64,
    /// Relative sigma applied to depth (z scales by `1 + sigma * g`).
    pub depth_rel_sigma: f64,
    /// Radians sigma applied to yaw.
    pub yaw_sigma: f64,
    /// Relative sigma applied to each dimension.
    pub dim_rel_sigma: f64,
    /// Probability of injecting a spurious detection per ground truth.
    pub fp_rate: f64,
    /// Probability of dropping a ground truth.
    pub fn_rate: f64,
}

impl NoiseModel {
    fn validate(&self) -> Result<()> {
        let rates_ok = (0.0..1.0).contains(&self.fp_rate) && (0.0..1.0).contains(&self.fn_rate);
        let sigmas_ok = self.center_px_sigma >= 0.0
            && self.depth_rel_sigma >= 0.0
            && self.yaw_sigma >= 0.0
            && self.dim_rel_sigma >= 0.0;
        if !rates_ok || !sigmas_ok {
            return Err(Error::InvalidNoiseModel {
                reason: "sigmas must be >= 0 and rates in [0, 1)".into(),
            });
        }
        Ok(())
    }
}

/// Corrupt ground-truth labels into scored predictions.
///
/// Per object: drop with probability `fn_rate`; otherwise jitter the
/// projected 3D center, depth, yaw, and dimensions, rebuild the 2D box from
/// the perturbed cuboid, and score with `exp(-err)` where `err` sums the
/// normalized injected errors (pixel shift / 20, 4x relative depth error,
/// absolute yaw error, summed relative dimension errors). Zero noise gives
/// identical labels at score 1. Each ground truth additionally spawns a
/// random far-field false positive with probability `fp_rate`, scored
/// `exp(-(1.5 + u))`, u uniform in [0, 1).
pub fn perturb(
    labels: &[ObjectLabel],
    calib: &Calibration,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<ObjectLabel>> {
    noise.validate()?;
    let mut rng = stream_rng(seed, RngStream::Noise, 0);
    let mut out = Vec::with_capacity(labels.len());
    for label in labels {
        if label.is_dont_care() {
            continue;
        }
        if rng.random_range(0.0..1.0) < noise.fn_rate {
            continue;
        }
        let cuboid = label.cuboid();
        let center = cuboid.center();
        let (dz_rel, dcx, dcy) = (
            noise.depth_rel_sigma * gauss(&mut rng),
            noise.center_px_sigma * gauss(&mut rng),
            noise.center_px_sigma * gauss(&mut rng),
        );
        let dyaw = noise.yaw_sigma * gauss(&mut rng);
        let ddims = [
            noise.dim_rel_sigma * gauss(&mut rng),
            noise.dim_rel_sigma * gauss(&mut rng),
            noise.dim_rel_sigma * gauss(&mut rng),
        ];

        let new_z = (center.z * (1.0 + dz_rel)).max(0.5);
        let projected = calib.project(center)?;
        let shifted = Point2::new(projected.x + dcx, projected.y + dcy);
        let new_center = calib.backproject(shifted, new_z)?;
        let dims = Dim3::new(
            (label.dims.h * (1.0 + ddims[0])).max(0.1),
            (label.dims.w * (1.0 + ddims[1])).max(0.1),
            (label.dims.l * (1.0 + ddims[2])).max(0.1),
        );
        let location = Point3::new(new_center.x, new_center.y + dims.h / 2.0, new_center.z);
        let yaw = wrap_angle(label.rotation_y + dyaw);
        let moved = Cuboid3::new(location, dims, yaw);
        let bbox2d = match amodal_bbox(calib, &moved, true) {
            Ok(bbox) if bbox.width() > 0.0 && bbox.height() > 0.0 => bbox,
            _ => label.bbox2d,
        };
        let err = (dcx.hypot(dcy)) / 20.0
            + 4.0 * dz_rel.abs()
            + dyaw.abs()
            + ddims.iter().map(|d| d.abs()).sum::<f64>();
        out.push(ObjectLabel {
            class_name: label.class_name.clone(),
            truncation: label.truncation,
            occlusion: label.occlusion,
            alpha: ry_to_alpha(yaw, location.x, location.z).unwrap_or(label.alpha),
            bbox2d,
            dims,
            location,
            rotation_y: yaw,
            score: Some((-err).exp()),
        });

        if rng.random_range(0.0..1.0) < noise.fp_rate {
            if let Some(fp) = random_false_positive(calib, &mut rng) {
                out.push(fp);
            }
        }
    }
    Ok(out)
}

fn random_false_positive(calib: &Calibration, rng: &mut ChaCha8Rng) -> Option<ObjectLabel> {
    for _ in 0..100 {
        let z = rng.random_range(6.0..60.0);
        let x = rng.random_range(-10.0..10.0);
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let dims = Dim3::new(
            rng.random_range(1.3..1.9),
            rng.random_range(1.5..2.0),
            rng.random_range(3.2..4.6),
        );
        let cuboid = Cuboid3::new(Point3::new(x, 1.65, z), dims, yaw);
        let Ok(full) = amodal_bbox(calib, &cuboid, false) else {
            continue;
        };
        let clipped = full.clip_to_image(calib.image_width, calib.image_height);
        if clipped.width() < 3.0 || clipped.height() < 3.0 {
            continue;
        }
        let score = (-(1.5 + rng.random_range(0.0_f64..1.0))).exp();
        return Some(ObjectLabel {
            class_name: "Car".into(),
            truncation: (1.0 - clipped.area() / full.area()).clamp(0.0, 1.0),
            occlusion: 0,
            alpha: ry_to_alpha(yaw, x, z).unwrap_or(0.0),
            bbox2d: clipped,
            dims,
            location: cuboid.location,
            rotation_y: cuboid.yaw,
            score: Some(score),
        });
    }
    None
}

// ---------------------------------------------------------------------------
// Monte-Carlo IoU oracle
// ---------------------------------------------------------------------------

fn point_in_footprint(c: &Cuboid3<f64>, x: f64, z: f64) -> bool {
    let dx = x - c.location.x;
    let dz = z - c.location.z;
    let (s, co) = c.yaw.sin_cos();
    let local_x = co * dx - s * dz;
    let local_z = s * dx + co * dz;
    local_x.abs() <= c.dims.l / 2.0 && local_z.abs() <= c.dims.w / 2.0
}

fn footprint_bounds(a: &Cuboid3<f64>, b: &Cuboid3<f64>) -> (f64, f64, f64, f64) {
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut z_lo = f64::INFINITY;
    let mut z_hi = f64::NEG_INFINITY;
    for cuboid in [a, b] {
        for p in cuboid.footprint() {
            x_lo = x_lo.min(p.x);
            x_hi = x_hi.max(p.x);
            z_lo = z_lo.min(p.y);
            z_hi = z_hi.max(p.y);
        }
    }
    (x_lo, x_hi, z_lo, z_hi)
}

/// Monte-Carlo estimate of the BEV IoU: uniform samples over the bounding
/// rectangle of both footprints, `|A and B| / |A or B|`. Standard error is
/// about `sqrt(p (1 - p) / n)` relative to the union's hit rate.
pub fn mc_iou_bev(a: &Cuboid3<f64>, b: &Cuboid3<f64>, n_samples: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, RngStream::MonteCarlo, 0);
    let (x_lo, x_hi, z_lo, z_hi) = footprint_bounds(a, b);
    let mut inter = 0u64;
    let mut union = 0u64;
    for _ in 0..n_samples {
        let x = rng.random_range(x_lo..x_hi);
        let z = rng.random_range(z_lo..z_hi);
        let in_a = point_in_footprint(a, x, z);
        let in_b = point_in_footprint(b, x, z);
        inter += u64::from(in_a && in_b);
        union += u64::from(in_a || in_b);
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Monte-Carlo estimate of the volumetric IoU.
pub fn mc_iou_3d(a: &Cuboid3<f64>, b: &Cuboid3<f64>, n_samples: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, RngStream::MonteCarlo, 1);
    let (x_lo, x_hi, z_lo, z_hi) = footprint_bounds(a, b);
    let (a_top, a_bottom) = a.y_interval();
    let (b_top, b_bottom) = b.y_interval();
    let y_lo = a_top.min(b_top);
    let y_hi = a_bottom.max(b_bottom);
    let mut inter = 0u64;
    let mut union = 0u64;
    for _ in 0..n_samples {
        let x = rng.random_range(x_lo..x_hi);
        let z = rng.random_range(z_lo..z_hi);
        let y = rng.random_range(y_lo..y_hi);
        let in_a = point_in_footprint(a, x, z) && y >= a_top && y <= a_bottom;
        let in_b = point_in_footprint(b, x, z) && y >= b_top && y <= b_bottom;
        inter += u64::from(in_a && in_b);
        union += u64::from(in_a || in_b);
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

// ---------------------------------------------------------------------------
// reference evaluator
// ---------------------------------------------------------------------------

// Deliberate re-statement of the devkit tier constants so the reference
// path shares no code with the evaluator under test.
const REF_MIN_HEIGHT: [f64; 3] = [40.0, 25.0, 25.0];
const REF_MAX_OCCLUSION: [i8; 3] = [0, 1, 2];
const REF_MAX_TRUNCATION: [f64; 3] = [0.15, 0.30, 0.50];

fn ref_is_valid(gt: &ObjectLabel, difficulty: Difficulty) -> bool {
    let k = difficulty.index();
    gt.bbox2d.height() >= REF_MIN_HEIGHT[k]
        && gt.occlusion <= REF_MAX_OCCLUSION[k]
        && gt.truncation <= REF_MAX_TRUNCATION[k]
}

fn ref_neighbors(class: &str) -> Vec<String> {
    match class {
        "Car" => vec!["Van".to_string()],
        "Pedestrian" => vec!["Person_sitting".to_string()],
        _ => Vec::new(),
    }
}

fn ref_iou(metric: Metric, det: &ObjectLabel, gt: &ObjectLabel) -> f64 {
    match metric {
        Metric::TwoD => iou_2d(&det.bbox2d, &gt.bbox2d),
        Metric::Bev => iou_bev(&det.cuboid(), &gt.cuboid()),
        Metric::ThreeD => iou_3d(&det.cuboid(), &gt.cuboid()),
    }
}

/// Brute-force 11-point AP under the same matching contract as
/// [`crate::eval::evaluate`], written independently: a global score-ordered
/// sweep with from-scratch selection at every step instead of per-frame
/// streams.
pub fn reference_ap(
    gt_frames: &[Vec<ObjectLabel>],
    det_frames: &[Vec<ObjectLabel>],
    cfg: &EvalConfig,
    difficulty: Difficulty,
) -> f64 {
    assert_eq!(gt_frames.len(), det_frames.len(), "frames must align");
    let neighbors = if cfg.ignore_neighbors {
        ref_neighbors(&cfg.class_name)
    } else {
        Vec::new()
    };

    // Number of valid ground truths over the whole set.
    let mut num_gt = 0usize;
    for gts in gt_frames {
        for gt in gts {
            if gt.class_name == cfg.class_name && ref_is_valid(gt, difficulty) {
                num_gt += 1;
            }
        }
    }
    if num_gt == 0 {
        return 0.0;
    }

    // All class detections, tagged (frame, input index, score).
    let mut pending: Vec<(usize, usize, f64)> = Vec::new();
    for (f, dets) in det_frames.iter().enumerate() {
        for (i, det) in dets.iter().enumerate() {
            if det.class_name == cfg.class_name {
                pending.push((f, i, det.score.unwrap_or(0.0)));
            }
        }
    }

    // Per-frame matched flags over the raw gt lists.
    let mut matched: Vec<Vec<bool>> = gt_frames.iter().map(|g| vec![false; g.len()]).collect();
    let mut processed = vec![false; pending.len()];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::new();

    for _ in 0..pending.len() {
        // Next detection: highest score, ties by (frame, index).
        let mut pick: Option<usize> = None;
        for (i, &(f, d, s)) in pending.iter().enumerate() {
            if processed[i] {
                continue;
            }
            let better = match pick {
                None => true,
                Some(j) => {
                    let (pf, pd, ps) = pending[j];
                    s > ps || (s == ps && (f, d) < (pf, pd))
                }
            };
            if better {
                pick = Some(i);
            }
        }
        let i = pick.expect("one unprocessed detection per iteration");
        processed[i] = true;
        let (f, d, score) = pending[i];
        let det = &det_frames[f][d];

        // Best unmatched matchable gt in this frame.
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gt_frames[f].iter().enumerate() {
            if matched[f][g] {
                continue;
            }
            let matchable = gt.class_name == cfg.class_name
                || neighbors.iter().any(|n| n == &gt.class_name);
            if !matchable {
                continue;
            }
            let iou = ref_iou(cfg.metric, det, gt);
            if iou >= cfg.iou_threshold {
                let take = match best {
                    None => true,
                    Some((_, b)) => iou > b,
                };
                if take {
                    best = Some((g, iou));
                }
            }
        }
        if let Some((g, _)) = best {
            matched[f][g] = true;
            let gt = &gt_frames[f][g];
            if gt.class_name == cfg.class_name && ref_is_valid(gt, difficulty) {
                tp += 1;
                points.push((tp as f64 / num_gt as f64, tp as f64 / (tp + fp) as f64));
            }
            continue;
        }
        let absorbed = gt_frames[f].iter().any(|gt| {
            gt.is_dont_care() && {
                let area = det.bbox2d.area();
                area > 0.0 && det.bbox2d.intersection_area(&gt.bbox2d) / area >= cfg.iou_threshold
            }
        });
        if !absorbed {
            fp += 1;
            points.push((tp as f64 / num_gt as f64, tp as f64 / (tp + fp) as f64));
        }
        let _ = score;
    }

    let mut ap = 0.0;
    for i in 0..=10 {
        let anchor = f64::from(i) / 10.0;
        let mut best = 0.0;
        for &(recall, precision) in &points {
            if recall >= anchor - 1e-12 && precision > best {
                best = precision;
            }
        }
        ap += best;
    }
    ap / 11.0
}
