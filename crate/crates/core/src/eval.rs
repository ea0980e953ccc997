//! KITTI-protocol evaluation: difficulty tiers, 2D / rotated-BEV / 3D IoU,
//! greedy score-ordered matching, and 11-point interpolated average
//! precision.
//!
//! Matching contract (shared with the independent reference evaluator in
//! [`crate::synth`]):
//! - detections of the evaluated class are ranked by descending score, ties
//!   broken by frame order then input order within the frame;
//! - each detection greedily takes the unmatched matchable ground truth with
//!   the highest IoU at or above the threshold (ties: lowest index).
//!   Matchable ground truths are same-class boxes (valid for the difficulty
//!   or not) and, when neighbor handling is on, neighbor-class boxes
//!   (e.g. Van for Car);
//! - a match to a difficulty-invalid or neighbor ground truth is neither TP
//!   nor FP; an unmatched detection covered by a DontCare region
//!   (2D intersection over detection area at or above the threshold) is
//!   likewise dropped; everything else is FP;
//! - the ground-truth count for recall is the number of difficulty-valid
//!   same-class boxes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::{cst, Real};
use crate::geometry::{BBox2, Cuboid3, Point2};
use crate::kitti::ObjectLabel;

// ---------------------------------------------------------------------------
// difficulty
// ---------------------------------------------------------------------------

/// KITTI visibility tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn index(self) -> usize {
        match self {
            Difficulty::Easy => 0,
            Difficulty::Moderate => 1,
            Difficulty::Hard => 2,
        }
    }
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
        })
    }
}

/// Admission criteria for one difficulty tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyThresholds {
    pub min_bbox_height: f64,
    pub max_occlusion: i8,
    pub max_truncation: f64,
}

impl DifficultyThresholds {
    fn admits(&self, label: &ObjectLabel, bbox_height_px: f64) -> bool {
        bbox_height_px >= self.min_bbox_height
            && label.occlusion <= self.max_occlusion
            && label.truncation <= self.max_truncation
    }
}

/// Official devkit tier thresholds, easy / moderate / hard.
pub const DEVKIT_THRESHOLDS: [DifficultyThresholds; 3] = [
    DifficultyThresholds {
        min_bbox_height: 40.0,
        max_occlusion: 0,
        max_truncation: 0.15,
    },
    DifficultyThresholds {
        min_bbox_height: 25.0,
        max_occlusion: 1,
        max_truncation: 0.30,
    },
    DifficultyThresholds {
        min_bbox_height: 25.0,
        max_occlusion: 2,
        max_truncation: 0.50,
    },
];

/// Strictest tier the object satisfies, or `None` when it is ignored at
/// every tier. Tiers are nested: an Easy object also counts for Moderate
/// and Hard.
pub fn assign_difficulty(label: &ObjectLabel, bbox_height_px: f64) -> Option<Difficulty> {
    assign_difficulty_with(&DEVKIT_THRESHOLDS, label, bbox_height_px)
}

pub fn assign_difficulty_with(
    thresholds: &[DifficultyThresholds; 3],
    label: &ObjectLabel,
    bbox_height_px: f64,
) -> Option<Difficulty> {
    Difficulty::ALL
        .into_iter()
        .find(|d| thresholds[d.index()].admits(label, bbox_height_px))
}

// ---------------------------------------------------------------------------
// IoU kernels
// ---------------------------------------------------------------------------

/// Axis-aligned 2D IoU: intersection area over union area.
pub fn iou_2d<T: Real>(a: &BBox2<T>, b: &BBox2<T>) -> T {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        T::zero()
    } else {
        inter / union
    }
}

/// 2D intersection over the area of `a` (the devkit's DontCare criterion).
pub fn intersection_over_area<T: Real>(a: &BBox2<T>, b: &BBox2<T>) -> T {
    let area = a.area();
    if area <= T::zero() {
        T::zero()
    } else {
        a.intersection_area(b) / area
    }
}

/// Signed shoelace area; positive for counter-clockwise rings.
fn signed_area<T: Real>(points: &[Point2<T>]) -> T {
    let mut acc = T::zero();
    for i in 0..points.len() {
        let p = points[i];
        let q = points[(i + 1) % points.len()];
        acc = acc + (p.x * q.y - q.x * p.y);
    }
    acc * cst::<T>(0.5)
}

fn cross<T: Real>(o: Point2<T>, a: Point2<T>, b: Point2<T>) -> T {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Clip a convex polygon by a convex counter-clockwise window
/// (Sutherland-Hodgman).
fn clip_convex<T: Real>(subject: &[Point2<T>], window: &[Point2<T>]) -> Vec<Point2<T>> {
    let mut output: Vec<Point2<T>> = subject.to_vec();
    for i in 0..window.len() {
        if output.is_empty() {
            break;
        }
        let v1 = window[i];
        let v2 = window[(i + 1) % window.len()];
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().expect("non-empty input ring");
        let mut prev_in = cross(v1, v2, prev) >= T::zero();
        for cur in input {
            let cur_in = cross(v1, v2, cur) >= T::zero();
            if cur_in != prev_in {
                // Edge crosses the clip line; add the intersection point.
                let d_clip = v2 - v1;
                let d_seg = cur - prev;
                let denom = d_clip.x * d_seg.y - d_clip.y * d_seg.x;
                let t = (d_clip.x * (v1.y - prev.y) - d_clip.y * (v1.x - prev.x)) / denom;
                output.push(Point2::new(prev.x + t * d_seg.x, prev.y + t * d_seg.y));
            }
            if cur_in {
                output.push(cur);
            }
            prev = cur;
            prev_in = cur_in;
        }
    }
    output
}

const DEGENERATE_AREA: f64 = 1e-12;

/// Intersection area of two bird's-eye-view footprints.
fn bev_intersection_area<T: Real>(a: &Cuboid3<T>, b: &Cuboid3<T>) -> T {
    let clipped = clip_convex(&a.footprint(), &b.footprint());
    if clipped.len() < 3 {
        return T::zero();
    }
    let area = signed_area(&clipped).abs();
    if area < cst::<T>(DEGENERATE_AREA) {
        T::zero()
    } else {
        area
    }
}

/// Rotated-footprint IoU in the x-z plane.
pub fn iou_bev<T: Real>(a: &Cuboid3<T>, b: &Cuboid3<T>) -> T {
    let inter = bev_intersection_area(a, b);
    let union = a.dims.l * a.dims.w + b.dims.l * b.dims.w - inter;
    if union <= T::zero() {
        T::zero()
    } else {
        inter / union
    }
}

/// Volumetric IoU: footprint intersection times vertical overlap.
pub fn iou_3d<T: Real>(a: &Cuboid3<T>, b: &Cuboid3<T>) -> T {
    let (a_top, a_bottom) = a.y_interval();
    let (b_top, b_bottom) = b.y_interval();
    let overlap = (a_bottom.min(b_bottom) - a_top.max(b_top)).max(T::zero());
    let inter = bev_intersection_area(a, b) * overlap;
    let union = a.dims.volume() + b.dims.volume() - inter;
    if union <= T::zero() {
        T::zero()
    } else {
        inter / union
    }
}

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

/// Which overlap measure drives matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "bev")]
    Bev,
    #[serde(rename = "3d")]
    ThreeD,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::TwoD, Metric::Bev, Metric::ThreeD];
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::TwoD => "2d",
            Metric::Bev => "bev",
            Metric::ThreeD => "3d",
        })
    }
}

/// Ground truths of these classes are ignored (not FP) when evaluating
/// `class`, mirroring the devkit's neighbor handling.
pub fn neighbor_classes(class: &str) -> &'static [&'static str] {
    match class {
        "Car" => &["Van"],
        "Pedestrian" => &["Person_sitting"],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub metric: Metric,
    /// Match threshold in (0, 1]; 0.7 is the usual car setting, 0.5 the
    /// looser alternative.
    pub iou_threshold: f64,
    pub class_name: String,
    /// Ignore (rather than penalize) detections matching neighbor-class
    /// ground truths.
    pub ignore_neighbors: bool,
    pub thresholds: [DifficultyThresholds; 3],
}

impl EvalConfig {
    pub fn new(metric: Metric, iou_threshold: f64) -> Result<Self> {
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(Error::InvalidEvalConfig {
                reason: format!("IoU threshold {iou_threshold} outside (0, 1]"),
            });
        }
        Ok(Self {
            metric,
            iou_threshold,
            class_name: "Car".to_string(),
            ignore_neighbors: true,
            thresholds: DEVKIT_THRESHOLDS,
        })
    }

    pub fn with_class(mut self, class: impl Into<String>) -> Self {
        self.class_name = class.into();
        self
    }
}

// ---------------------------------------------------------------------------
// matching
// ---------------------------------------------------------------------------

/// One counted detection: its score and whether it was a true positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOutcome {
    pub score: f64,
    pub tp: bool,
}

/// Per-frame matching result for one difficulty tier.
#[derive(Debug, Clone, Default)]
pub struct FrameMatches {
    /// Counted detections in descending-score order (ignored ones omitted).
    pub outcomes: Vec<MatchOutcome>,
    /// Difficulty-valid same-class ground truths in the frame.
    pub num_valid_gt: usize,
}

fn metric_iou(metric: Metric, det: &ObjectLabel, gt: &ObjectLabel) -> f64 {
    match metric {
        Metric::TwoD => iou_2d(&det.bbox2d, &gt.bbox2d),
        Metric::Bev => iou_bev(&det.cuboid(), &gt.cuboid()),
        Metric::ThreeD => iou_3d(&det.cuboid(), &gt.cuboid()),
    }
}

/// Greedy matching of one frame at one difficulty tier.
pub fn match_detections(
    gts: &[ObjectLabel],
    dets: &[ObjectLabel],
    difficulty: Difficulty,
    cfg: &EvalConfig,
) -> FrameMatches {
    let neighbors = if cfg.ignore_neighbors {
        neighbor_classes(&cfg.class_name)
    } else {
        &[]
    };
    // Matchable pool: same-class boxes flagged by difficulty validity,
    // neighbor-class boxes always as ignored.
    let mut pool: Vec<(&ObjectLabel, bool)> = Vec::new();
    let mut dont_care: Vec<&ObjectLabel> = Vec::new();
    for gt in gts {
        if gt.class_name == cfg.class_name {
            let tier = assign_difficulty_with(&cfg.thresholds, gt, gt.bbox_height());
            let valid = tier.is_some_and(|t| t <= difficulty);
            pool.push((gt, valid));
        } else if gt.is_dont_care() {
            dont_care.push(gt);
        } else if neighbors.contains(&gt.class_name.as_str()) {
            pool.push((gt, false));
        }
    }
    let num_valid_gt = pool.iter().filter(|(_, valid)| *valid).count();

    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].class_name == cfg.class_name)
        .collect();
    order.sort_by(|&a, &b| {
        let sa = dets[a].score.unwrap_or(0.0);
        let sb = dets[b].score.unwrap_or(0.0);
        sb.partial_cmp(&sa).unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut taken = vec![false; pool.len()];
    let mut outcomes = Vec::with_capacity(order.len());
    for det_idx in order {
        let det = &dets[det_idx];
        let score = det.score.unwrap_or(0.0);
        let mut best: Option<(usize, f64)> = None;
        for (gt_idx, (gt, _)) in pool.iter().enumerate() {
            if taken[gt_idx] {
                continue;
            }
            let iou = metric_iou(cfg.metric, det, gt);
            if iou >= cfg.iou_threshold && best.map_or(true, |(_, b)| iou > b) {
                best = Some((gt_idx, iou));
            }
        }
        if let Some((gt_idx, _)) = best {
            taken[gt_idx] = true;
            if pool[gt_idx].1 {
                outcomes.push(MatchOutcome { score, tp: true });
            }
            continue;
        }
        let in_dont_care = dont_care
            .iter()
            .any(|dc| intersection_over_area(&det.bbox2d, &dc.bbox2d) >= cfg.iou_threshold);
        if !in_dont_care {
            outcomes.push(MatchOutcome { score, tp: false });
        }
    }
    FrameMatches {
        outcomes,
        num_valid_gt,
    }
}

// ---------------------------------------------------------------------------
// average precision
// ---------------------------------------------------------------------------

/// One operating point of the precision/recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// 11-point interpolated AP over a TP/FP stream.
///
/// Outcomes are ranked by descending score (stable, so the input order is
/// the tie order); precision/recall is accumulated after each detection and
/// `AP = mean over r in {0.0, 0.1, .., 1.0} of max{precision at recall >= r}`.
/// With no valid ground truth the AP is defined as 0.
pub fn average_precision_11pt(outcomes: &[MatchOutcome], num_gt: usize) -> (f64, Vec<PrPoint>) {
    if num_gt == 0 {
        return (0.0, Vec::new());
    }
    let mut ranked: Vec<&MatchOutcome> = outcomes.iter().collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut curve = Vec::with_capacity(ranked.len());
    for outcome in ranked {
        if outcome.tp {
            tp += 1;
        } else {
            fp += 1;
        }
        curve.push(PrPoint {
            recall: tp as f64 / num_gt as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    let ap = (0..=10)
        .map(|i| {
            let anchor = f64::from(i) / 10.0;
            curve
                .iter()
                .filter(|p| p.recall >= anchor - 1e-12)
                .map(|p| p.precision)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0;
    (ap, curve)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// Values keyed by difficulty tier.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DifficultyTable<V> {
    pub easy: V,
    pub moderate: V,
    pub hard: V,
}

impl<V> DifficultyTable<V> {
    pub fn get(&self, d: Difficulty) -> &V {
        match d {
            Difficulty::Easy => &self.easy,
            Difficulty::Moderate => &self.moderate,
            Difficulty::Hard => &self.hard,
        }
    }

    pub fn get_mut(&mut self, d: Difficulty) -> &mut V {
        match d {
            Difficulty::Easy => &mut self.easy,
            Difficulty::Moderate => &mut self.moderate,
            Difficulty::Hard => &mut self.hard,
        }
    }
}

/// TP / FP / FN totals at the end of the ranked list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub missed: usize,
}

/// Results for one overlap metric.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub ap: DifficultyTable<f64>,
    pub counts: DifficultyTable<MatchCounts>,
    pub pr_curves: DifficultyTable<Vec<PrPoint>>,
}

pub const EVAL_REPORT_SCHEMA_VERSION: u32 = 1;

/// AP per metric per difficulty, plus supporting counts and PR curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub class_name: String,
    pub iou_threshold: f64,
    pub metrics: BTreeMap<Metric, MetricReport>,
}

impl EvalReport {
    /// Fold another report (same class and threshold) into this one.
    pub fn merge(&mut self, other: EvalReport) -> Result<()> {
        if self.class_name != other.class_name {
            return Err(Error::ReportMergeConflict { what: "class" });
        }
        if self.iou_threshold != other.iou_threshold {
            return Err(Error::ReportMergeConflict {
                what: "iou_threshold",
            });
        }
        self.metrics.extend(other.metrics);
        Ok(())
    }

    pub fn ap(&self, metric: Metric, difficulty: Difficulty) -> Option<f64> {
        self.metrics.get(&metric).map(|m| *m.ap.get(difficulty))
    }
}

/// Evaluate aligned ground-truth and detection frames under one metric.
///
/// Frames pair up by index; deterministic for a given input order.
pub fn evaluate(
    gt_frames: &[Vec<ObjectLabel>],
    det_frames: &[Vec<ObjectLabel>],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if gt_frames.len() != det_frames.len() {
        return Err(Error::FrameCountMismatch {
            gt: gt_frames.len(),
            det: det_frames.len(),
        });
    }
    let mut metric_report = MetricReport::default();
    for difficulty in Difficulty::ALL {
        let mut outcomes = Vec::new();
        let mut num_gt = 0usize;
        for (gts, dets) in gt_frames.iter().zip(det_frames) {
            let frame = match_detections(gts, dets, difficulty, cfg);
            outcomes.extend(frame.outcomes);
            num_gt += frame.num_valid_gt;
        }
        let (ap, curve) = average_precision_11pt(&outcomes, num_gt);
        let tp = outcomes.iter().filter(|o| o.tp).count();
        *metric_report.ap.get_mut(difficulty) = ap;
        *metric_report.counts.get_mut(difficulty) = MatchCounts {
            tp,
            fp: outcomes.len() - tp,
            missed: num_gt - tp,
        };
        *metric_report.pr_curves.get_mut(difficulty) = curve;
    }
    let mut metrics = BTreeMap::new();
    metrics.insert(cfg.metric, metric_report);
    Ok(EvalReport {
        schema_version: EVAL_REPORT_SCHEMA_VERSION,
        class_name: cfg.class_name.clone(),
        iou_threshold: cfg.iou_threshold,
        metrics,
    })
}
