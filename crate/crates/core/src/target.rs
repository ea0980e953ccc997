//! Ground-truth target encoding and the raw-heads-to-detections decode
//! pipeline.
//!
//! Encoding maps labels to the per-head regression targets a center-based
//! detector trains on: class heatmaps, 2D box size, center quantization
//! offset, the 2D-to-3D center offset, an encoded depth, dimensions, and a
//! two-sector orientation. Decoding inverts the whole pipeline from
//! [`RawInstanceHeads`] back to labeled cuboids, so
//! `decode_objects(encode_targets(labels).to_raw_heads())` reproduces the
//! input scene.
//!
//! Raw heads travel as one JSON document per frame (see [`FrameHeads`]), so
//! the decode path can also be driven by external model outputs.

use serde::{Deserialize, Serialize};

use crate::depth::{
    depjoint_decode, eigen_inverse_clamped, eigen_transform, ordinal_decode, DepJointConfig,
    DepJointPrediction, DepthEncoding, DiscretizationConfig, OrdinalPrediction,
};
use crate::error::{Error, Result};
use crate::float::{cst, Real};
use crate::geometry::{
    alpha_to_ry, ry_to_alpha, wrap_angle, BBox2, CameraCalibration, CenterPair, Cuboid3, Dim3,
    Point2, Point3,
};
use crate::grid::Grid;
use crate::kitti::{ObjectLabel, DONT_CARE};

// ---------------------------------------------------------------------------
// feature grid
// ---------------------------------------------------------------------------

/// Input image size and the output stride of the feature grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGridMeta {
    pub input_width: u32,
    pub input_height: u32,
    /// Downscaling factor between image and grid.
    pub stride: u32,
}

impl FeatureGridMeta {
    pub fn new(input_width: u32, input_height: u32, stride: u32) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidStride);
        }
        Ok(Self {
            input_width,
            input_height,
            stride,
        })
    }

    pub fn grid_width(&self) -> usize {
        self.input_width.div_ceil(self.stride) as usize
    }

    pub fn grid_height(&self) -> usize {
        self.input_height.div_ceil(self.stride) as usize
    }

    /// Grid cell containing a pixel; right/bottom-edge pixels clamp to the
    /// last cell.
    pub fn cell_of(&self, center: Point2<f64>) -> (isize, isize) {
        let r = f64::from(self.stride);
        let gx = (center.x / r).floor() as isize;
        let gy = (center.y / r).floor() as isize;
        (
            gx.min(self.grid_width() as isize - 1),
            gy.min(self.grid_height() as isize - 1),
        )
    }

    fn contains_cell(&self, (gx, gy): (isize, isize)) -> bool {
        gx >= 0 && gy >= 0 && (gx as usize) < self.grid_width() && (gy as usize) < self.grid_height()
    }
}

/// Sub-cell quantization error of a center under the output stride:
/// `center/stride - floor(center/stride)`, componentwise in `[0, 1)`.
pub fn quantization_offset(center: Point2<f64>, meta: &FeatureGridMeta) -> (f64, f64) {
    let r = f64::from(meta.stride);
    ((center.x / r).fract(), (center.y / r).fract())
}

// ---------------------------------------------------------------------------
// heatmaps
// ---------------------------------------------------------------------------

/// Smallest splat radius keeping IoU >= `min_overlap` against shifted boxes
/// of the same size (the usual center-point keypoint rule).
pub fn gaussian_radius(height: f64, width: f64, min_overlap: f64) -> f64 {
    let a1 = 1.0;
    let b1 = height + width;
    let c1 = width * height * (1.0 - min_overlap) / (1.0 + min_overlap);
    let sq1 = (b1 * b1 - 4.0 * a1 * c1).max(0.0).sqrt();
    let r1 = (b1 + sq1) / 2.0;

    let a2 = 4.0;
    let b2 = 2.0 * (height + width);
    let c2 = (1.0 - min_overlap) * width * height;
    let sq2 = (b2 * b2 - 4.0 * a2 * c2).max(0.0).sqrt();
    let r2 = (b2 + sq2) / (2.0 * a2);

    let a3 = 4.0 * min_overlap;
    let b3 = -2.0 * min_overlap * (height + width);
    let c3 = (min_overlap - 1.0) * width * height;
    let sq3 = (b3 * b3 - 4.0 * a3 * c3).max(0.0).sqrt();
    let r3 = (b3 + sq3) / (2.0 * a3);

    r1.min(r2).min(r3)
}

/// Default minimum overlap for the splat radius.
pub const HEATMAP_MIN_OVERLAP: f64 = 0.7;

/// One keypoint to splat.
#[derive(Debug, Clone, Copy)]
pub struct HeatmapInstance {
    pub class_index: usize,
    /// 2D box center, input pixels.
    pub center_px: Point2<f64>,
    /// 2D box size (width, height), input pixels.
    pub size_px: (f64, f64),
}

/// Per-class keypoint heatmaps on the feature grid.
///
/// Each instance contributes a Gaussian splat peaking at exactly 1 in its
/// center cell, with `sigma = (2r + 1)/6` for the integer radius `r` derived
/// from the box size on the grid. Overlapping splats combine by elementwise
/// max.
pub fn gaussian_heatmap<T: Real>(
    instances: &[HeatmapInstance],
    meta: &FeatureGridMeta,
    num_classes: usize,
) -> Vec<Grid<T>> {
    let (gw, gh) = (meta.grid_width(), meta.grid_height());
    let mut maps: Vec<Grid<T>> = (0..num_classes)
        .map(|_| Grid::filled(gw, gh, T::zero()))
        .collect();
    for inst in instances {
        if inst.class_index >= num_classes {
            continue;
        }
        let cell = meta.cell_of(inst.center_px);
        if !meta.contains_cell(cell) {
            continue;
        }
        let (cx, cy) = (cell.0, cell.1);
        let r = f64::from(meta.stride);
        let grid_w = (inst.size_px.0 / r).ceil();
        let grid_h = (inst.size_px.1 / r).ceil();
        let radius = gaussian_radius(grid_h, grid_w, HEATMAP_MIN_OVERLAP).floor().max(0.0) as isize;
        let sigma = (2.0 * radius as f64 + 1.0) / 6.0;
        let map = &mut maps[inst.class_index];
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let (x, y) = (cx + dx, cy + dy);
                if x < 0 || y < 0 || x as usize >= gw || y as usize >= gh {
                    continue;
                }
                let value = splat_value::<T>(dx as f64, dy as f64, sigma);
                let slot = map.get_mut(x as usize, y as usize);
                if value > *slot {
                    *slot = value;
                }
            }
        }
    }
    maps
}

/// Gaussian splat value at offset `(dx, dy)` from the peak.
pub fn splat_value<T: Real>(dx: f64, dy: f64, sigma: f64) -> T {
    cst::<T>((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp())
}

// ---------------------------------------------------------------------------
// reference areas
// ---------------------------------------------------------------------------

/// Scale factor of the reference area relative to the 2D box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAreaConfig {
    pub gamma: f64,
}

impl ReferenceAreaConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidGamma { gamma });
        }
        Ok(Self { gamma })
    }
}

/// Rectangle with the same center as `bbox` and dimensions scaled by gamma.
pub fn reference_area(bbox: &BBox2<f64>, cfg: &ReferenceAreaConfig) -> BBox2<f64> {
    BBox2::from_center_size(
        bbox.center(),
        bbox.width() * cfg.gamma,
        bbox.height() * cfg.gamma,
    )
}

/// Grid cells whose pixel footprint intersects the closed rectangle. A
/// degenerate rectangle rasterizes to the single cell containing its center.
pub fn ra_cells(area: &BBox2<f64>, meta: &FeatureGridMeta) -> Vec<(usize, usize)> {
    let r = f64::from(meta.stride);
    let (gw, gh) = (meta.grid_width() as isize, meta.grid_height() as isize);
    let x0 = ((area.x1 / r).floor() as isize).max(0);
    let x1 = ((area.x2 / r).floor() as isize).min(gw - 1);
    let y0 = ((area.y1 / r).floor() as isize).max(0);
    let y1 = ((area.y2 / r).floor() as isize).min(gh - 1);
    let mut cells = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            cells.push((x as usize, y as usize));
        }
    }
    cells
}

/// Assign every cell covered by at least one reference area to the covering
/// instance closest to the camera; equal depths break toward the lower
/// instance index.
pub fn rasterize_reference_areas(
    areas: &[(BBox2<f64>, f64)],
    meta: &FeatureGridMeta,
) -> Grid<Option<u32>> {
    let mut owner: Grid<Option<u32>> =
        Grid::filled(meta.grid_width(), meta.grid_height(), None);
    for (index, (area, depth)) in areas.iter().enumerate() {
        for (x, y) in ra_cells(area, meta) {
            let slot = owner.get_mut(x, y);
            let take = match slot {
                None => true,
                Some(current) => *depth < areas[*current as usize].1,
            };
            if take {
                *slot = Some(index as u32);
            }
        }
    }
    owner
}

/// Equal-weight aggregation of per-cell predictions: the arithmetic mean.
pub fn ra_aggregate(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyReferenceArea);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

// ---------------------------------------------------------------------------
// orientation
// ---------------------------------------------------------------------------

/// Two-sector orientation encoding of the observation angle.
///
/// Layout (8 scalars): per sector `[score_out, score_in, sin, cos]` of the
/// residual to the sector center; sector 0 is centered at -pi/2 and covers
/// `alpha < pi/6 or alpha > 5pi/6`, sector 1 is centered at +pi/2 and covers
/// `alpha > -pi/6 or alpha < -5pi/6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultibinOrientation(pub [f64; 8]);

const SECTOR_CENTERS: [f64; 2] = [-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2];

impl MultibinOrientation {
    pub fn encode_alpha(alpha: f64) -> Self {
        let alpha = wrap_angle(alpha);
        let pi = std::f64::consts::PI;
        let mut v = [0.0; 8];
        if alpha < pi / 6.0 || alpha > 5.0 * pi / 6.0 {
            let r = alpha - SECTOR_CENTERS[0];
            v[0] = 0.0;
            v[1] = 1.0;
            v[2] = r.sin();
            v[3] = r.cos();
        } else {
            v[0] = 1.0;
        }
        if alpha > -pi / 6.0 || alpha < -5.0 * pi / 6.0 {
            let r = alpha - SECTOR_CENTERS[1];
            v[4] = 0.0;
            v[5] = 1.0;
            v[6] = r.sin();
            v[7] = r.cos();
        } else {
            v[4] = 1.0;
        }
        Self(v)
    }

    /// Pick the sector with the higher in-sector score (ties: sector 0) and
    /// recover the angle from its sin/cos residual.
    pub fn decode_alpha(&self) -> f64 {
        let v = &self.0;
        let (center, sin, cos) = if v[1] >= v[5] {
            (SECTOR_CENTERS[0], v[2], v[3])
        } else {
            (SECTOR_CENTERS[1], v[6], v[7])
        };
        wrap_angle(sin.atan2(cos) + center)
    }
}

// ---------------------------------------------------------------------------
// depth codec dispatch
// ---------------------------------------------------------------------------

/// Which depth head the pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthCodec {
    /// Plain exponential transform, one feature channel.
    Eigen,
    /// Ordered-bin classification plus residual.
    Ordinal(DiscretizationConfig<f64>),
    /// Two-bin joint classification/regression.
    DepJoint(DepJointConfig<f64>),
}

/// Ground-truth depth target under a codec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DepthTarget {
    Eigen {
        feature: f64,
    },
    Ordinal {
        encoding: DepthEncoding<f64>,
    },
    DepJoint {
        in_bin1: bool,
        in_bin2: bool,
        raw1: f64,
        raw2: f64,
    },
}

impl DepthCodec {
    /// Encode a ground-truth depth. Depths outside a bounded codec's range
    /// clamp to the range boundary.
    pub fn encode_target(&self, depth: f64) -> Result<DepthTarget> {
        Ok(match self {
            DepthCodec::Eigen => DepthTarget::Eigen {
                feature: eigen_inverse_clamped(depth),
            },
            DepthCodec::Ordinal(cfg) => {
                let d = depth.clamp(cfg.d_min(), cfg.d_max());
                DepthTarget::Ordinal {
                    encoding: cfg.encode(d)?,
                }
            }
            DepthCodec::DepJoint(cfg) => {
                let d = depth.clamp(cfg.d_min, cfg.d_max);
                let (in_bin1, in_bin2) = cfg.membership(d);
                let (raw1, raw2) = cfg.encode_raw(d);
                DepthTarget::DepJoint {
                    in_bin1,
                    in_bin2,
                    raw1,
                    raw2,
                }
            }
        })
    }

    /// Turn a target into the prediction a perfect network would emit.
    pub fn target_to_head(&self, target: &DepthTarget) -> DepthHead {
        match (self, target) {
            (DepthCodec::Eigen, DepthTarget::Eigen { feature }) => {
                DepthHead::Eigen { feature: *feature }
            }
            (DepthCodec::Ordinal(cfg), DepthTarget::Ordinal { encoding }) => DepthHead::Ordinal {
                probs: (0..cfg.bins)
                    .map(|n| if n < encoding.bin { 1.0 } else { 0.0 })
                    .collect(),
                residual: encoding.residual,
            },
            (
                DepthCodec::DepJoint(_),
                DepthTarget::DepJoint {
                    in_bin1,
                    in_bin2,
                    raw1,
                    raw2,
                },
            ) => DepthHead::DepJoint {
                p1: f64::from(u8::from(*in_bin1)),
                p2: f64::from(u8::from(*in_bin2)),
                raw1: *raw1,
                raw2: *raw2,
            },
            _ => unreachable!("target built by the same codec"),
        }
    }

    /// Decode an aggregated head into meters.
    pub fn decode_head(&self, head: &DepthHead, index: usize) -> Result<f64> {
        match (self, head) {
            (DepthCodec::Eigen, DepthHead::Eigen { feature }) => Ok(eigen_transform(*feature)),
            (DepthCodec::Ordinal(cfg), DepthHead::Ordinal { probs, residual }) => {
                Ok(ordinal_decode(
                    &OrdinalPrediction {
                        probs: probs.clone(),
                        residual: *residual,
                    },
                    cfg,
                ))
            }
            (DepthCodec::DepJoint(cfg), DepthHead::DepJoint { p1, p2, raw1, raw2 }) => {
                depjoint_decode(
                    &DepJointPrediction {
                        p1: *p1,
                        p2: *p2,
                        raw1: *raw1,
                        raw2: *raw2,
                    },
                    cfg,
                )
            }
            _ => Err(Error::HeadCodecMismatch { index }),
        }
    }
}

// ---------------------------------------------------------------------------
// raw heads interchange
// ---------------------------------------------------------------------------

/// One depth-head sample at a grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DepthHead {
    Eigen { feature: f64 },
    Ordinal { probs: Vec<f64>, residual: f64 },
    DepJoint { p1: f64, p2: f64, raw1: f64, raw2: f64 },
}

impl DepthHead {
    fn variant(&self) -> u8 {
        match self {
            DepthHead::Eigen { .. } => 0,
            DepthHead::Ordinal { .. } => 1,
            DepthHead::DepJoint { .. } => 2,
        }
    }
}

/// Per-instance raw head values, the decode pipeline's input.
///
/// `depth` and `offset3d` hold one sample per reference-area cell (a single
/// entry when reading the center cell only); decoding averages them
/// channelwise with equal weights. Units: `cell` indexes the feature grid,
/// `center_offset` is the sub-cell quantization offset in cells,
/// `size_px`/`offset3d` are input pixels, `dims` are meters (h, w, l).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInstanceHeads {
    pub class: String,
    pub cell: [i64; 2],
    pub center_offset: [f64; 2],
    pub size_px: [f64; 2],
    pub offset3d: Vec<[f64; 2]>,
    pub depth: Vec<DepthHead>,
    pub dims: [f64; 3],
    pub orientation: [f64; 8],
    pub score: f64,
}

pub const RAW_HEADS_SCHEMA_VERSION: u32 = 1;

/// One frame's worth of raw instance heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameHeads {
    pub schema_version: u32,
    /// Zero-padded frame id, e.g. "000042".
    pub frame: String,
    pub instances: Vec<RawInstanceHeads>,
}

impl FrameHeads {
    pub fn new(frame: impl Into<String>, instances: Vec<RawInstanceHeads>) -> Self {
        Self {
            schema_version: RAW_HEADS_SCHEMA_VERSION,
            frame: frame.into(),
            instances,
        }
    }

    /// Parse a frame document, reporting schema violations with a JSON
    /// pointer to the offending value.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let heads: FrameHeads =
            serde_path_to_error::deserialize(de).map_err(|e| Error::RawHeadsSchema {
                pointer: path_to_pointer(&e.path().to_string()),
                message: e.inner().to_string(),
            })?;
        if heads.schema_version != RAW_HEADS_SCHEMA_VERSION {
            return Err(Error::RawHeadsVersion {
                got: heads.schema_version,
                expected: RAW_HEADS_SCHEMA_VERSION,
            });
        }
        Ok(heads)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("raw heads serialize")
    }
}

/// Convert serde_path_to_error's dotted path into a JSON pointer.
fn path_to_pointer(path: &str) -> String {
    if path == "." {
        return String::from("/");
    }
    let mut out = String::new();
    for segment in path.split('.') {
        if segment.is_empty() {
            continue;
        }
        // Array steps print as name[idx].
        let mut rest = segment;
        while let Some(open) = rest.find('[') {
            if !rest[..open].is_empty() {
                out.push('/');
                out.push_str(&rest[..open]);
            }
            let close = rest.find(']').unwrap_or(rest.len());
            out.push('/');
            out.push_str(&rest[open + 1..close]);
            rest = &rest[(close + 1).min(rest.len())..];
        }
        if !rest.is_empty() {
            out.push('/');
            out.push_str(rest);
        }
    }
    if out.is_empty() {
        String::from("/")
    } else {
        out
    }
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

/// Targets for one kept instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance {
    pub class_index: usize,
    pub class_name: String,
    pub cell: (usize, usize),
    pub quant_offset: (f64, f64),
    /// 2D box size (width, height), input pixels.
    pub size_px: (f64, f64),
    /// Projected 3D center minus 2D box center, pixels.
    pub offset3d: (f64, f64),
    /// Ground-truth depth, meters (camera-frame z of the box center).
    pub depth_m: f64,
    pub depth_target: DepthTarget,
    pub dims: Dim3<f64>,
    pub orientation: MultibinOrientation,
    /// Cells of this instance's reference area; empty when RAs are off.
    pub ra_cells: Vec<(usize, usize)>,
}

/// Encoder output for one frame.
#[derive(Debug, Clone)]
pub struct EncodedTargets {
    pub meta: FeatureGridMeta,
    pub codec: DepthCodec,
    pub heatmaps: Vec<Grid<f64>>,
    pub instances: Vec<EncodedInstance>,
    /// Cell ownership map when reference areas are enabled.
    pub ra_owner: Option<Grid<Option<u32>>>,
    /// Instances whose 2D center fell outside the grid or whose geometry
    /// could not be projected.
    pub dropped: usize,
    /// Labels not in the class list (DontCare rows included).
    pub skipped: usize,
}

/// Encode ground-truth labels into per-head training targets.
///
/// `classes` fixes the heatmap channel order; labels of other classes are
/// skipped. The orientation target is derived from `rotation_y` and the
/// location ray, so decode-side reconstruction is exact.
pub fn encode_targets(
    labels: &[ObjectLabel],
    calib: &CameraCalibration<f64>,
    meta: &FeatureGridMeta,
    classes: &[String],
    codec: &DepthCodec,
    ra: Option<&ReferenceAreaConfig>,
) -> Result<EncodedTargets> {
    let mut instances = Vec::new();
    let mut dropped = 0usize;
    let mut skipped = 0usize;
    for label in labels {
        let Some(class_index) = classes.iter().position(|c| c == &label.class_name) else {
            skipped += 1;
            continue;
        };
        if label.class_name == DONT_CARE {
            skipped += 1;
            continue;
        }
        let c2d = label.bbox2d.center();
        let cell = meta.cell_of(c2d);
        if !meta.contains_cell(cell) {
            dropped += 1;
            continue;
        }
        let cuboid = label.cuboid();
        let Ok(pair) = CenterPair::from_cuboid(calib, &cuboid, &label.bbox2d) else {
            dropped += 1;
            continue;
        };
        let Ok(alpha) = ry_to_alpha(label.rotation_y, label.location.x, label.location.z) else {
            dropped += 1;
            continue;
        };
        let cell = (cell.0 as usize, cell.1 as usize);
        let r = f64::from(meta.stride);
        let quant_offset = (c2d.x / r - cell.0 as f64, c2d.y / r - cell.1 as f64);
        let ra_cells_for = match ra {
            Some(cfg) => ra_cells(&reference_area(&label.bbox2d, cfg), meta),
            None => Vec::new(),
        };
        instances.push(EncodedInstance {
            class_index,
            class_name: label.class_name.clone(),
            cell,
            quant_offset,
            size_px: (label.bbox2d.width(), label.bbox2d.height()),
            offset3d: {
                let off = pair.offset();
                (off.x, off.y)
            },
            depth_m: label.location.z,
            depth_target: codec.encode_target(label.location.z)?,
            dims: label.dims,
            orientation: MultibinOrientation::encode_alpha(alpha),
            ra_cells: ra_cells_for,
        });
    }

    let heatmap_instances: Vec<HeatmapInstance> = instances
        .iter()
        .map(|inst| HeatmapInstance {
            class_index: inst.class_index,
            center_px: Point2::new(
                (inst.cell.0 as f64 + inst.quant_offset.0) * f64::from(meta.stride),
                (inst.cell.1 as f64 + inst.quant_offset.1) * f64::from(meta.stride),
            ),
            size_px: inst.size_px,
        })
        .collect();
    let heatmaps = gaussian_heatmap(&heatmap_instances, meta, classes.len());

    let ra_owner = ra.map(|cfg| {
        let areas: Vec<(BBox2<f64>, f64)> = instances
            .iter()
            .map(|inst| {
                let center = Point2::new(
                    (inst.cell.0 as f64 + inst.quant_offset.0) * f64::from(meta.stride),
                    (inst.cell.1 as f64 + inst.quant_offset.1) * f64::from(meta.stride),
                );
                let bbox = BBox2::from_center_size(center, inst.size_px.0, inst.size_px.1);
                (reference_area(&bbox, cfg), inst.depth_m)
            })
            .collect();
        rasterize_reference_areas(&areas, meta)
    });

    Ok(EncodedTargets {
        meta: *meta,
        codec: *codec,
        heatmaps,
        instances,
        ra_owner,
        dropped,
        skipped,
    })
}

impl EncodedTargets {
    /// Express the targets as the raw heads a perfect network would produce.
    ///
    /// With reference areas on, each instance carries one depth / offset
    /// sample per cell of its RA, reading the value the dense target grid
    /// holds there — i.e. the owning instance's target, which may belong to
    /// a nearer object where RAs overlap.
    pub fn to_raw_heads(&self) -> Vec<RawInstanceHeads> {
        self.instances
            .iter()
            .map(|inst| {
                let (depth, offset3d) = match &self.ra_owner {
                    Some(owner) if !inst.ra_cells.is_empty() => {
                        let mut heads = Vec::with_capacity(inst.ra_cells.len());
                        let mut offsets = Vec::with_capacity(inst.ra_cells.len());
                        for &(x, y) in &inst.ra_cells {
                            let source = owner
                                .get(x, y)
                                .map(|idx| &self.instances[idx as usize])
                                .unwrap_or(inst);
                            heads.push(self.codec.target_to_head(&source.depth_target));
                            offsets.push([source.offset3d.0, source.offset3d.1]);
                        }
                        (heads, offsets)
                    }
                    _ => (
                        vec![self.codec.target_to_head(&inst.depth_target)],
                        vec![[inst.offset3d.0, inst.offset3d.1]],
                    ),
                };
                RawInstanceHeads {
                    class: inst.class_name.clone(),
                    cell: [inst.cell.0 as i64, inst.cell.1 as i64],
                    center_offset: [inst.quant_offset.0, inst.quant_offset.1],
                    size_px: [inst.size_px.0, inst.size_px.1],
                    offset3d,
                    depth,
                    dims: [inst.dims.h, inst.dims.w, inst.dims.l],
                    orientation: inst.orientation.0,
                    score: 1.0,
                }
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------

/// A decoded detection: the KITTI-style label plus its cuboid.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedObject {
    pub label: ObjectLabel,
    pub cuboid: Cuboid3<f64>,
}

/// Average a list of depth-head samples channelwise.
fn aggregate_depth_heads(samples: &[DepthHead], index: usize) -> Result<DepthHead> {
    let first = samples.first().ok_or(Error::NoDepthHead { index })?;
    if samples.iter().any(|s| s.variant() != first.variant()) {
        return Err(Error::MixedDepthHeads { index });
    }
    match first {
        DepthHead::Eigen { .. } => {
            let features: Vec<f64> = samples
                .iter()
                .map(|s| match s {
                    DepthHead::Eigen { feature } => *feature,
                    _ => unreachable!(),
                })
                .collect();
            Ok(DepthHead::Eigen {
                feature: ra_aggregate(&features)?,
            })
        }
        DepthHead::Ordinal { probs, .. } => {
            let bins = probs.len();
            let mut prob_sums = vec![0.0; bins];
            let mut residuals = Vec::with_capacity(samples.len());
            for s in samples {
                let DepthHead::Ordinal { probs, residual } = s else {
                    unreachable!()
                };
                if probs.len() != bins {
                    return Err(Error::OrdinalLengthMismatch {
                        index,
                        a: bins,
                        b: probs.len(),
                    });
                }
                for (sum, p) in prob_sums.iter_mut().zip(probs) {
                    *sum += p;
                }
                residuals.push(*residual);
            }
            let n = samples.len() as f64;
            Ok(DepthHead::Ordinal {
                probs: prob_sums.into_iter().map(|s| s / n).collect(),
                residual: ra_aggregate(&residuals)?,
            })
        }
        DepthHead::DepJoint { .. } => {
            let mut acc = [0.0; 4];
            for s in samples {
                let DepthHead::DepJoint { p1, p2, raw1, raw2 } = s else {
                    unreachable!()
                };
                acc[0] += p1;
                acc[1] += p2;
                acc[2] += raw1;
                acc[3] += raw2;
            }
            let n = samples.len() as f64;
            Ok(DepthHead::DepJoint {
                p1: acc[0] / n,
                p2: acc[1] / n,
                raw1: acc[2] / n,
                raw2: acc[3] / n,
            })
        }
    }
}

/// Decode raw per-instance heads into scored labels and cuboids.
///
/// Pipeline: `c2d = (cell + offset) * stride`; `c3d = c2d + mean(offset3d)`;
/// depth from the aggregated depth head; the volumetric center back-projects
/// at that depth and shifts down by h/2 to the bottom-face anchor; yaw comes
/// from the decoded observation angle plus the location bearing; the 2D box
/// is `size_px` around `c2d` (not re-clipped).
pub fn decode_objects(
    heads: &[RawInstanceHeads],
    calib: &CameraCalibration<f64>,
    meta: &FeatureGridMeta,
    codec: &DepthCodec,
) -> Result<Vec<DecodedObject>> {
    let r = f64::from(meta.stride);
    heads
        .iter()
        .enumerate()
        .map(|(index, inst)| {
            let head = aggregate_depth_heads(&inst.depth, index)?;
            let depth = codec.decode_head(&head, index)?;
            let c2d = Point2::new(
                (inst.cell[0] as f64 + inst.center_offset[0]) * r,
                (inst.cell[1] as f64 + inst.center_offset[1]) * r,
            );
            if inst.offset3d.is_empty() {
                return Err(Error::RawHeadsSchema {
                    pointer: format!("/instances/{index}/offset3d"),
                    message: "needs at least one sample".into(),
                });
            }
            let dx = ra_aggregate(&inst.offset3d.iter().map(|o| o[0]).collect::<Vec<_>>())?;
            let dy = ra_aggregate(&inst.offset3d.iter().map(|o| o[1]).collect::<Vec<_>>())?;
            let c3d = Point2::new(c2d.x + dx, c2d.y + dy);
            let center = calib.backproject(c3d, depth)?;
            let dims = Dim3::new(inst.dims[0], inst.dims[1], inst.dims[2]);
            let location = Point3::new(center.x, center.y + dims.h / 2.0, center.z);
            let alpha = MultibinOrientation(inst.orientation).decode_alpha();
            let rotation_y = alpha_to_ry(alpha, location.x, location.z)?;
            let bbox2d = BBox2::from_center_size(c2d, inst.size_px[0], inst.size_px[1]);
            let cuboid = Cuboid3::new(location, dims, rotation_y);
            let label = ObjectLabel {
                class_name: inst.class.clone(),
                truncation: 0.0,
                occlusion: 0,
                alpha,
                bbox2d,
                dims,
                location,
                rotation_y: cuboid.yaw,
                score: Some(inst.score),
            };
            Ok(DecodedObject { label, cuboid })
        })
        .collect()
}
