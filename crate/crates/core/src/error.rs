//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Result alias used across the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- label / calibration parsing ----
    #[error("label line has {got} fields, expected 15 (ground truth) or 16 (prediction)")]
    LabelFieldCount { got: usize },
    #[error("field {field} ({name}) is not a number: {token:?}")]
    LabelFieldNumeric {
        /// 1-based field index within the line.
        field: usize,
        name: &'static str,
        token: String,
    },
    #[error("occlusion {value} outside 0..=3 for class {class}")]
    OcclusionRange { value: i64, class: String },
    #[error("bbox corners out of order: ({x1}, {y1})..({x2}, {y2})")]
    BoxCornersOutOfOrder { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("non-positive dimensions ({h}, {w}, {l}) for class {class}")]
    NonPositiveDims {
        h: f64,
        w: f64,
        l: f64,
        class: String,
    },
    #[error("cannot serialize a prediction without a score")]
    MissingScore,
    #[error("calibration file has no {key} line")]
    CalibMissingKey { key: String },
    #[error("calibration line {key} has {got} values, expected 12")]
    CalibValueCount { key: String, got: usize },
    #[error("calibration value {index} of {key} is not a number: {token:?}")]
    CalibValueNumeric {
        key: String,
        index: usize,
        token: String,
    },
    #[error("split file line {line} is not a frame id: {token:?}")]
    SplitIdParse { line: usize, token: String },
    #[error("duplicate frame id {id} in split file")]
    SplitDuplicateId { id: u32 },
    #[error("frame {id:06}: missing file {path}")]
    MissingFrameFile { id: u32, path: PathBuf },
    #[error("{path}:{line}: {source}")]
    InFile {
        path: PathBuf,
        line: usize,
        #[source]
        source: Box<Error>,
    },

    // ---- geometry ----
    #[error("degenerate projection: homogeneous scale {w:.3e} is within 1e-12 of zero")]
    DegenerateProjection { w: f64 },
    #[error("back-projection system is singular: 2x2 determinant {det:.3e}")]
    SingularBackprojection { det: f64 },
    #[error("cuboid corner behind the camera (homogeneous scale {w:.3e})")]
    CornerBehindCamera { w: f64 },
    #[error("observation ray (X, Z) = (0, 0) has no bearing angle")]
    ZeroRay,

    // ---- depth codecs ----
    #[error("invalid discretization config: {reason}")]
    InvalidDiscretization { reason: String },
    #[error("invalid two-bin depth config: {reason}")]
    InvalidDepJoint { reason: String },
    #[error("depth {d} m outside codec range [{lo}, {hi}] m")]
    DepthOutOfRange { d: f64, lo: f64, hi: f64 },
    #[error("continuous bin index {l} outside [0, {n}]")]
    BinIndexOutOfRange { l: f64, n: usize },
    #[error("depth {d} m is not positive")]
    NonPositiveDepth { d: f64 },
    #[error("both bin confidences are zero; weighted decode undefined")]
    ZeroBinConfidence,

    // ---- losses ----
    #[error("ground-truth bin {gt_bin} outside 0..={n}")]
    GtBinOutOfRange { gt_bin: usize, n: usize },
    #[error("grid shapes differ: {a:?} vs {b:?}")]
    GridShapeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("loss weights must be finite and non-negative")]
    InvalidLossWeights,

    // ---- target encode / decode ----
    #[error("feature grid stride must be >= 1")]
    InvalidStride,
    #[error("reference-area scale {gamma} outside (0, 1]")]
    InvalidGamma { gamma: f64 },
    #[error("reference area contains no cells")]
    EmptyReferenceArea,
    #[error("instance {index}: depth head samples mix variants")]
    MixedDepthHeads { index: usize },
    #[error("instance {index}: no depth head samples")]
    NoDepthHead { index: usize },
    #[error("instance {index}: ordinal samples disagree on bin count ({a} vs {b})")]
    OrdinalLengthMismatch { index: usize, a: usize, b: usize },
    #[error("instance {index}: depth head does not match the configured codec")]
    HeadCodecMismatch { index: usize },
    #[error("raw heads at {pointer}: {message}")]
    RawHeadsSchema { pointer: String, message: String },
    #[error("raw heads document has schema version {got}, expected {expected}")]
    RawHeadsVersion { got: u32, expected: u32 },

    // ---- evaluation ----
    #[error("ground-truth and detection frame counts differ: {gt} vs {det}")]
    FrameCountMismatch { gt: usize, det: usize },
    #[error("invalid evaluation config: {reason}")]
    InvalidEvalConfig { reason: String },
    #[error("reports disagree on {what}; cannot merge")]
    ReportMergeConflict { what: &'static str },

    // ---- synthesis ----
    #[error("invalid scene spec: {reason}")]
    InvalidSceneSpec { reason: String },
    #[error("invalid noise model: {reason}")]
    InvalidNoiseModel { reason: String },
    #[error("could not place object {index} after {attempts} rejection attempts")]
    PlacementExhausted { index: usize, attempts: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach file path + 1-based line context to a parse error.
    pub(crate) fn in_file(self, path: impl Into<PathBuf>, line: usize) -> Self {
        Error::InFile {
            path: path.into(),
            line,
            source: Box::new(self),
        }
    }
}
