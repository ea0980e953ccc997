//! Reader/writer for KITTI object labels, calibration files, prediction
//! files, and train/val split lists.
//!
//! A label line has 15 whitespace-separated fields (ground truth) or 16
//! (prediction, trailing score):
//! `class trunc occ alpha x1 y1 x2 y2 h w l X Y Z ry [score]`.
//! Parsing is locale-independent (decimal point only). `DontCare` rows are
//! retained with their -1 sentinels since the evaluator needs them as ignore
//! regions; predictions may carry -1 truncation/occlusion as in devkit
//! submissions.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{BBox2, CameraCalibration, Cuboid3, Dim3, Point3};

/// Default KITTI image size, used when calibration files carry no image
/// metadata.
pub const DEFAULT_IMAGE_WIDTH: u32 = 1242;
pub const DEFAULT_IMAGE_HEIGHT: u32 = 375;

/// Class name of ignore regions.
pub const DONT_CARE: &str = "DontCare";

/// One KITTI annotation or detection.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectLabel {
    pub class_name: String,
    /// Visible fraction cut off by the image border, 0..1 (-1 when unknown).
    pub truncation: f64,
    /// 0 visible, 1 partly occluded, 2 largely occluded, 3 unknown
    /// (-1 when not provided, e.g. DontCare rows and detections).
    pub occlusion: i8,
    /// Observation angle, radians.
    pub alpha: f64,
    pub bbox2d: BBox2<f64>,
    /// (h, w, l), meters. -1 sentinels on DontCare rows.
    pub dims: Dim3<f64>,
    /// Bottom-face center in the camera frame, meters.
    pub location: Point3<f64>,
    /// Yaw about the camera y axis, radians.
    pub rotation_y: f64,
    /// Detection confidence; present on prediction lines only.
    pub score: Option<f64>,
}

impl ObjectLabel {
    pub fn is_dont_care(&self) -> bool {
        self.class_name == DONT_CARE
    }

    pub fn bbox_height(&self) -> f64 {
        self.bbox2d.height()
    }

    /// Object pose as a cuboid.
    pub fn cuboid(&self) -> Cuboid3<f64> {
        Cuboid3::new(self.location, self.dims, self.rotation_y)
    }
}

const FIELD_NAMES: [&str; 16] = [
    "class", "truncation", "occlusion", "alpha", "bbox_x1", "bbox_y1", "bbox_x2", "bbox_y2",
    "height", "width", "length", "loc_x", "loc_y", "loc_z", "rotation_y", "score",
];

fn parse_field(tokens: &[&str], index0: usize) -> Result<f64> {
    let token = tokens[index0];
    token.parse::<f64>().map_err(|_| Error::LabelFieldNumeric {
        field: index0 + 1,
        name: FIELD_NAMES[index0],
        token: token.to_string(),
    })
}

/// Parse one label line (15 fields) or prediction line (16 fields).
pub fn parse_label_line(line: &str) -> Result<ObjectLabel> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 15 && tokens.len() != 16 {
        return Err(Error::LabelFieldCount { got: tokens.len() });
    }
    let class_name = tokens[0].to_string();
    let truncation = parse_field(&tokens, 1)?;
    let occlusion_raw = parse_field(&tokens, 2)?;
    if occlusion_raw.fract() != 0.0 || !(-1.0..=3.0).contains(&occlusion_raw) {
        return Err(Error::OcclusionRange {
            value: occlusion_raw as i64,
            class: class_name,
        });
    }
    let label = ObjectLabel {
        occlusion: occlusion_raw as i8,
        truncation,
        alpha: parse_field(&tokens, 3)?,
        bbox2d: BBox2::new(
            parse_field(&tokens, 4)?,
            parse_field(&tokens, 5)?,
            parse_field(&tokens, 6)?,
            parse_field(&tokens, 7)?,
        ),
        dims: Dim3::new(
            parse_field(&tokens, 8)?,
            parse_field(&tokens, 9)?,
            parse_field(&tokens, 10)?,
        ),
        location: Point3::new(
            parse_field(&tokens, 11)?,
            parse_field(&tokens, 12)?,
            parse_field(&tokens, 13)?,
        ),
        rotation_y: parse_field(&tokens, 14)?,
        score: if tokens.len() == 16 {
            Some(parse_field(&tokens, 15)?)
        } else {
            None
        },
        class_name,
    };
    if label.bbox2d.x1 > label.bbox2d.x2 || label.bbox2d.y1 > label.bbox2d.y2 {
        return Err(Error::BoxCornersOutOfOrder {
            x1: label.bbox2d.x1,
            y1: label.bbox2d.y1,
            x2: label.bbox2d.x2,
            y2: label.bbox2d.y2,
        });
    }
    let dims_ok = label.dims.h > 0.0 && label.dims.w > 0.0 && label.dims.l > 0.0;
    if !dims_ok && !label.is_dont_care() {
        return Err(Error::NonPositiveDims {
            h: label.dims.h,
            w: label.dims.w,
            l: label.dims.l,
            class: label.class_name,
        });
    }
    Ok(label)
}

fn format_fields(label: &ObjectLabel) -> String {
    format!(
        "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
        label.class_name,
        label.truncation,
        label.occlusion,
        label.alpha,
        label.bbox2d.x1,
        label.bbox2d.y1,
        label.bbox2d.x2,
        label.bbox2d.y2,
        label.dims.h,
        label.dims.w,
        label.dims.l,
        label.location.x,
        label.location.y,
        label.location.z,
        label.rotation_y,
    )
}

/// Serialize a ground-truth label: 15 fields, two decimals.
///
/// Values quantized to hundredths (as KITTI files are) roundtrip exactly
/// through [`parse_label_line`].
pub fn serialize_label(label: &ObjectLabel) -> String {
    format_fields(label)
}

/// Serialize a prediction: 16 fields ending in the score. Errors when the
/// score is missing.
pub fn serialize_prediction(label: &ObjectLabel) -> Result<String> {
    let score = label.score.ok_or(Error::MissingScore)?;
    Ok(format!("{} {score:.2}", format_fields(label)))
}

/// Parse a whole label file; empty lines are skipped.
pub fn parse_label_file(text: &str) -> Result<Vec<ObjectLabel>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| parse_label_line(line).map_err(|e| e.in_file("<label>", i + 1)))
        .collect()
}

/// Parse a KITTI calibration file: takes the 12 row-major values of the
/// `P2:` line. Image dimensions default to 1242x375.
pub fn parse_calibration(text: &str) -> Result<CameraCalibration<f64>> {
    parse_calibration_key(text, "P2")
}

/// Parse an arbitrary `Pk:` projection line.
pub fn parse_calibration_key(text: &str, key: &str) -> Result<CameraCalibration<f64>> {
    let prefix = format!("{key}:");
    let line = text
        .lines()
        .find(|l| l.trim_start().starts_with(&prefix))
        .ok_or_else(|| Error::CalibMissingKey {
            key: key.to_string(),
        })?;
    let tokens: Vec<&str> = line.trim_start()[prefix.len()..].split_whitespace().collect();
    if tokens.len() != 12 {
        return Err(Error::CalibValueCount {
            key: key.to_string(),
            got: tokens.len(),
        });
    }
    let mut p = [[0.0_f64; 4]; 3];
    for (i, token) in tokens.iter().enumerate() {
        p[i / 4][i % 4] = token.parse().map_err(|_| Error::CalibValueNumeric {
            key: key.to_string(),
            index: i,
            token: token.to_string(),
        })?;
    }
    Ok(CameraCalibration::new(
        p,
        DEFAULT_IMAGE_WIDTH,
        DEFAULT_IMAGE_HEIGHT,
    ))
}

/// Render a calibration as a one-line `P2:` file.
pub fn serialize_calibration(calib: &CameraCalibration<f64>) -> String {
    let mut out = String::from("P2:");
    for row in &calib.p {
        for v in row {
            out.push_str(&format!(" {v}"));
        }
    }
    out.push('\n');
    out
}

/// Ordered list of frame ids, unique and ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitList {
    ids: Vec<u32>,
}

impl SplitList {
    /// Build from arbitrary ids; sorts and rejects duplicates.
    pub fn from_ids(mut ids: Vec<u32>) -> Result<Self> {
        ids.sort_unstable();
        if let Some(dup) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::SplitDuplicateId { id: dup[0] });
        }
        Ok(Self { ids })
    }

    /// Parse a split file: one zero-padded frame id per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut ids = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let token = line.trim();
            if token.is_empty() {
                continue;
            }
            let id: u32 = token.parse().map_err(|_| Error::SplitIdParse {
                line: i + 1,
                token: token.to_string(),
            })?;
            ids.push(id);
        }
        Self::from_ids(ids)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Zero-padded file stem of a frame id.
    pub fn format_id(id: u32) -> String {
        format!("{id:06}")
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for id in &self.ids {
            out.push_str(&Self::format_id(*id));
            out.push('\n');
        }
        out
    }
}

/// One dataset frame: labels plus calibration.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: u32,
    pub labels: Vec<ObjectLabel>,
    pub calib: CameraCalibration<f64>,
}

fn read_to_string(id: u32, path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|_| Error::MissingFrameFile {
        id,
        path: path.to_path_buf(),
    })
}

/// Load labels + calibration for every split frame, in split order.
///
/// Yields exactly one entry per frame id or fails naming the missing file;
/// frames are never silently skipped.
pub fn load_dataset(
    label_dir: &Path,
    calib_dir: &Path,
    split: &SplitList,
) -> Result<Vec<Frame>> {
    split
        .ids()
        .iter()
        .map(|&id| {
            let stem = SplitList::format_id(id);
            let label_path = label_dir.join(format!("{stem}.txt"));
            let calib_path = calib_dir.join(format!("{stem}.txt"));
            let labels = parse_label_file(&read_to_string(id, &label_path)?)
                .map_err(|e| relabel_path(e, &label_path))?;
            let calib = parse_calibration(&read_to_string(id, &calib_path)?)?;
            Ok(Frame { id, labels, calib })
        })
        .collect()
}

/// Load per-frame label files only (used for prediction directories).
pub fn read_label_dir(dir: &Path, split: &SplitList) -> Result<Vec<Vec<ObjectLabel>>> {
    split
        .ids()
        .iter()
        .map(|&id| {
            let path = dir.join(format!("{}.txt", SplitList::format_id(id)));
            parse_label_file(&read_to_string(id, &path)?).map_err(|e| relabel_path(e, &path))
        })
        .collect()
}

fn relabel_path(err: Error, path: &Path) -> Error {
    match err {
        Error::InFile { line, source, .. } => Error::InFile {
            path: PathBuf::from(path),
            line,
            source,
        },
        other => other,
    }
}

/// Infer a split from the `*.txt` files present in a directory.
pub fn split_from_dir(dir: &Path) -> Result<SplitList> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if let Ok(id) = stem.parse::<u32>() {
                ids.push(id);
            }
        }
    }
    SplitList::from_ids(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAR_LINE: &str =
        "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59";

    #[test]
    fn parse_ground_truth_line() {
        let label = parse_label_line(CAR_LINE).unwrap();
        assert_eq!(label.class_name, "Car");
        assert_eq!(label.location.z, 46.70);
        assert_eq!(label.rotation_y, -1.59);
        assert_eq!(label.occlusion, 0);
        assert_eq!(label.dims, Dim3::new(1.65, 1.67, 3.64));
        assert_eq!(label.score, None);
        assert!(!label.is_dont_care());
    }

    #[test]
    fn parse_prediction_line() {
        let line = format!("{CAR_LINE} 0.87");
        let label = parse_label_line(&line).unwrap();
        assert_eq!(label.score, Some(0.87));
        let bare = parse_label_line(CAR_LINE).unwrap();
        assert_eq!(
            ObjectLabel {
                score: None,
                ..label
            },
            bare
        );
    }

    #[test]
    fn parse_rejects_field_count() {
        let err = parse_label_line("Car 0.0 0 0").unwrap_err();
        assert!(matches!(err, Error::LabelFieldCount { got: 4 }));
    }

    #[test]
    fn parse_reports_bad_field_with_index() {
        let line = CAR_LINE.replace("46.70", "forty?");
        match parse_label_line(&line).unwrap_err() {
            Error::LabelFieldNumeric { field, name, token } => {
                assert_eq!(field, 14);
                assert_eq!(name, "loc_z");
                assert_eq!(token, "forty?");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_bad_occlusion() {
        let line = CAR_LINE.replace(" 0 -1.58", " 7 -1.58");
        assert!(matches!(
            parse_label_line(&line).unwrap_err(),
            Error::OcclusionRange { value: 7, .. }
        ));
    }

    #[test]
    fn parse_enforces_label_invariants() {
        // Swapped x corners.
        let line = CAR_LINE.replace("587.01 173.33 614.12", "614.12 173.33 587.01");
        assert!(matches!(
            parse_label_line(&line).unwrap_err(),
            Error::BoxCornersOutOfOrder { .. }
        ));
        // Sentinel dims are only valid on DontCare rows.
        let line = CAR_LINE.replace("1.65 1.67 3.64", "-1 -1 -1");
        assert!(matches!(
            parse_label_line(&line).unwrap_err(),
            Error::NonPositiveDims { .. }
        ));
    }

    #[test]
    fn dont_care_sentinels_roundtrip() {
        let line =
            "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10";
        let label = parse_label_line(line).unwrap();
        assert!(label.is_dont_care());
        assert_eq!(label.occlusion, -1);
        assert_eq!(label.dims.h, -1.0);
        // Sentinels survive serialization (with a score appended).
        let mut pred = label.clone();
        pred.score = Some(0.5);
        let text = serialize_prediction(&pred).unwrap();
        assert!(text.contains("-1.00 -1.00 -1.00"));
        assert!(text.ends_with(" 0.50"));
        let back = parse_label_line(&text).unwrap();
        assert_eq!(back.dims, label.dims);
    }

    #[test]
    fn serialize_requires_score() {
        let label = parse_label_line(CAR_LINE).unwrap();
        assert!(matches!(
            serialize_prediction(&label),
            Err(Error::MissingScore)
        ));
        assert_eq!(serialize_label(&label), CAR_LINE);
    }

    #[test]
    fn serialization_roundtrips() {
        let original = parse_label_line(&format!("{CAR_LINE} 0.87")).unwrap();
        let text = serialize_prediction(&original).unwrap();
        assert_eq!(parse_label_line(&text).unwrap(), original);
        assert!(text.ends_with(" 0.87"));
        let half = ObjectLabel {
            score: Some(0.5),
            ..original.clone()
        };
        assert!(serialize_prediction(&half).unwrap().ends_with(" 0.50"));
    }

    #[test]
    fn calibration_identity_like() {
        let calib = parse_calibration("P2: 1 0 0 0 0 1 0 0 0 0 1 0").unwrap();
        assert_eq!(calib.p[0][0], 1.0);
        assert_eq!(calib.p[2][2], 1.0);
        assert_eq!(calib.image_width, 1242);
        assert_eq!(calib.image_height, 375);
    }

    #[test]
    fn calibration_kitti_like() {
        let text = "P0: 1 0 0 0 0 1 0 0 0 0 1 0\nP2: 721.54 0 609.56 44.86 0 721.54 172.85 0.22 0 0 1 0.003\n";
        let calib = parse_calibration(text).unwrap();
        assert_eq!(calib.p[0][0], 721.54);
        assert_eq!(calib.p[0][2], 609.56);
        assert_eq!(calib.p[1][3], 0.22);
        assert_eq!(calib.p[2][3], 0.003);
    }

    #[test]
    fn calibration_errors() {
        assert!(matches!(
            parse_calibration("P0: 1 0 0 0 0 1 0 0 0 0 1 0").unwrap_err(),
            Error::CalibMissingKey { .. }
        ));
        assert!(matches!(
            parse_calibration("P2: 1 2 3").unwrap_err(),
            Error::CalibValueCount { got: 3, .. }
        ));
        assert!(matches!(
            parse_calibration("P2: 1 0 0 0 0 1 0 0 0 0 x 0").unwrap_err(),
            Error::CalibValueNumeric { index: 10, .. }
        ));
    }

    #[test]
    fn calibration_scientific_notation_roundtrip() {
        let calib = parse_calibration("P2: 7.215377e+02 0 6.095593e+02 4.485728e+01 0 7.215377e+02 1.728540e+02 2.163791e-01 0 0 1 2.745884e-03").unwrap();
        let text = serialize_calibration(&calib);
        let back = parse_calibration(&text).unwrap();
        assert_eq!(back, calib);
    }

    #[test]
    fn split_list_sorted_unique() {
        let split = SplitList::parse("000007\n000001\n000003\n").unwrap();
        assert_eq!(split.ids(), &[1, 3, 7]);
        assert_eq!(split.serialize(), "000001\n000003\n000007\n");
        assert!(matches!(
            SplitList::parse("1\n1\n").unwrap_err(),
            Error::SplitDuplicateId { id: 1 }
        ));
        assert!(matches!(
            SplitList::parse("12ab\n").unwrap_err(),
            Error::SplitIdParse { line: 1, .. }
        ));
    }

    #[test]
    fn load_dataset_reports_missing_frames() {
        let dir = std::env::temp_dir().join(format!("mono3d-kitti-test-{}", std::process::id()));
        let labels = dir.join("label_2");
        let calibs = dir.join("calib");
        fs::create_dir_all(&labels).unwrap();
        fs::create_dir_all(&calibs).unwrap();
        fs::write(labels.join("000001.txt"), format!("{CAR_LINE}\n")).unwrap();
        fs::write(calibs.join("000001.txt"), "P2: 1 0 0 0 0 1 0 0 0 0 1 0\n").unwrap();

        let split = SplitList::from_ids(vec![1]).unwrap();
        let frames = load_dataset(&labels, &calibs, &split).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].id, 1);
        assert_eq!(frames[0].labels.len(), 1);

        let split = SplitList::from_ids(vec![1, 2]).unwrap();
        match load_dataset(&labels, &calibs, &split).unwrap_err() {
            Error::MissingFrameFile { id, .. } => assert_eq!(id, 2),
            other => panic!("unexpected error {other:?}"),
        }
        fs::remove_dir_all(&dir).unwrap();
    }
}
