//! Annotation files: one image per line with its referring expression,
//! ground-truth box, and gestural keypoints.
//!
//! Records with missing or degenerate keypoints are skipped with a logged
//! reason so one bad annotation cannot sink a batch; structural problems
//! (malformed JSON, invalid boxes, duplicate ids) abort with a line number.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{parse_record, read_lines, validation, write_jsonl, CoordSpace, FormatError};
use crate::bbox::BBox;
use crate::geometry::{GesturalKeypoints, ImageSize, Point2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationsHeader {
    pub format: String,
    pub version: u32,
    #[serde(default = "default_box_space")]
    pub box_space: CoordSpace,
    #[serde(default = "default_keypoint_space")]
    pub keypoint_space: CoordSpace,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

fn default_box_space() -> CoordSpace {
    CoordSpace::Normalized
}

fn default_keypoint_space() -> CoordSpace {
    CoordSpace::Pixel
}

impl AnnotationsHeader {
    pub fn canonical() -> Self {
        Self {
            format: "annotations".into(),
            version: 1,
            box_space: CoordSpace::Normalized,
            keypoint_space: CoordSpace::Pixel,
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawKeypoints {
    #[serde(skip_serializing_if = "Option::is_none")]
    eye: Option<Point2>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fingertip: Option<Point2>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wrist: Option<Point2>,
    #[serde(skip_serializing_if = "Option::is_none")]
    elbow: Option<Point2>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotation {
    image_id: String,
    image_size: ImageSize,
    text: String,
    gt_box: [f64; 4],
    keypoints: RawKeypoints,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

/// One validated annotation in canonical spaces: normalized box, pixel
/// keypoints. Unknown input fields ride along in `extra`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub image_size: ImageSize,
    pub text: String,
    pub gt_box: BBox,
    pub keypoints: GesturalKeypoints,
    pub extra: Map<String, Value>,
}

/// A record that was set aside instead of loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRecord {
    pub line: usize,
    pub image_id: String,
    pub reason: String,
}

/// Result of loading an annotation file.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationFile {
    pub records: Vec<AnnotationRecord>,
    pub skipped: Vec<SkippedRecord>,
}

pub fn load_annotations(path: &Path) -> Result<AnnotationFile, FormatError> {
    let lines = read_lines::<AnnotationsHeader>(path, "annotations", |h| &h.format)?;
    let header = lines.header;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for (line_no, line) in &lines.records {
        let raw: RawAnnotation = parse_record(path, *line_no, line)?;
        if raw.image_id.is_empty() {
            return Err(validation(path, *line_no, "image_id", "must not be empty"));
        }
        if !seen_ids.insert(raw.image_id.clone()) {
            return Err(validation(
                path,
                *line_no,
                "image_id",
                format!("duplicate image id `{}`", raw.image_id),
            ));
        }

        let gt_box = convert_box(raw.gt_box, header.box_space, raw.image_size)
            .map_err(|message| validation(path, *line_no, "gt_box", message))?;

        match convert_keypoints(&raw.keypoints, header.keypoint_space, raw.image_size) {
            Ok(keypoints) => records.push(AnnotationRecord {
                image_id: raw.image_id,
                image_size: raw.image_size,
                text: raw.text,
                gt_box,
                keypoints,
                extra: raw.extra,
            }),
            Err(reason) => {
                log::warn!(
                    "{}:{line_no}: skipping `{}`: {reason}",
                    path.display(),
                    raw.image_id
                );
                skipped.push(SkippedRecord {
                    line: *line_no,
                    image_id: raw.image_id,
                    reason,
                });
            }
        }
    }
    Ok(AnnotationFile { records, skipped })
}

/// Writes records in the canonical convention (normalized boxes, pixel
/// keypoints), one JSON object per line.
pub fn save_annotations(records: &[AnnotationRecord], path: &Path) -> Result<(), FormatError> {
    write_jsonl(
        path,
        &AnnotationsHeader::canonical(),
        records.iter().map(|r| {
            let raw = RawAnnotation {
                image_id: r.image_id.clone(),
                image_size: r.image_size,
                text: r.text.clone(),
                gt_box: r.gt_box.corners(),
                keypoints: RawKeypoints {
                    eye: Some(r.keypoints.eye),
                    fingertip: Some(r.keypoints.fingertip),
                    wrist: Some(r.keypoints.wrist),
                    elbow: r.keypoints.elbow,
                },
                extra: r.extra.clone(),
            };
            serde_json::to_string(&raw).expect("record serialization cannot fail")
        }),
    )
}

fn convert_box(corners: [f64; 4], space: CoordSpace, size: ImageSize) -> Result<BBox, String> {
    let parsed =
        BBox::new(corners[0], corners[1], corners[2], corners[3]).map_err(|e| e.to_string())?;
    let normalized = match space {
        CoordSpace::Normalized => parsed,
        CoordSpace::Pixel => parsed
            .scale(1.0 / size.width_f(), 1.0 / size.height_f())
            .map_err(|e| e.to_string())?,
    };
    if !normalized.is_normalized() {
        return Err(format!(
            "box {:?} falls outside the unit square after normalization",
            normalized.corners()
        ));
    }
    Ok(normalized)
}

fn convert_keypoints(
    raw: &RawKeypoints,
    space: CoordSpace,
    size: ImageSize,
) -> Result<GesturalKeypoints, String> {
    let to_pixels = |p: Point2| match space {
        CoordSpace::Pixel => p,
        CoordSpace::Normalized => Point2::new(p.x * size.width_f(), p.y * size.height_f()),
    };
    let require =
        |p: Option<Point2>, name: &str| p.map(to_pixels).ok_or(format!("missing {name} keypoint"));
    let eye = require(raw.eye, "eye")?;
    let fingertip = require(raw.fingertip, "fingertip")?;
    let wrist = require(raw.wrist, "wrist")?;
    GesturalKeypoints::new(eye, fingertip, wrist, raw.elbow.map(to_pixels))
        .map_err(|e| e.to_string())
}
