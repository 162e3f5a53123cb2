//! Prediction files: per image and model, the sorted candidate list; and
//! final-prediction files written by the ensemble driver.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::embeddings::{EmbeddingRole, EmbeddingStore};
use super::{parse_record, read_lines, validation, write_jsonl, CoordSpace, FormatError};
use crate::bbox::BBox;
use crate::ensemble::{Candidate, ModelSource};
use crate::geometry::ImageSize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionsHeader {
    pub format: String,
    pub version: u32,
    #[serde(default = "default_box_space")]
    pub box_space: CoordSpace,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

fn default_box_space() -> CoordSpace {
    CoordSpace::Normalized
}

impl PredictionsHeader {
    pub fn canonical() -> Self {
        Self {
            format: "predictions".into(),
            version: 1,
            box_space: CoordSpace::Normalized,
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawCandidate {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    confidence: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawPrediction {
    image_id: String,
    model: ModelSource,
    candidates: Vec<RawCandidate>,
    /// Required when the header declares pixel boxes.
    #[serde(skip_serializing_if = "Option::is_none")]
    image_size: Option<ImageSize>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

/// Sorted candidate list of one model for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub image_id: String,
    pub model: ModelSource,
    pub candidates: Vec<Candidate>,
    pub extra: Map<String, Value>,
}

/// Both models' records for one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelPredictions {
    pub h2f: Option<PredictionRecord>,
    pub w2f: Option<PredictionRecord>,
}

/// The whole prediction file, keyed by image id in stable order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub by_image: BTreeMap<String, ModelPredictions>,
    /// Records whose candidates arrived unsorted and were re-sorted.
    pub resorted: usize,
}

pub fn load_predictions(path: &Path) -> Result<PredictionSet, FormatError> {
    let lines = read_lines::<PredictionsHeader>(path, "predictions", |h| &h.format)?;
    let header = lines.header;

    let mut set = PredictionSet::default();
    for (line_no, line) in &lines.records {
        let raw: RawPrediction = parse_record(path, *line_no, line)?;
        if raw.image_id.is_empty() {
            return Err(validation(path, *line_no, "image_id", "must not be empty"));
        }
        if raw.candidates.is_empty() {
            return Err(validation(
                path,
                *line_no,
                "candidates",
                "at least one candidate is required",
            ));
        }

        let mut scored: Vec<(BBox, f64)> = Vec::with_capacity(raw.candidates.len());
        for (idx, c) in raw.candidates.iter().enumerate() {
            if !(0.0..=1.0).contains(&c.confidence) {
                return Err(validation(
                    path,
                    *line_no,
                    "confidence",
                    format!("candidate {idx}: {} outside [0, 1]", c.confidence),
                ));
            }
            let bbox = convert_box(c.bbox, header.box_space, raw.image_size)
                .map_err(|message| validation(path, *line_no, "box", message))?;
            scored.push((bbox, c.confidence));
        }

        let sorted = scored.windows(2).all(|w| w[0].1 >= w[1].1);
        if !sorted {
            log::warn!(
                "{}:{line_no}: candidates for `{}`/{} arrived unsorted; re-sorting by confidence",
                path.display(),
                raw.image_id,
                raw.model
            );
            scored.sort_by(|a, b| b.1.total_cmp(&a.1));
            set.resorted += 1;
        }

        let candidates = scored
            .into_iter()
            .enumerate()
            .map(|(rank, (bbox, confidence))| Candidate {
                bbox,
                confidence,
                image_embedding: None,
                source: raw.model,
                rank,
            })
            .collect();
        let record = PredictionRecord {
            image_id: raw.image_id.clone(),
            model: raw.model,
            candidates,
            extra: raw.extra,
        };

        let slot = set.by_image.entry(raw.image_id.clone()).or_default();
        let target = match raw.model {
            ModelSource::H2F => &mut slot.h2f,
            ModelSource::W2F => &mut slot.w2f,
        };
        if target.is_some() {
            return Err(validation(
                path,
                *line_no,
                "model",
                format!("duplicate record for `{}`/{}", raw.image_id, raw.model),
            ));
        }
        *target = Some(record);
    }
    Ok(set)
}

pub fn save_predictions(set: &PredictionSet, path: &Path) -> Result<(), FormatError> {
    let mut records = Vec::new();
    for per_model in set.by_image.values() {
        for record in [&per_model.h2f, &per_model.w2f].into_iter().flatten() {
            let raw = RawPrediction {
                image_id: record.image_id.clone(),
                model: record.model,
                candidates: record
                    .candidates
                    .iter()
                    .map(|c| RawCandidate {
                        bbox: c.bbox.corners(),
                        confidence: c.confidence,
                    })
                    .collect(),
                image_size: None,
                extra: record.extra.clone(),
            };
            records.push(serde_json::to_string(&raw).expect("record serialization cannot fail"));
        }
    }
    write_jsonl(path, &PredictionsHeader::canonical(), records.into_iter())
}

/// Copies matching embeddings from the sidecar onto the candidates,
/// returning how many were attached. Vector dimensions are uniform by
/// construction of the store.
pub fn attach_embeddings(set: &mut PredictionSet, store: &EmbeddingStore) -> usize {
    let mut attached = 0;
    for per_model in set.by_image.values_mut() {
        for record in [&mut per_model.h2f, &mut per_model.w2f]
            .into_iter()
            .flatten()
        {
            for candidate in &mut record.candidates {
                let role = EmbeddingRole::from(record.model);
                if let Some(values) = store.get(&record.image_id, role, candidate.rank as u16) {
                    candidate.image_embedding = Some(values.to_vec());
                    attached += 1;
                }
            }
        }
    }
    attached
}

fn convert_box(
    corners: [f64; 4],
    space: CoordSpace,
    size: Option<ImageSize>,
) -> Result<BBox, String> {
    let parsed =
        BBox::new(corners[0], corners[1], corners[2], corners[3]).map_err(|e| e.to_string())?;
    let normalized = match space {
        CoordSpace::Normalized => parsed,
        CoordSpace::Pixel => {
            let size = size.ok_or("pixel-space boxes require image_size on the record")?;
            parsed
                .scale(1.0 / size.width_f(), 1.0 / size.height_f())
                .map_err(|e| e.to_string())?
        }
    };
    if !normalized.is_normalized() {
        return Err(format!(
            "box {:?} falls outside the unit square after normalization",
            normalized.corners()
        ));
    }
    Ok(normalized)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalHeader {
    pub format: String,
    pub version: u32,
    pub strategy: String,
    #[serde(default = "default_box_space")]
    pub box_space: CoordSpace,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// The box an ensemble strategy settled on for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPrediction {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
    pub model: ModelSource,
    pub rank: usize,
}

/// A final-predictions file: the strategy that produced it plus one box per
/// image.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalFile {
    pub strategy: String,
    pub predictions: Vec<FinalPrediction>,
}

pub fn save_final(
    strategy: &str,
    predictions: &[FinalPrediction],
    path: &Path,
) -> Result<(), FormatError> {
    let header = FinalHeader {
        format: "final_predictions".into(),
        version: 1,
        strategy: strategy.to_string(),
        box_space: CoordSpace::Normalized,
        extra: Map::new(),
    };
    write_jsonl(
        path,
        &header,
        predictions
            .iter()
            .map(|p| serde_json::to_string(p).expect("record serialization cannot fail")),
    )
}

pub fn load_final(path: &Path) -> Result<FinalFile, FormatError> {
    let lines = read_lines::<FinalHeader>(path, "final_predictions", |h| &h.format)?;
    let mut predictions = Vec::with_capacity(lines.records.len());
    for (line_no, line) in &lines.records {
        let p: FinalPrediction = parse_record(path, *line_no, line)?;
        if !(0.0..=1.0).contains(&p.confidence) {
            return Err(validation(
                path,
                *line_no,
                "confidence",
                format!("{} outside [0, 1]", p.confidence),
            ));
        }
        predictions.push(p);
    }
    Ok(FinalFile {
        strategy: lines.header.strategy,
        predictions,
    })
}
