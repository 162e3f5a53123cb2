//! Inference-time ensembling of the two pointing models.
//!
//! Five strategies choose one final box from the confidence-sorted candidate
//! lists of the head-to-fingertip and wrist-to-fingertip models:
//!
//! * confidence only - higher top-1 confidence wins;
//! * CLIP only (top-1) - higher CLIP similarity of the top-1 crops wins;
//! * CLIP only (top-2 + threshold) - rank-2 boxes join the comparison when
//!   their confidence clears a threshold;
//! * CLIP fusion - hybrid score `confidence + scale * similarity` over the
//!   top-2 of both models;
//! * CAPE - size-adaptive: CLIP fusion for small referents, top-2 +
//!   threshold otherwise.
//!
//! Every strategy returns a reference into its input, so the final box is
//! always one of the candidates. CLIP similarities are computed from
//! embeddings supplied with the candidates; no neural runtime is involved.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BBox;
use crate::geometry::ImageSize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnsembleError {
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-norm embedding cannot be compared")]
    ZeroVector,
    #[error("candidate {model} rank {rank} has no image embedding")]
    MissingEmbedding { model: ModelSource, rank: usize },
    #[error("model {model} supplied no candidates")]
    NotEnoughCandidates { model: ModelSource },
}

/// Which pointing model produced a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSource {
    H2F,
    W2F,
}

impl ModelSource {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelSource::H2F => "h2f",
            ModelSource::W2F => "w2f",
        }
    }
}

impl fmt::Display for ModelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "h2f" | "H2F" => Ok(ModelSource::H2F),
            "w2f" | "W2F" => Ok(ModelSource::W2F),
            other => Err(format!("unknown model source `{other}`")),
        }
    }
}

/// One model prediction. Lists of candidates are sorted by confidence
/// descending and `rank` is the position after sorting (0 = top-1).
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub bbox: BBox,
    pub confidence: f64,
    pub image_embedding: Option<Vec<f64>>,
    pub source: ModelSource,
    pub rank: usize,
}

impl Candidate {
    fn embedding(&self) -> Result<&[f64], EnsembleError> {
        self.image_embedding
            .as_deref()
            .ok_or(EnsembleError::MissingEmbedding {
                model: self.source,
                rank: self.rank,
            })
    }
}

/// Per-image context shared by all candidates: the embedded referring
/// expression and the image dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryContext {
    pub text_embedding: Vec<f64>,
    pub image_size: ImageSize,
}

/// Strategy parameters. Defaults: rank-2 admission threshold 0.95, CLIP
/// fusion scale 0.04, small-object area ratio 0.0048.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub top2_threshold: f64,
    pub fusion_scale: f64,
    pub small_area_ratio: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            top2_threshold: 0.95,
            fusion_scale: 0.04,
            small_area_ratio: 0.0048,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(0.0..=1.0).contains(&self.top2_threshold) {
            return Err("top2_threshold must lie in [0, 1]");
        }
        if !self.fusion_scale.is_finite() || self.fusion_scale <= 0.0 {
            return Err("fusion_scale must be positive");
        }
        if !(self.small_area_ratio > 0.0 && self.small_area_ratio < 1.0) {
            return Err("small_area_ratio must lie in (0, 1)");
        }
        Ok(())
    }
}

/// CLIP similarity scaled to `[0, 100]`: `max(100 * cos(image, text), 0)`.
pub fn clip_sim(image_embedding: &[f64], text_embedding: &[f64]) -> Result<f64, EnsembleError> {
    if image_embedding.len() != text_embedding.len() {
        return Err(EnsembleError::DimensionMismatch {
            left: image_embedding.len(),
            right: text_embedding.len(),
        });
    }
    let dot: f64 = image_embedding
        .iter()
        .zip(text_embedding)
        .map(|(a, b)| a * b)
        .sum();
    let na: f64 = image_embedding.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = text_embedding.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return Err(EnsembleError::ZeroVector);
    }
    let cos = (dot / (na * nb)).clamp(-1.0, 1.0);
    Ok((100.0 * cos).max(0.0))
}

/// Confidence-only: the top-1 with the higher confidence; the
/// head-to-fingertip model wins ties.
pub fn confidence_only<'a>(top1_h2f: &'a Candidate, top1_w2f: &'a Candidate) -> &'a Candidate {
    if top1_h2f.confidence >= top1_w2f.confidence {
        top1_h2f
    } else {
        top1_w2f
    }
}

/// CLIP-only over the two top-1 candidates; the head-to-fingertip model wins
/// ties on similarity.
pub fn clip_only_top1<'a>(
    top1_h2f: &'a Candidate,
    top1_w2f: &'a Candidate,
    ctx: &QueryContext,
) -> Result<&'a Candidate, EnsembleError> {
    let s_h2f = clip_sim(top1_h2f.embedding()?, &ctx.text_embedding)?;
    let s_w2f = clip_sim(top1_w2f.embedding()?, &ctx.text_embedding)?;
    Ok(if s_h2f >= s_w2f { top1_h2f } else { top1_w2f })
}

/// CLIP-only over both top-1 boxes plus any rank-2 box whose confidence
/// reaches `threshold`.
pub fn clip_only_top2_threshold<'a>(
    cands_h2f: &'a [Candidate],
    cands_w2f: &'a [Candidate],
    ctx: &QueryContext,
    threshold: f64,
) -> Result<&'a Candidate, EnsembleError> {
    let mut set: Vec<&Candidate> = vec![
        top1(cands_h2f, ModelSource::H2F)?,
        top1(cands_w2f, ModelSource::W2F)?,
    ];
    for cands in [cands_h2f, cands_w2f] {
        if let Some(second) = cands.get(1) {
            if second.confidence >= threshold {
                set.push(second);
            }
        }
    }
    argmax_by_score(&set, |c| clip_sim(c.embedding()?, &ctx.text_embedding))
}

/// Hybrid score `confidence + scale * clip_sim` over the top-2 of both
/// models.
pub fn clip_fusion<'a>(
    cands_h2f: &'a [Candidate],
    cands_w2f: &'a [Candidate],
    ctx: &QueryContext,
    scale: f64,
) -> Result<&'a Candidate, EnsembleError> {
    let mut set: Vec<&Candidate> = vec![top1(cands_h2f, ModelSource::H2F)?];
    set.extend(cands_h2f.get(1));
    set.push(top1(cands_w2f, ModelSource::W2F)?);
    set.extend(cands_w2f.get(1));
    argmax_by_score(&set, |c| {
        Ok(c.confidence + scale * clip_sim(c.embedding()?, &ctx.text_embedding)?)
    })
}

/// CLIP-Aware Pointing Ensemble: CLIP fusion when the size-reference box is
/// small (area ratio strictly below `cfg.small_area_ratio`), CLIP-only
/// top-2 + threshold otherwise.
///
/// The size reference is the more confident of the two top-1 boxes (ties to
/// the head-to-fingertip model); with normalized boxes its area is already
/// the ratio to the image.
pub fn cape<'a>(
    cands_h2f: &'a [Candidate],
    cands_w2f: &'a [Candidate],
    ctx: &QueryContext,
    cfg: &EnsembleConfig,
) -> Result<&'a Candidate, EnsembleError> {
    let reference = confidence_only(
        top1(cands_h2f, ModelSource::H2F)?,
        top1(cands_w2f, ModelSource::W2F)?,
    );
    if reference.bbox.area() < cfg.small_area_ratio {
        clip_fusion(cands_h2f, cands_w2f, ctx, cfg.fusion_scale)
    } else {
        clip_only_top2_threshold(cands_h2f, cands_w2f, ctx, cfg.top2_threshold)
    }
}

fn top1(cands: &[Candidate], model: ModelSource) -> Result<&Candidate, EnsembleError> {
    debug_assert!(
        cands.windows(2).all(|w| w[0].confidence >= w[1].confidence),
        "candidate lists must be sorted by confidence descending"
    );
    cands
        .first()
        .ok_or(EnsembleError::NotEnoughCandidates { model })
}

/// Argmax over the candidate set with the deterministic tie order: higher
/// score, then higher confidence, then H2F before W2F, then lower rank.
fn argmax_by_score<'a>(
    set: &[&'a Candidate],
    mut score: impl FnMut(&Candidate) -> Result<f64, EnsembleError>,
) -> Result<&'a Candidate, EnsembleError> {
    let mut best: Option<(f64, &Candidate)> = None;
    for &c in set {
        let s = score(c)?;
        best = match best {
            None => Some((s, c)),
            Some((bs, b)) if outranks(s, c, bs, b) => Some((s, c)),
            keep => keep,
        };
    }
    Ok(best.expect("candidate set is never empty").1)
}

fn outranks(s_new: f64, new: &Candidate, s_best: f64, best: &Candidate) -> bool {
    if s_new != s_best {
        return s_new > s_best;
    }
    if new.confidence != best.confidence {
        return new.confidence > best.confidence;
    }
    if new.source != best.source {
        return new.source == ModelSource::H2F;
    }
    new.rank < best.rank
}

/// Strategy selector for drivers and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Confidence,
    ClipTop1,
    ClipTop2,
    ClipFusion,
    Cape,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Confidence,
        Strategy::ClipTop1,
        Strategy::ClipTop2,
        Strategy::ClipFusion,
        Strategy::Cape,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Confidence => "confidence",
            Strategy::ClipTop1 => "clip-top1",
            Strategy::ClipTop2 => "clip-top2",
            Strategy::ClipFusion => "clip-fusion",
            Strategy::Cape => "cape",
        }
    }

    /// Runs the strategy over the two sorted candidate lists.
    pub fn run<'a>(
        &self,
        cands_h2f: &'a [Candidate],
        cands_w2f: &'a [Candidate],
        ctx: &QueryContext,
        cfg: &EnsembleConfig,
    ) -> Result<&'a Candidate, EnsembleError> {
        let first_h2f = top1(cands_h2f, ModelSource::H2F);
        let first_w2f = top1(cands_w2f, ModelSource::W2F);
        match self {
            Strategy::Confidence => Ok(confidence_only(first_h2f?, first_w2f?)),
            Strategy::ClipTop1 => clip_only_top1(first_h2f?, first_w2f?, ctx),
            Strategy::ClipTop2 => {
                clip_only_top2_threshold(cands_h2f, cands_w2f, ctx, cfg.top2_threshold)
            }
            Strategy::ClipFusion => clip_fusion(cands_h2f, cands_w2f, ctx, cfg.fusion_scale),
            Strategy::Cape => cape(cands_h2f, cands_w2f, ctx, cfg),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "confidence" => Ok(Strategy::Confidence),
            "clip-top1" => Ok(Strategy::ClipTop1),
            "clip-top2" => Ok(Strategy::ClipTop2),
            "clip-fusion" => Ok(Strategy::ClipFusion),
            "cape" => Ok(Strategy::Cape),
            other => Err(format!(
                "unknown strategy `{other}` (expected confidence, clip-top1, clip-top2, clip-fusion, or cape)"
            )),
        }
    }
}
