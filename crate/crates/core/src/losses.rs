//! Loss terms over predictions and ground truth.
//!
//! Every loss is a pure function. The box and referent-alignment terms ship
//! with closed-form gradients in [`grad`], verified against central finite
//! differences; no autodiff dependency is involved.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BBox;
use crate::geometry::{alignment_cosine, GeometryError, GesturalKeypoints, Point2};

pub mod grad;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum LossError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("arm class {class} out of range for {len} logits")]
    LogitDimensionMismatch { class: usize, len: usize },
    #[error("evaluation at a non-differentiable point: {0}")]
    NonDifferentiablePoint(&'static str),
}

/// Hinge on the alignment cosines: `max(0, CS_pred - CS_gt)` where both
/// cosines are measured against the `anchor -> tip` pointing direction.
///
/// `anchor` and `tip` are ground-truth keypoints (eye and fingertip for the
/// head-to-fingertip model; wrist and fingertip for the wrist-to-fingertip
/// model). All four points must share one coordinate space.
pub fn referent_alignment_loss(
    anchor: Point2,
    tip: Point2,
    pred_center: Point2,
    gt_center: Point2,
) -> Result<f64, LossError> {
    let cs_pred = alignment_cosine(anchor, tip, pred_center)?;
    let cs_gt = alignment_cosine(anchor, tip, gt_center)?;
    Ok((cs_pred - cs_gt).max(0.0))
}

/// L1 distance between predicted and ground-truth centers (normalized
/// coordinates).
pub fn center_loss(pred_center: Point2, gt_center: Point2) -> f64 {
    (pred_center.x - gt_center.x).abs() + (pred_center.y - gt_center.y).abs()
}

/// Generalized IoU: `IoU - (hull - union) / hull`, in `[-1, 1]`.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let union = a.union_area(b);
    let hull = a.hull_area(b);
    a.intersection_area(b) / union - (hull - union) / hull
}

/// Relative weighting of the two terms inside the box loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxLossWeights {
    pub l1: f64,
    pub giou: f64,
}

impl Default for BoxLossWeights {
    fn default() -> Self {
        Self { l1: 1.0, giou: 1.0 }
    }
}

/// Box loss: corner-wise L1 plus the GIoU loss `1 - giou`, unit weights.
pub fn box_loss(pred: &BBox, gt: &BBox) -> f64 {
    box_loss_weighted(pred, gt, BoxLossWeights::default())
}

pub fn box_loss_weighted(pred: &BBox, gt: &BBox, w: BoxLossWeights) -> f64 {
    let l1: f64 = pred
        .corners()
        .iter()
        .zip(gt.corners().iter())
        .map(|(p, g)| (p - g).abs())
        .sum();
    w.l1 * l1 + w.giou * (1.0 - giou(pred, gt))
}

/// Gesture loss: per-keypoint L1 distances (normalized coordinates) plus
/// softmax cross-entropy of the arm classification logits. The elbow term
/// contributes only when both sides carry an elbow.
pub fn gesture_loss(
    pred_kp: &GesturalKeypoints,
    gt_kp: &GesturalKeypoints,
    pred_arm_logits: &[f64],
    gt_arm_class: usize,
) -> Result<f64, LossError> {
    let pair_l1 = |p: Point2, g: Point2| (p.x - g.x).abs() + (p.y - g.y).abs();
    let mut l1 = pair_l1(pred_kp.eye, gt_kp.eye)
        + pair_l1(pred_kp.fingertip, gt_kp.fingertip)
        + pair_l1(pred_kp.wrist, gt_kp.wrist);
    if let (Some(pe), Some(ge)) = (pred_kp.elbow, gt_kp.elbow) {
        l1 += pair_l1(pe, ge);
    }
    Ok(l1 + cross_entropy(pred_arm_logits, gt_arm_class)?)
}

/// Numerically stable `-log softmax(logits)[class]`.
pub fn cross_entropy(logits: &[f64], class: usize) -> Result<f64, LossError> {
    if class >= logits.len() {
        return Err(LossError::LogitDimensionMismatch {
            class,
            len: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum_exp = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(log_sum_exp - logits[class])
}

/// The scalar loss terms entering the total objective. The soft-token and
/// contrastive terms are pass-through values computed upstream.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub bbox: f64,
    pub referent_alignment: f64,
    pub center: f64,
    pub gesture: f64,
    pub soft_token: f64,
    pub contrastive: f64,
}

/// Weights of the total objective, ordered as the box, referent-alignment,
/// center, gesture, soft-token, and contrastive terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub bbox: f64,
    pub referent_alignment: f64,
    pub center: f64,
    pub gesture: f64,
    pub soft_token: f64,
    pub contrastive: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            bbox: 2.0,
            referent_alignment: 1.0,
            center: 10.0,
            gesture: 10.0,
            soft_token: 1.0,
            contrastive: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), &'static str> {
        let all = [
            self.bbox,
            self.referent_alignment,
            self.center,
            self.gesture,
            self.soft_token,
            self.contrastive,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("loss weights must be finite and non-negative");
        }
        Ok(())
    }
}

/// Weighted sum of the six loss terms.
pub fn total_loss(parts: &LossParts, w: &LossWeights) -> f64 {
    w.bbox * parts.bbox
        + w.referent_alignment * parts.referent_alignment
        + w.center * parts.center
        + w.gesture * parts.gesture
        + w.soft_token * parts.soft_token
        + w.contrastive * parts.contrastive
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(c: [f64; 4]) -> BBox {
        BBox::new(c[0], c[1], c[2], c[3]).unwrap()
    }

    fn pt(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    /// Grid-counting oracle for box areas: classify cell centers of an
    /// n x n partition of the hull, entirely independent of the interval
    /// arithmetic in `BBox`.
    fn giou_grid_oracle(a: &BBox, b: &BBox, n: usize) -> f64 {
        let x_lo = a.x_min().min(b.x_min());
        let x_hi = a.x_max().max(b.x_max());
        let y_lo = a.y_min().min(b.y_min());
        let y_hi = a.y_max().max(b.y_max());
        let cell = ((x_hi - x_lo) / n as f64) * ((y_hi - y_lo) / n as f64);
        let inside = |bx: &BBox, x: f64, y: f64| {
            x > bx.x_min() && x < bx.x_max() && y > bx.y_min() && y < bx.y_max()
        };
        let (mut in_a, mut in_b, mut in_both) = (0u64, 0u64, 0u64);
        for i in 0..n {
            let x = x_lo + (i as f64 + 0.5) / n as f64 * (x_hi - x_lo);
            for j in 0..n {
                let y = y_lo + (j as f64 + 0.5) / n as f64 * (y_hi - y_lo);
                if inside(a, x, y) {
                    in_a += 1;
                }
                if inside(b, x, y) {
                    in_b += 1;
                }
                if inside(a, x, y) && inside(b, x, y) {
                    in_both += 1;
                }
            }
        }
        let inter = in_both as f64 * cell;
        let union = (in_a + in_b - in_both) as f64 * cell;
        let hull = (x_hi - x_lo) * (y_hi - y_lo);
        inter / union - (hull - union) / hull
    }

    #[test]
    fn referent_alignment_zero_when_centers_match() {
        let loss = referent_alignment_loss(pt(0.0, 0.0), pt(1.0, 0.0), pt(3.0, 2.0), pt(3.0, 2.0))
            .unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn referent_alignment_hinge_never_fires_on_perfect_gt() {
        // CS_gt = 1 is the maximum, so the hinge stays at zero.
        for pred in [pt(0.0, 5.0), pt(-2.0, 1.0), pt(9.0, -3.0)] {
            let loss =
                referent_alignment_loss(pt(0.0, 0.0), pt(1.0, 0.0), pred, pt(2.0, 0.0)).unwrap();
            assert_eq!(loss, 0.0);
        }
    }

    #[test]
    fn referent_alignment_orthogonal_gt_collinear_pred() {
        // CS_gt = 0, CS_pred = 1.
        let loss = referent_alignment_loss(pt(0.0, 0.0), pt(1.0, 0.0), pt(2.0, 0.0), pt(0.0, 1.0))
            .unwrap();
        assert_eq!(loss, 1.0);
    }

    #[test]
    fn referent_alignment_rejects_degenerate() {
        let o = pt(0.0, 0.0);
        assert!(referent_alignment_loss(o, o, pt(1.0, 0.0), pt(0.0, 1.0)).is_err());
        assert!(referent_alignment_loss(o, pt(1.0, 0.0), o, pt(0.0, 1.0)).is_err());
    }

    #[test]
    fn center_loss_examples() {
        assert_eq!(center_loss(pt(0.3, 0.7), pt(0.3, 0.7)), 0.0);
        assert!((center_loss(pt(0.2, 0.3), pt(0.5, 0.3)) - 0.3).abs() < 1e-15);
        assert_eq!(center_loss(pt(0.0, 0.0), pt(1.0, 1.0)), 2.0);
    }

    #[test]
    fn giou_identical_is_one() {
        let a = bx([0.1, 0.2, 0.6, 0.9]);
        assert_eq!(giou(&a, &a), 1.0);
    }

    #[test]
    fn giou_touching_halves_is_zero() {
        // Hull equals the union, IoU is zero.
        let a = bx([0.0, 0.0, 0.5, 1.0]);
        let b = bx([0.5, 0.0, 1.0, 1.0]);
        assert_eq!(giou(&a, &b), 0.0);
    }

    #[test]
    fn giou_far_corners() {
        // 0 - (1 - 0.08) / 1 = -0.92.
        let a = bx([0.0, 0.0, 0.2, 0.2]);
        let b = bx([0.8, 0.8, 1.0, 1.0]);
        assert!((giou(&a, &b) - (-0.92)).abs() < 1e-12);
        assert_eq!(giou(&a, &b), giou(&b, &a));
    }

    #[test]
    fn giou_matches_grid_oracle() {
        let pairs = [
            (bx([0.1, 0.1, 0.45, 0.5]), bx([0.3, 0.2, 0.7, 0.8])),
            (bx([0.0, 0.0, 0.2, 0.2]), bx([0.8, 0.8, 1.0, 1.0])),
            (bx([0.2, 0.2, 0.8, 0.8]), bx([0.3, 0.3, 0.5, 0.6])),
            (bx([0.4, 0.4, 0.6, 0.6]), bx([0.5, 0.4, 0.7, 0.6])),
        ];
        for (a, b) in &pairs {
            let approx = giou_grid_oracle(a, b, 1200);
            assert!(
                (giou(a, b) - approx).abs() < 3e-3,
                "giou {} vs oracle {}",
                giou(a, b),
                approx
            );
        }
    }

    #[test]
    fn box_loss_zero_at_gt() {
        let a = bx([0.25, 0.25, 0.75, 0.75]);
        assert_eq!(box_loss(&a, &a), 0.0);
    }

    #[test]
    fn box_loss_disjoint_example() {
        // L1 = 3.2, GIoU term = 1 - (-0.92) = 1.92.
        let pred = bx([0.0, 0.0, 0.2, 0.2]);
        let gt = bx([0.8, 0.8, 1.0, 1.0]);
        assert!((box_loss(&pred, &gt) - 5.12).abs() < 1e-12);
    }

    #[test]
    fn box_loss_shifted_example() {
        // L1 = 0.2; overlap 0.1 x 0.2 against two 0.2 x 0.2 boxes whose hull
        // equals their union, so giou = iou = 1/3.
        let gt = bx([0.4, 0.4, 0.6, 0.6]);
        let pred = bx([0.5, 0.4, 0.7, 0.6]);
        let expected = 0.2 + (1.0 - 1.0 / 3.0);
        assert!((box_loss(&pred, &gt) - expected).abs() < 1e-12);
        assert!((giou(&pred, &gt) - giou_grid_oracle(&pred, &gt, 1200)).abs() < 3e-3);
    }

    #[test]
    fn gesture_loss_perfect_prediction() {
        let kp = GesturalKeypoints::new(pt(0.1, 0.1), pt(0.5, 0.5), pt(0.3, 0.4), None).unwrap();
        let loss = gesture_loss(&kp, &kp, &[20.0, -20.0], 0).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn gesture_loss_uniform_logits_is_ln2() {
        let kp = GesturalKeypoints::new(pt(0.1, 0.1), pt(0.5, 0.5), pt(0.3, 0.4), None).unwrap();
        let loss = gesture_loss(&kp, &kp, &[0.7, 0.7], 1).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn gesture_loss_keypoint_offsets_add_up() {
        let gt = GesturalKeypoints::new(pt(0.1, 0.1), pt(0.5, 0.5), pt(0.3, 0.4), None).unwrap();
        let pred = GesturalKeypoints::new(pt(0.2, 0.1), pt(0.6, 0.5), pt(0.4, 0.4), None).unwrap();
        let loss = gesture_loss(&pred, &gt, &[30.0, -30.0], 0).unwrap();
        assert!((loss - 0.3).abs() < 1e-12);
    }

    #[test]
    fn gesture_loss_includes_elbow_when_both_present() {
        let gt =
            GesturalKeypoints::new(pt(0.1, 0.1), pt(0.5, 0.5), pt(0.3, 0.4), Some(pt(0.2, 0.3)))
                .unwrap();
        let pred = GesturalKeypoints::new(
            pt(0.1, 0.1),
            pt(0.5, 0.5),
            pt(0.3, 0.4),
            Some(pt(0.25, 0.3)),
        )
        .unwrap();
        let loss = gesture_loss(&pred, &gt, &[30.0, -30.0], 0).unwrap();
        assert!((loss - 0.05).abs() < 1e-12);
        // One-sided elbow contributes nothing.
        let no_elbow =
            GesturalKeypoints::new(pt(0.1, 0.1), pt(0.5, 0.5), pt(0.3, 0.4), None).unwrap();
        let loss = gesture_loss(&no_elbow, &gt, &[30.0, -30.0], 0).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn gesture_loss_rejects_bad_class_index() {
        let kp = GesturalKeypoints::new(pt(0.1, 0.1), pt(0.5, 0.5), pt(0.3, 0.4), None).unwrap();
        let err = gesture_loss(&kp, &kp, &[0.0, 0.0], 2).unwrap_err();
        assert_eq!(err, LossError::LogitDimensionMismatch { class: 2, len: 2 });
    }

    #[test]
    fn total_loss_weighting() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossParts::default(), &w), 0.0);

        let unit = LossParts {
            bbox: 1.0,
            referent_alignment: 1.0,
            center: 1.0,
            gesture: 1.0,
            soft_token: 1.0,
            contrastive: 1.0,
        };
        assert_eq!(total_loss(&unit, &w), 25.0);

        let zero = LossWeights {
            bbox: 0.0,
            referent_alignment: 0.0,
            center: 0.0,
            gesture: 0.0,
            soft_token: 0.0,
            contrastive: 0.0,
        };
        assert_eq!(total_loss(&unit, &zero), 0.0);
    }

    #[test]
    fn total_loss_linear_in_parts_and_weights() {
        let w = LossWeights::default();
        let p1 = LossParts {
            bbox: 0.3,
            referent_alignment: 0.1,
            center: 0.2,
            gesture: 0.4,
            soft_token: 0.5,
            contrastive: 0.6,
        };
        let mut p2 = p1;
        p2.bbox *= 3.0;
        let diff = total_loss(&p2, &w) - total_loss(&p1, &w);
        assert!((diff - w.bbox * 2.0 * p1.bbox).abs() < 1e-12);
    }
}
