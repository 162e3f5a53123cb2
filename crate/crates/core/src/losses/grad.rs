//! Closed-form gradients for the differentiable losses, and the
//! finite-difference machinery that verifies them.
//!
//! Gradients are taken with respect to the predicted quantities only
//! (predicted center or predicted box corners); ground truth and keypoints
//! are constants. At hinge and absolute-value kinks the zero branch is used,
//! and evaluation points too close to a kink are reported as
//! [`LossError::NonDifferentiablePoint`] rather than silently checked.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bbox::BBox;
use crate::geometry::{alignment_cosine, Point2};
use crate::losses::{
    box_loss_weighted, center_loss, giou, referent_alignment_loss, BoxLossWeights, LossError,
};

/// Proximity below which a kink disqualifies the evaluation point.
pub const KINK_EPS: f64 = 1e-6;

/// Central finite differences of `f` at `at` with step `eps`.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, at: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = at.to_vec();
    let mut out = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        probe[i] = at[i] + eps;
        let hi = f(&probe);
        probe[i] = at[i] - eps;
        let lo = f(&probe);
        probe[i] = at[i];
        out.push((hi - lo) / (2.0 * eps));
    }
    out
}

/// Worst per-component relative error between two gradients. Components
/// where both magnitudes fall below `1e-6` are compared absolutely, which
/// keeps agreeing near-zero gradients from blowing up the ratio.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let diff = (a - n).abs();
            let denom = a.abs().max(n.abs());
            if denom < 1e-6 {
                diff
            } else {
                diff / denom
            }
        })
        .fold(0.0, f64::max)
}

/// Gradient of the referent-alignment hinge w.r.t. the predicted center.
pub fn referent_alignment_grad(
    anchor: Point2,
    tip: Point2,
    pred_center: Point2,
    gt_center: Point2,
) -> Result<[f64; 2], LossError> {
    let cs_pred = alignment_cosine(anchor, tip, pred_center)?;
    let cs_gt = alignment_cosine(anchor, tip, gt_center)?;
    if cs_pred <= cs_gt {
        // Inactive hinge; the kink itself takes the zero branch.
        return Ok([0.0, 0.0]);
    }
    let v = tip - anchor;
    let u = pred_center - anchor;
    let (nv, nu) = (v.norm(), u.norm());
    let dot = v.dot(u);
    // d cos / du = v / (|v||u|) - (v.u) u / (|v||u|^3)
    let scale = 1.0 / (nv * nu);
    let pull = dot / (nv * nu * nu * nu);
    Ok([v.x * scale - u.x * pull, v.y * scale - u.y * pull])
}

/// Gradient of the center L1 loss w.r.t. the predicted center.
pub fn center_loss_grad(pred_center: Point2, gt_center: Point2) -> [f64; 2] {
    [
        l1_sign(pred_center.x - gt_center.x),
        l1_sign(pred_center.y - gt_center.y),
    ]
}

fn l1_sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of `giou(pred, gt)` w.r.t. the four predicted corners
/// `[x_min, y_min, x_max, y_max]`.
pub fn giou_grad(pred: &BBox, gt: &BBox) -> [f64; 4] {
    let [px1, py1, px2, py2] = pred.corners();
    let [gx1, gy1, gx2, gy2] = gt.corners();

    let iw = px2.min(gx2) - px1.max(gx1);
    let ih = py2.min(gy2) - py1.max(gy1);
    let overlapping = iw > 0.0 && ih > 0.0;
    let inter = if overlapping { iw * ih } else { 0.0 };

    let (pw, ph) = (px2 - px1, py2 - py1);
    let union = pred.union_area(gt);
    let hull = pred.hull_area(gt);
    let (hw, hh) = (px2.max(gx2) - px1.min(gx1), py2.max(gy2) - py1.min(gy1));

    // Which corner owns each max/min decides the local derivative.
    let d_inter = if overlapping {
        [
            if px1 > gx1 { -ih } else { 0.0 },
            if py1 > gy1 { -iw } else { 0.0 },
            if px2 < gx2 { ih } else { 0.0 },
            if py2 < gy2 { iw } else { 0.0 },
        ]
    } else {
        [0.0; 4]
    };
    let d_area = [-ph, -pw, ph, pw];
    let d_hull = [
        if px1 < gx1 { -hh } else { 0.0 },
        if py1 < gy1 { -hw } else { 0.0 },
        if px2 > gx2 { hh } else { 0.0 },
        if py2 > gy2 { hw } else { 0.0 },
    ];

    // giou = I/U - 1 + U/H
    let mut out = [0.0; 4];
    for k in 0..4 {
        let d_union = d_area[k] - d_inter[k];
        out[k] = (d_inter[k] * union - inter * d_union) / (union * union)
            + (d_union * hull - union * d_hull[k]) / (hull * hull);
    }
    out
}

/// Gradient of the weighted box loss w.r.t. the predicted corners.
pub fn box_loss_grad(pred: &BBox, gt: &BBox, w: BoxLossWeights) -> [f64; 4] {
    let g = giou_grad(pred, gt);
    let mut out = [0.0; 4];
    for (k, (p, t)) in pred.corners().iter().zip(gt.corners().iter()).enumerate() {
        out[k] = w.l1 * l1_sign(p - t) - w.giou * g[k];
    }
    out
}

fn ensure_away_from_kink(distance: f64, what: &'static str) -> Result<(), LossError> {
    if distance < KINK_EPS {
        Err(LossError::NonDifferentiablePoint(what))
    } else {
        Ok(())
    }
}

/// Kink proximity for the alignment hinge.
pub fn check_referent_alignment_smooth(
    anchor: Point2,
    tip: Point2,
    pred_center: Point2,
    gt_center: Point2,
) -> Result<(), LossError> {
    let cs_pred = alignment_cosine(anchor, tip, pred_center)?;
    let cs_gt = alignment_cosine(anchor, tip, gt_center)?;
    ensure_away_from_kink((cs_pred - cs_gt).abs(), "alignment hinge")
}

/// Kink proximity for the center L1 loss.
pub fn check_center_smooth(pred_center: Point2, gt_center: Point2) -> Result<(), LossError> {
    ensure_away_from_kink((pred_center.x - gt_center.x).abs(), "center |dx|")?;
    ensure_away_from_kink((pred_center.y - gt_center.y).abs(), "center |dy|")
}

/// Kink proximity for GIoU: coincident corner coordinates or boxes that
/// touch along an edge.
pub fn check_giou_smooth(pred: &BBox, gt: &BBox) -> Result<(), LossError> {
    let [px1, py1, px2, py2] = pred.corners();
    let [gx1, gy1, gx2, gy2] = gt.corners();
    ensure_away_from_kink((px1 - gx1).abs(), "giou x_min tie")?;
    ensure_away_from_kink((py1 - gy1).abs(), "giou y_min tie")?;
    ensure_away_from_kink((px2 - gx2).abs(), "giou x_max tie")?;
    ensure_away_from_kink((py2 - gy2).abs(), "giou y_max tie")?;
    let iw = px2.min(gx2) - px1.max(gx1);
    let ih = py2.min(gy2) - py1.max(gy1);
    ensure_away_from_kink(iw.abs(), "giou touching in x")?;
    ensure_away_from_kink(ih.abs(), "giou touching in y")
}

/// Kink proximity for the box loss: the GIoU kinks plus the corner-wise L1
/// kinks.
pub fn check_box_loss_smooth(pred: &BBox, gt: &BBox) -> Result<(), LossError> {
    check_giou_smooth(pred, gt)?;
    for (p, g) in pred.corners().iter().zip(gt.corners().iter()) {
        ensure_away_from_kink((p - g).abs(), "box corner |d|")?;
    }
    Ok(())
}

/// Compares the analytic gradient of the alignment hinge against central
/// finite differences, returning the worst relative error.
pub fn grad_check_referent_alignment(
    anchor: Point2,
    tip: Point2,
    pred_center: Point2,
    gt_center: Point2,
    eps: f64,
) -> Result<f64, LossError> {
    check_referent_alignment_smooth(anchor, tip, pred_center, gt_center)?;
    let analytic = referent_alignment_grad(anchor, tip, pred_center, gt_center)?;
    let numeric = finite_diff_grad(
        |p| {
            referent_alignment_loss(anchor, tip, Point2::new(p[0], p[1]), gt_center)
                .expect("perturbed point stays non-degenerate")
        },
        &[pred_center.x, pred_center.y],
        eps,
    );
    Ok(max_relative_error(&analytic, &numeric))
}

pub fn grad_check_center(
    pred_center: Point2,
    gt_center: Point2,
    eps: f64,
) -> Result<f64, LossError> {
    check_center_smooth(pred_center, gt_center)?;
    let analytic = center_loss_grad(pred_center, gt_center);
    let numeric = finite_diff_grad(
        |p| center_loss(Point2::new(p[0], p[1]), gt_center),
        &[pred_center.x, pred_center.y],
        eps,
    );
    Ok(max_relative_error(&analytic, &numeric))
}

pub fn grad_check_giou(pred: &BBox, gt: &BBox, eps: f64) -> Result<f64, LossError> {
    check_giou_smooth(pred, gt)?;
    let analytic = giou_grad(pred, gt);
    let numeric = finite_diff_grad(
        |p| {
            let b = BBox::new(p[0], p[1], p[2], p[3]).expect("perturbed box stays valid");
            giou(&b, gt)
        },
        &pred.corners(),
        eps,
    );
    Ok(max_relative_error(&analytic, &numeric))
}

pub fn grad_check_box_loss(
    pred: &BBox,
    gt: &BBox,
    w: BoxLossWeights,
    eps: f64,
) -> Result<f64, LossError> {
    check_box_loss_smooth(pred, gt)?;
    let analytic = box_loss_grad(pred, gt, w);
    let numeric = finite_diff_grad(
        |p| {
            let b = BBox::new(p[0], p[1], p[2], p[3]).expect("perturbed box stays valid");
            box_loss_weighted(&b, gt, w)
        },
        &pred.corners(),
        eps,
    );
    Ok(max_relative_error(&analytic, &numeric))
}

/// Outcome of a randomized gradient verification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub trials_per_loss: usize,
    pub referent_alignment: f64,
    pub center: f64,
    pub giou: f64,
    pub box_loss: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.referent_alignment
            .max(self.center)
            .max(self.giou)
            .max(self.box_loss)
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "gradient check ({} trials per loss)",
            self.trials_per_loss
        )?;
        writeln!(f, "  referent alignment : {:.3e}", self.referent_alignment)?;
        writeln!(f, "  center L1          : {:.3e}", self.center)?;
        writeln!(f, "  giou               : {:.3e}", self.giou)?;
        writeln!(f, "  box loss           : {:.3e}", self.box_loss)?;
        write!(f, "  max relative error : {:.3e}", self.max_rel_error())
    }
}

/// Margin used when sampling verification configurations. Much wider than
/// [`KINK_EPS`] so the finite-difference step never straddles a kink.
const SAMPLE_MARGIN: f64 = 1e-3;

fn sample_point(rng: &mut impl Rng, lo: f64, hi: f64) -> Point2 {
    Point2::new(rng.random_range(lo..hi), rng.random_range(lo..hi))
}

fn sample_box(rng: &mut impl Rng) -> BBox {
    loop {
        let w = rng.random_range(0.05..0.4);
        let h = rng.random_range(0.05..0.4);
        let x = rng.random_range(0.05..0.95 - w);
        let y = rng.random_range(0.05..0.95 - h);
        if let Ok(b) = BBox::new(x, y, x + w, y + h) {
            return b;
        }
    }
}

fn sample_alignment_config(rng: &mut impl Rng) -> (Point2, Point2, Point2, Point2) {
    loop {
        let anchor = sample_point(rng, 0.0, 100.0);
        let tip = sample_point(rng, 0.0, 100.0);
        let pred = sample_point(rng, 0.0, 100.0);
        let gt = sample_point(rng, 0.0, 100.0);
        // Keep direction vectors well away from zero so the cosine stays
        // smooth under the finite-difference step.
        if (tip - anchor).norm() < 5.0 || (pred - anchor).norm() < 5.0 || (gt - anchor).norm() < 5.0
        {
            continue;
        }
        let cs_pred = alignment_cosine(anchor, tip, pred).expect("norms checked");
        let cs_gt = alignment_cosine(anchor, tip, gt).expect("norms checked");
        if (cs_pred - cs_gt).abs() < SAMPLE_MARGIN {
            continue;
        }
        return (anchor, tip, pred, gt);
    }
}

fn sample_center_config(rng: &mut impl Rng) -> (Point2, Point2) {
    loop {
        let pred = sample_point(rng, 0.0, 1.0);
        let gt = sample_point(rng, 0.0, 1.0);
        if (pred.x - gt.x).abs() >= SAMPLE_MARGIN && (pred.y - gt.y).abs() >= SAMPLE_MARGIN {
            return (pred, gt);
        }
    }
}

fn sample_box_pair(rng: &mut impl Rng) -> (BBox, BBox) {
    loop {
        let pred = sample_box(rng);
        let gt = sample_box(rng);
        let coords_clear = pred
            .corners()
            .iter()
            .zip(gt.corners().iter())
            .all(|(p, g)| (p - g).abs() >= SAMPLE_MARGIN);
        if !coords_clear {
            continue;
        }
        let iw = pred.x_max().min(gt.x_max()) - pred.x_min().max(gt.x_min());
        let ih = pred.y_max().min(gt.y_max()) - pred.y_min().max(gt.y_min());
        if iw.abs() < SAMPLE_MARGIN || ih.abs() < SAMPLE_MARGIN {
            continue;
        }
        return (pred, gt);
    }
}

/// Runs `trials` seeded random configurations per loss and reports the worst
/// analytic-vs-numeric relative error seen for each.
pub fn run_grad_check_suite(seed: u64, trials: usize, eps: f64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        trials_per_loss: trials,
        referent_alignment: 0.0,
        center: 0.0,
        giou: 0.0,
        box_loss: 0.0,
    };
    for _ in 0..trials {
        let (anchor, tip, pred, gt) = sample_alignment_config(&mut rng);
        let err = grad_check_referent_alignment(anchor, tip, pred, gt, eps)
            .expect("sampler avoids kinks");
        report.referent_alignment = report.referent_alignment.max(err);

        let (pred, gt) = sample_center_config(&mut rng);
        let err = grad_check_center(pred, gt, eps).expect("sampler avoids kinks");
        report.center = report.center.max(err);

        let (pred, gt) = sample_box_pair(&mut rng);
        let err = grad_check_giou(&pred, &gt, eps).expect("sampler avoids kinks");
        report.giou = report.giou.max(err);

        let err = grad_check_box_loss(&pred, &gt, BoxLossWeights::default(), eps)
            .expect("sampler avoids kinks");
        report.box_loss = report.box_loss.max(err);
    }
    report
}
