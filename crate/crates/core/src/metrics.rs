//! Evaluation protocol: IoU-threshold accuracy over object-size buckets,
//! center distance, and CLIP-score aggregation.
//!
//! Each image carries exactly one ground-truth referent and one final
//! prediction, so average precision at a threshold reduces to the fraction
//! of images whose prediction reaches that IoU. The comparison is `>=` at
//! the threshold, and the center distance is `|dx| + |dy|` over normalized
//! box centers; both conventions are recorded in the report itself.

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;

/// One evaluated image: ground truth, the final prediction, and optional
/// embeddings for the CLIP score.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub image_id: String,
    pub gt_box: BBox,
    pub pred_box: BBox,
    pub pred_embedding: Option<Vec<f64>>,
    pub text_embedding: Option<Vec<f64>>,
}

/// Object-size class of the ground-truth referent, by image-area ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
    /// No size filtering; never produced by [`bucket_of`].
    All,
}

impl SizeBucket {
    pub const REPORTED: [SizeBucket; 4] = [
        SizeBucket::All,
        SizeBucket::Small,
        SizeBucket::Medium,
        SizeBucket::Large,
    ];
}

/// Area-ratio boundaries between the size buckets. Defaults follow the
/// 0.48% / 1.76% convention; the boundary value is assigned upward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeBuckets {
    pub small_max: f64,
    pub medium_max: f64,
}

impl Default for SizeBuckets {
    fn default() -> Self {
        Self {
            small_max: 0.0048,
            medium_max: 0.0176,
        }
    }
}

impl SizeBuckets {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.small_max > 0.0 && self.small_max < self.medium_max && self.medium_max < 1.0) {
            return Err("size buckets must satisfy 0 < small_max < medium_max < 1");
        }
        Ok(())
    }

    pub fn classify_ratio(&self, area_ratio: f64) -> SizeBucket {
        if area_ratio < self.small_max {
            SizeBucket::Small
        } else if area_ratio < self.medium_max {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }

    /// Bucket of a normalized ground-truth box (its area is the ratio).
    pub fn bucket_of(&self, gt: &BBox) -> SizeBucket {
        self.classify_ratio(gt.area())
    }

    fn admits(&self, gt: &BBox, bucket: SizeBucket) -> bool {
        bucket == SizeBucket::All || self.bucket_of(gt) == bucket
    }
}

/// Bucket of a normalized ground-truth box under the default thresholds.
pub fn bucket_of(gt: &BBox) -> SizeBucket {
    SizeBuckets::default().bucket_of(gt)
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// Fraction of bucket records whose prediction reaches `iou >= threshold`,
/// or `None` when the bucket is empty.
pub fn map_at(
    records: &[EvalRecord],
    threshold: f64,
    bucket: SizeBucket,
    buckets: &SizeBuckets,
) -> Option<f64> {
    let mut total = 0usize;
    let mut hits = 0usize;
    for r in records {
        if !buckets.admits(&r.gt_box, bucket) {
            continue;
        }
        total += 1;
        if r.gt_box.iou(&r.pred_box) >= threshold {
            hits += 1;
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

/// L1 distance between normalized box centers.
pub fn center_distance(gt: &BBox, pred: &BBox) -> f64 {
    let g = gt.center();
    let p = pred.center();
    (g.x - p.x).abs() + (g.y - p.y).abs()
}

fn mean_center_distance(
    records: &[EvalRecord],
    bucket: SizeBucket,
    buckets: &SizeBuckets,
) -> Option<f64> {
    let values: Vec<f64> = records
        .iter()
        .filter(|r| buckets.admits(&r.gt_box, bucket))
        .map(|r| center_distance(&r.gt_box, &r.pred_box))
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean CLIP score and coverage for one bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipStats {
    pub mean: Option<f64>,
    pub scored: usize,
    pub skipped: usize,
}

/// Mean cosine similarity between prediction and text embeddings over a
/// bucket. Records missing either embedding (or with unusable vectors) are
/// excluded and counted as skipped.
pub fn clip_metric(records: &[EvalRecord], bucket: SizeBucket, buckets: &SizeBuckets) -> ClipStats {
    let mut sum = 0.0;
    let mut scored = 0usize;
    let mut skipped = 0usize;
    for r in records {
        if !buckets.admits(&r.gt_box, bucket) {
            continue;
        }
        let cos = match (&r.pred_embedding, &r.text_embedding) {
            (Some(p), Some(t)) => cosine(p, t),
            _ => None,
        };
        match cos {
            Some(c) => {
                sum += c;
                scored += 1;
            }
            None => skipped += 1,
        }
    }
    ClipStats {
        mean: (scored > 0).then(|| sum / scored as f64),
        scored,
        skipped,
    }
}

/// One value per size bucket; `None` marks an empty bucket.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BucketValues {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub all: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub small: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub medium: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub large: Option<f64>,
}

impl BucketValues {
    fn build(mut value: impl FnMut(SizeBucket) -> Option<f64>) -> Self {
        Self {
            all: value(SizeBucket::All),
            small: value(SizeBucket::Small),
            medium: value(SizeBucket::Medium),
            large: value(SizeBucket::Large),
        }
    }

    pub fn get(&self, bucket: SizeBucket) -> Option<f64> {
        match bucket {
            SizeBucket::All => self.all,
            SizeBucket::Small => self.small,
            SizeBucket::Medium => self.medium,
            SizeBucket::Large => self.large,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BucketCounts {
    pub all: usize,
    pub small: usize,
    pub medium: usize,
    pub large: usize,
}

/// Accuracy row for one IoU threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub threshold: f64,
    #[serde(flatten)]
    pub accuracy: BucketValues,
}

/// Conventions baked into the numbers, spelled out so reports are
/// self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConventions {
    pub iou_comparison: String,
    pub center_distance: String,
    pub clip_score: String,
}

impl Default for ReportConventions {
    fn default() -> Self {
        Self {
            iou_comparison: "prediction counts as correct when iou >= threshold".into(),
            center_distance: "L1 distance |dx| + |dy| between normalized box centers".into(),
            clip_score: "mean cosine similarity between prediction and text embeddings".into(),
        }
    }
}

/// Aggregated metrics for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub conventions: ReportConventions,
    pub size_buckets: SizeBuckets,
    pub counts: BucketCounts,
    pub map: Vec<MapRow>,
    pub center_distance: BucketValues,
    pub clip_score: BucketValues,
    pub clip_scored: usize,
    pub clip_skipped: usize,
}

/// Populates every cell of the threshold-by-bucket grid. Rows follow the
/// order of `thresholds`; identical inputs produce identical reports.
pub fn build_report(
    records: &[EvalRecord],
    thresholds: &[f64],
    buckets: &SizeBuckets,
) -> EvalReport {
    let count_of = |bucket| {
        records
            .iter()
            .filter(|r| buckets.admits(&r.gt_box, bucket))
            .count()
    };
    let map = thresholds
        .iter()
        .map(|&threshold| MapRow {
            threshold,
            accuracy: BucketValues::build(|b| map_at(records, threshold, b, buckets)),
        })
        .collect();
    let clip_all = clip_metric(records, SizeBucket::All, buckets);
    EvalReport {
        conventions: ReportConventions::default(),
        size_buckets: *buckets,
        counts: BucketCounts {
            all: count_of(SizeBucket::All),
            small: count_of(SizeBucket::Small),
            medium: count_of(SizeBucket::Medium),
            large: count_of(SizeBucket::Large),
        },
        map,
        center_distance: BucketValues::build(|b| mean_center_distance(records, b, buckets)),
        clip_score: BucketValues::build(|b| clip_metric(records, b, buckets).mean),
        clip_scored: clip_all.scored,
        clip_skipped: clip_all.skipped,
    }
}

impl EvalReport {
    /// Plain-text table in the usual thresholds-by-size layout.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;

        let cell = |v: Option<f64>| match v {
            Some(x) => format!("{x:>8.4}"),
            None => format!("{:>8}", "-"),
        };
        let mut out = String::new();
        let _ = writeln!(out, "evaluation report");
        let _ = writeln!(
            out,
            "records: {} (small {}, medium {}, large {})",
            self.counts.all, self.counts.small, self.counts.medium, self.counts.large
        );
        let _ = writeln!(
            out,
            "buckets: small < {:.2}% of image area, medium < {:.2}%, large otherwise",
            self.size_buckets.small_max * 100.0,
            self.size_buckets.medium_max * 100.0
        );
        let _ = writeln!(out, "iou rule: {}", self.conventions.iou_comparison);
        let _ = writeln!(out, "C_D rule: {}", self.conventions.center_distance);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<12}{:>8}{:>8}{:>8}{:>8}",
            "metric", "All", "S", "M", "L"
        );
        for row in &self.map {
            let _ = writeln!(
                out,
                "mAP@{:<8.2}{}{}{}{}",
                row.threshold,
                cell(row.accuracy.all),
                cell(row.accuracy.small),
                cell(row.accuracy.medium),
                cell(row.accuracy.large)
            );
        }
        let _ = writeln!(
            out,
            "{:<12}{}{}{}{}",
            "C_D",
            cell(self.center_distance.all),
            cell(self.center_distance.small),
            cell(self.center_distance.medium),
            cell(self.center_distance.large)
        );
        let _ = writeln!(
            out,
            "{:<12}{}{}{}{}",
            "CLIP",
            cell(self.clip_score.all),
            cell(self.clip_score.small),
            cell(self.clip_score.medium),
            cell(self.clip_score.large)
        );
        let _ = writeln!(
            out,
            "CLIP coverage: {} scored, {} without embeddings",
            self.clip_scored, self.clip_skipped
        );
        out
    }

    /// Deterministic machine-readable form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(c: [f64; 4]) -> BBox {
        BBox::new(c[0], c[1], c[2], c[3]).unwrap()
    }

    fn rec(gt: BBox, pred: BBox) -> EvalRecord {
        EvalRecord {
            image_id: "img".into(),
            gt_box: gt,
            pred_box: pred,
            pred_embedding: None,
            text_embedding: None,
        }
    }

    /// Nested boxes make the IoU the exact area ratio.
    fn rec_with_iou(gt: BBox, target_iou: f64) -> EvalRecord {
        let shrunk_w = gt.width() * target_iou;
        let pred = bx([gt.x_min(), gt.y_min(), gt.x_min() + shrunk_w, gt.y_max()]);
        let r = rec(gt, pred);
        let got = r.gt_box.iou(&r.pred_box);
        assert!(
            (got - target_iou).abs() < 1e-9,
            "fixture iou {got} vs {target_iou}"
        );
        r
    }

    #[test]
    fn iou_examples() {
        let a = bx([0.0, 0.0, 0.4, 0.4]);
        let b = bx([0.2, 0.0, 0.6, 0.4]);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx([0.5, 0.5, 0.9, 0.9])), 0.0);
    }

    #[test]
    fn bucket_boundaries_assign_upward() {
        let buckets = SizeBuckets::default();
        assert_eq!(buckets.classify_ratio(0.0047), SizeBucket::Small);
        assert_eq!(buckets.classify_ratio(0.0048), SizeBucket::Medium);
        assert_eq!(buckets.classify_ratio(0.0175), SizeBucket::Medium);
        assert_eq!(buckets.classify_ratio(0.0176), SizeBucket::Large);
        assert_eq!(buckets.classify_ratio(0.5), SizeBucket::Large);
        // Through a box: 0.1 x 0.04 = 0.004 < 0.48%.
        assert_eq!(bucket_of(&bx([0.0, 0.0, 0.1, 0.04])), SizeBucket::Small);
    }

    #[test]
    fn map_at_perfect_and_empty() {
        let gt = bx([0.2, 0.2, 0.6, 0.6]);
        let records = vec![rec(gt, gt), rec(gt, gt)];
        let buckets = SizeBuckets::default();
        for t in [0.25, 0.5, 0.75] {
            assert_eq!(map_at(&records, t, SizeBucket::All, &buckets), Some(1.0));
        }
        // gt area 0.16 is large; the small bucket is empty.
        assert_eq!(map_at(&records, 0.5, SizeBucket::Small, &buckets), None);

        // Disjoint predictions score zero at every threshold.
        let miss = vec![
            rec(gt, bx([0.7, 0.7, 0.9, 0.9])),
            rec(gt, bx([0.0, 0.7, 0.1, 0.9])),
        ];
        for t in [0.25, 0.5, 0.75] {
            assert_eq!(map_at(&miss, t, SizeBucket::All, &buckets), Some(0.0));
        }
    }

    #[test]
    fn map_at_counts_fractions() {
        // Hand-placed IoUs {0.9 x4, 0.6 x3, 0.3 x2, 0.1 x1}.
        let gt = bx([0.1, 0.1, 0.6, 0.5]);
        let mut records = Vec::new();
        for (iou_target, n) in [(0.9, 4), (0.6, 3), (0.3, 2), (0.1, 1)] {
            for _ in 0..n {
                records.push(rec_with_iou(gt, iou_target));
            }
        }
        let buckets = SizeBuckets::default();
        assert_eq!(map_at(&records, 0.25, SizeBucket::All, &buckets), Some(0.9));
        assert_eq!(map_at(&records, 0.5, SizeBucket::All, &buckets), Some(0.7));
        assert_eq!(map_at(&records, 0.75, SizeBucket::All, &buckets), Some(0.4));
    }

    #[test]
    fn center_distance_examples() {
        let a = bx([0.4, 0.4, 0.6, 0.6]);
        assert_eq!(center_distance(&a, &a), 0.0);
        // Centers (0.5, 0.5) vs (0.6, 0.7).
        let b = bx([0.5, 0.6, 0.7, 0.8]);
        assert!((center_distance(&a, &b) - 0.3).abs() < 1e-12);
        // Different shapes, same center.
        let c = bx([0.3, 0.1, 0.7, 0.9]);
        assert!(center_distance(&a, &c).abs() < 1e-12);
    }

    #[test]
    fn clip_metric_means_and_coverage() {
        let gt = bx([0.2, 0.2, 0.6, 0.6]);
        let mut r1 = rec(gt, gt);
        r1.pred_embedding = Some(vec![1.0, 0.0]);
        r1.text_embedding = Some(vec![1.0, 0.0]);
        let mut r2 = rec(gt, gt);
        // cos = 0.6 against [1, 0].
        r2.pred_embedding = Some(vec![0.6, 0.8]);
        r2.text_embedding = Some(vec![1.0, 0.0]);
        let r3 = rec(gt, gt);
        let stats = clip_metric(&[r1, r2, r3], SizeBucket::All, &SizeBuckets::default());
        assert_eq!(stats.scored, 2);
        assert_eq!(stats.skipped, 1);
        assert!((stats.mean.unwrap() - 0.8).abs() < 1e-12);

        // Orthogonal pairs average to zero; the cosine is not clamped at 0.
        let mut r4 = rec(gt, gt);
        r4.pred_embedding = Some(vec![0.0, 1.0]);
        r4.text_embedding = Some(vec![1.0, 0.0]);
        let mut r5 = rec(gt, gt);
        r5.pred_embedding = Some(vec![-1.0, 0.0]);
        r5.text_embedding = Some(vec![1.0, 0.0]);
        let stats = clip_metric(&[r4, r5], SizeBucket::All, &SizeBuckets::default());
        assert_eq!(stats.mean, Some(-0.5));
    }

    #[test]
    fn report_is_deterministic_and_round_trips() {
        let gt_small = bx([0.0, 0.0, 0.05, 0.05]);
        let gt_large = bx([0.1, 0.1, 0.8, 0.8]);
        let records = vec![
            rec_with_iou(gt_small, 0.8),
            rec_with_iou(gt_large, 0.4),
            rec_with_iou(gt_large, 0.9),
        ];
        let buckets = SizeBuckets::default();
        let a = build_report(&records, &[0.25, 0.5, 0.75], &buckets);
        let b = build_report(&records, &[0.25, 0.5, 0.75], &buckets);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_text(), b.to_text());

        let back = EvalReport::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
        // Empty medium bucket is omitted from the JSON cells entirely.
        assert!(back.map[0].accuracy.medium.is_none());
        let value: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
        assert!(value["map"][0].get("medium").is_none());
        assert!(value["center_distance"].get("medium").is_none());
        assert_eq!(value["counts"]["medium"], serde_json::json!(0));
    }

    #[test]
    fn report_counts_decompose() {
        let records = vec![
            rec_with_iou(bx([0.0, 0.0, 0.05, 0.05]), 0.8), // small, 0.0025
            rec_with_iou(bx([0.0, 0.0, 0.1, 0.1]), 0.5),   // medium, 0.01
            rec_with_iou(bx([0.1, 0.1, 0.8, 0.8]), 0.9),   // large
        ];
        let report = build_report(&records, &[0.5], &SizeBuckets::default());
        assert_eq!(report.counts.all, 3);
        assert_eq!(
            report.counts.small + report.counts.medium + report.counts.large,
            report.counts.all
        );
    }
}
