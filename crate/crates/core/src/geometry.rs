//! Planar geometry for pointing rays over image coordinates.
//!
//! Coordinate convention: origin at the top-left corner of the image,
//! x grows rightward, y grows downward. All computations run in continuous
//! coordinates over the closed rectangle `[0, W] x [0, H]`; pixel centers
//! sit at half-integer positions `(i + 0.5, j + 0.5)`.
//!
//! Keypoints may lie outside the image rectangle (annotations are allowed
//! to place an eye or wrist off-frame).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two points closer than this (in px) are treated as coincident.
/// Annotation data carries pixel-level noise; this sits far below it.
pub const COINCIDENT_EPS: f64 = 1e-9;

/// Vectors with a norm below this are rejected as degenerate.
pub const DEGENERATE_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum GeometryError {
    /// Ray origin and through point coincide (within [`COINCIDENT_EPS`]).
    #[error("degenerate ray: origin and through point coincide")]
    DegenerateRay,
    /// The ray starts outside the image and never enters it.
    #[error("ray never intersects the image rectangle")]
    NoIntersection,
    /// A direction vector has (near-)zero length.
    #[error("degenerate vector: norm below {DEGENERATE_NORM_EPS}")]
    DegenerateVector,
}

/// A 2D point in image coordinates (px), y pointing down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "(f64, f64)", from = "(f64, f64)")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_to(&self, other: Point2) -> f64 {
        (*self - other).norm()
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

impl From<Point2> for (f64, f64) {
    fn from(p: Point2) -> Self {
        (p.x, p.y)
    }
}

/// Displacement between two points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(&self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(&self) -> f64 {
        self.dot(*self).sqrt()
    }

    pub fn scale(&self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Vec2;

    fn sub(self, rhs: Point2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add<Vec2> for Point2 {
    type Output = Point2;

    fn add(self, rhs: Vec2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

/// Image dimensions in pixels. Both components are positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u32; 2]")]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Result<Self, InvalidImageSize> {
        if width == 0 || height == 0 {
            return Err(InvalidImageSize { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn width_f(&self) -> f64 {
        f64::from(self.width)
    }

    pub fn height_f(&self) -> f64 {
        f64::from(self.height)
    }

    /// True if the point lies inside the closed rectangle `[0, W] x [0, H]`.
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.x <= self.width_f() && p.y >= 0.0 && p.y <= self.height_f()
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("image size must be positive, got {width}x{height}")]
pub struct InvalidImageSize {
    pub width: u32,
    pub height: u32,
}

impl TryFrom<[u32; 2]> for ImageSize {
    type Error = InvalidImageSize;

    fn try_from([width, height]: [u32; 2]) -> Result<Self, Self::Error> {
        Self::new(width, height)
    }
}

impl From<ImageSize> for [u32; 2] {
    fn from(s: ImageSize) -> Self {
        [s.width, s.height]
    }
}

/// Named gestural keypoints for one person in one image, in pixels.
///
/// Construction rejects configurations that cannot define a pointing line:
/// the eye and the wrist must each differ from the fingertip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GesturalKeypoints {
    pub eye: Point2,
    pub fingertip: Point2,
    pub wrist: Point2,
    pub elbow: Option<Point2>,
}

impl GesturalKeypoints {
    pub fn new(
        eye: Point2,
        fingertip: Point2,
        wrist: Point2,
        elbow: Option<Point2>,
    ) -> Result<Self, GeometryError> {
        if (eye - fingertip).norm() < COINCIDENT_EPS || (wrist - fingertip).norm() < COINCIDENT_EPS
        {
            return Err(GeometryError::DegenerateRay);
        }
        Ok(Self {
            eye,
            fingertip,
            wrist,
            elbow,
        })
    }
}

/// A pointing segment clipped to the image rectangle.
///
/// `border_end` is the exit intersection of the ray `origin -> through` with
/// the rectangle boundary, so the segment `[origin, border_end]` is exactly
/// the in-image extent of the pointing line. When `through` lies inside the
/// image it sits between `origin` and `border_end`; when it lies outside,
/// the segment ends where the ray leaves the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySegment {
    pub origin: Point2,
    pub through: Point2,
    pub border_end: Point2,
    pub image_size: ImageSize,
}

impl RaySegment {
    pub fn length(&self) -> f64 {
        (self.border_end - self.origin).norm()
    }
}

/// Extends the ray from `origin` through `through` until it leaves the image
/// rectangle, returning the clipped segment.
///
/// Errors with [`GeometryError::DegenerateRay`] when the two points coincide
/// and [`GeometryError::NoIntersection`] when the ray never touches the
/// rectangle (possible only when `origin` is outside it).
pub fn extend_ray_to_border(
    origin: Point2,
    through: Point2,
    image_size: ImageSize,
) -> Result<RaySegment, GeometryError> {
    let dir = through - origin;
    if dir.norm() < COINCIDENT_EPS {
        return Err(GeometryError::DegenerateRay);
    }

    let (w, h) = (image_size.width_f(), image_size.height_f());
    let x_slab = slab_interval(origin.x, dir.x, 0.0, w);
    let y_slab = slab_interval(origin.y, dir.y, 0.0, h);
    let (s_entry, s_exit) = match (x_slab, y_slab) {
        (Some((x_lo, x_hi)), Some((y_lo, y_hi))) => (x_lo.max(y_lo), x_hi.min(y_hi)),
        _ => return Err(GeometryError::NoIntersection),
    };
    if s_entry > s_exit || s_exit < 0.0 {
        return Err(GeometryError::NoIntersection);
    }

    let raw = origin + dir.scale(s_exit);
    let border_end = Point2::new(raw.x.clamp(0.0, w), raw.y.clamp(0.0, h));
    Ok(RaySegment {
        origin,
        through,
        border_end,
        image_size,
    })
}

/// Parameter interval where `o + s*d` falls within `[lo, hi]`, or `None`
/// when the motion is parallel to the slab and starts outside it.
fn slab_interval(o: f64, d: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if d == 0.0 {
        if o < lo || o > hi {
            None
        } else {
            Some((f64::NEG_INFINITY, f64::INFINITY))
        }
    } else {
        let a = (lo - o) / d;
        let b = (hi - o) / d;
        Some(if a <= b { (a, b) } else { (b, a) })
    }
}

/// Euclidean distance from `p` to the closed segment `[origin, border_end]`.
pub fn point_segment_distance(p: Point2, seg: &RaySegment) -> f64 {
    let ab = seg.border_end - seg.origin;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return (p - seg.origin).norm();
    }
    let t = ((p - seg.origin).dot(ab) / len2).clamp(0.0, 1.0);
    let closest = seg.origin + ab.scale(t);
    (p - closest).norm()
}

/// Cosine of the angle between `tip - anchor` and `target - anchor`,
/// clamped to `[-1, 1]`.
pub fn alignment_cosine(anchor: Point2, tip: Point2, target: Point2) -> Result<f64, GeometryError> {
    let a = tip - anchor;
    let b = target - anchor;
    let (na, nb) = (a.norm(), b.norm());
    if na < DEGENERATE_NORM_EPS || nb < DEGENERATE_NORM_EPS {
        return Err(GeometryError::DegenerateVector);
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Angle in `[0, pi]` between the axis `axis_origin -> axis_through` and the
/// direction from `axis_origin` to `p`.
pub fn angular_deviation(
    axis_origin: Point2,
    axis_through: Point2,
    p: Point2,
) -> Result<f64, GeometryError> {
    alignment_cosine(axis_origin, axis_through, p).map(f64::acos)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn size(w: u32, h: u32) -> ImageSize {
        ImageSize::new(w, h).unwrap()
    }

    /// Independent oracle: intersect the ray with each of the four border
    /// lines, keep forward hits that land on the rectangle, take the
    /// farthest (the exit point).
    fn border_exit_oracle(origin: Point2, through: Point2, sz: ImageSize) -> Option<Point2> {
        let d = through - origin;
        let (w, h) = (sz.width_f(), sz.height_f());
        let mut best: Option<(f64, Point2)> = None;
        let mut consider = |s: f64| {
            if !s.is_finite() || s < 0.0 {
                return;
            }
            let p = origin + d.scale(s);
            let on_rect = p.x >= -1e-9 && p.x <= w + 1e-9 && p.y >= -1e-9 && p.y <= h + 1e-9;
            if on_rect && best.is_none_or(|(bs, _)| s > bs) {
                best = Some((s, p));
            }
        };
        if d.x != 0.0 {
            consider((0.0 - origin.x) / d.x);
            consider((w - origin.x) / d.x);
        }
        if d.y != 0.0 {
            consider((0.0 - origin.y) / d.y);
            consider((h - origin.y) / d.y);
        }
        best.map(|(_, p)| p)
    }

    #[test]
    fn ray_axis_aligned() {
        let seg = extend_ray_to_border(
            Point2::new(50.0, 50.0),
            Point2::new(100.0, 50.0),
            size(200, 200),
        )
        .unwrap();
        assert_eq!(seg.border_end, Point2::new(200.0, 50.0));
    }

    #[test]
    fn ray_diagonal_exits_bottom_edge_first() {
        let seg = extend_ray_to_border(
            Point2::new(0.0, 0.0),
            Point2::new(100.0, 100.0),
            size(200, 100),
        )
        .unwrap();
        assert_eq!(seg.border_end, Point2::new(100.0, 100.0));
    }

    #[test]
    fn ray_antidiagonal_exits_at_corner() {
        // Line y = 100 - x from (10, 90) heading up-right leaves at (100, 0).
        let origin = Point2::new(10.0, 90.0);
        let through = Point2::new(30.0, 70.0);
        let seg = extend_ray_to_border(origin, through, size(100, 100)).unwrap();
        let expected = border_exit_oracle(origin, through, size(100, 100)).unwrap();
        assert!((seg.border_end.x - expected.x).abs() < 1e-9);
        assert!((seg.border_end.y - expected.y).abs() < 1e-9);
        assert!((seg.border_end.x - 100.0).abs() < 1e-9);
        assert!(seg.border_end.y.abs() < 1e-9);
    }

    #[test]
    fn ray_through_outside_clips_to_exit() {
        // Fingertip annotated off-frame: the segment ends at the border.
        let seg = extend_ray_to_border(
            Point2::new(50.0, 50.0),
            Point2::new(250.0, 50.0),
            size(100, 100),
        )
        .unwrap();
        assert_eq!(seg.border_end, Point2::new(100.0, 50.0));
    }

    #[test]
    fn ray_origin_outside_entering_uses_exit() {
        let seg = extend_ray_to_border(
            Point2::new(-50.0, 50.0),
            Point2::new(10.0, 50.0),
            size(100, 100),
        )
        .unwrap();
        assert_eq!(seg.border_end, Point2::new(100.0, 50.0));
    }

    #[test]
    fn ray_origin_outside_missing_errors() {
        let err = extend_ray_to_border(
            Point2::new(-50.0, 50.0),
            Point2::new(-60.0, 50.0),
            size(100, 100),
        )
        .unwrap_err();
        assert_eq!(err, GeometryError::NoIntersection);

        // Slope too shallow to reach the rectangle before passing it.
        let err = extend_ray_to_border(
            Point2::new(-50.0, -50.0),
            Point2::new(-40.0, -49.0),
            size(100, 100),
        )
        .unwrap_err();
        assert_eq!(err, GeometryError::NoIntersection);
    }

    #[test]
    fn ray_coincident_points_are_degenerate() {
        let p = Point2::new(5.0, 5.0);
        let err = extend_ray_to_border(p, Point2::new(5.0, 5.0 + 1e-10), size(10, 10)).unwrap_err();
        assert_eq!(err, GeometryError::DegenerateRay);
    }

    #[test]
    fn ray_border_end_invariant_to_through_choice() {
        let origin = Point2::new(13.0, 27.0);
        let sz = size(320, 240);
        let base = extend_ray_to_border(origin, Point2::new(200.0, 150.0), sz).unwrap();
        for t in [0.05, 0.3, 0.9, 1.7] {
            let dir = Point2::new(200.0, 150.0) - origin;
            let moved = extend_ray_to_border(origin, origin + dir.scale(t), sz).unwrap();
            assert!((moved.border_end.x - base.border_end.x).abs() < 1e-6);
            assert!((moved.border_end.y - base.border_end.y).abs() < 1e-6);
        }
    }

    #[test]
    fn segment_distance_on_segment_is_zero() {
        let seg = extend_ray_to_border(
            Point2::new(0.0, 0.0),
            Point2::new(50.0, 0.0),
            size(100, 100),
        )
        .unwrap();
        assert_eq!(point_segment_distance(Point2::new(37.0, 0.0), &seg), 0.0);
    }

    #[test]
    fn segment_distance_perpendicular_foot_inside() {
        let seg = extend_ray_to_border(
            Point2::new(0.0, 0.0),
            Point2::new(50.0, 0.0),
            size(100, 100),
        )
        .unwrap();
        assert_eq!(point_segment_distance(Point2::new(0.0, 10.0), &seg), 10.0);
    }

    #[test]
    fn segment_distance_clamps_to_endpoint() {
        // Closest point is the (0, 0) end; 3-4-5 triangle gives 50.
        let seg = extend_ray_to_border(
            Point2::new(0.0, 0.0),
            Point2::new(50.0, 0.0),
            size(100, 100),
        )
        .unwrap();
        assert_eq!(point_segment_distance(Point2::new(-30.0, 40.0), &seg), 50.0);
    }

    #[test]
    fn cosine_examples() {
        let o = Point2::new(0.0, 0.0);
        let tip = Point2::new(1.0, 0.0);
        assert_eq!(
            alignment_cosine(o, tip, Point2::new(2.0, 0.0)).unwrap(),
            1.0
        );
        assert_eq!(
            alignment_cosine(o, tip, Point2::new(0.0, 1.0)).unwrap(),
            0.0
        );
        // dot = -3, |a| = 1, |b| = 5.
        let c = alignment_cosine(o, tip, Point2::new(-3.0, 4.0)).unwrap();
        assert!((c - (-0.6)).abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_degenerate_vectors() {
        let o = Point2::new(0.0, 0.0);
        let err = alignment_cosine(o, o, Point2::new(1.0, 1.0)).unwrap_err();
        assert_eq!(err, GeometryError::DegenerateVector);
        let err = alignment_cosine(o, Point2::new(1.0, 0.0), o).unwrap_err();
        assert_eq!(err, GeometryError::DegenerateVector);
    }

    #[test]
    fn deviation_examples() {
        let o = Point2::new(0.0, 0.0);
        let axis = Point2::new(1.0, 0.0);
        assert_eq!(
            angular_deviation(o, axis, Point2::new(5.0, 0.0)).unwrap(),
            0.0
        );
        let quarter = angular_deviation(o, axis, Point2::new(0.0, 3.0)).unwrap();
        assert!((quarter - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let eighth = angular_deviation(o, axis, Point2::new(1.0, 1.0)).unwrap();
        assert!((eighth - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn keypoints_reject_degenerate_lines() {
        let p = Point2::new(10.0, 10.0);
        let q = Point2::new(20.0, 20.0);
        assert!(GesturalKeypoints::new(p, p, q, None).is_err());
        assert!(GesturalKeypoints::new(p, q, q, None).is_err());
        assert!(GesturalKeypoints::new(p, q, p, None).is_ok());
    }
}
