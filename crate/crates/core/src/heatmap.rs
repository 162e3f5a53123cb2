//! Rasterized pointing priors.
//!
//! Two styles: a Gaussian ray heatmap whose value decays with the distance to
//! the pointing segment, and a binary conic heatmap marking the forward cone
//! around the pointing axis. Either style draws its line from the eye
//! (head-to-fingertip) or the wrist (wrist-to-fingertip), extended through
//! the fingertip to the image border.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    self, angular_deviation, extend_ray_to_border, point_segment_distance, GeometryError,
    GesturalKeypoints, ImageSize, Point2,
};

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("heatmap dimensions differ: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch {
        a_width: u32,
        a_height: u32,
        b_width: u32,
        b_height: u32,
    },
    #[error("invalid heatmap parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("failed to write heatmap image: {0}")]
    Encode(#[from] image::ImageError),
    #[error("loaded image is not 8-bit grayscale")]
    NotGrayscale,
}

/// Which pointing line the heatmap encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointingLine {
    HeadToFingertip,
    WristToFingertip,
}

impl PointingLine {
    /// Start point of the line for the given keypoints; the fingertip is
    /// always the through point.
    pub fn start(&self, kp: &GesturalKeypoints) -> Point2 {
        match self {
            PointingLine::HeadToFingertip => kp.eye,
            PointingLine::WristToFingertip => kp.wrist,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            PointingLine::HeadToFingertip => "h2f",
            PointingLine::WristToFingertip => "w2f",
        }
    }
}

impl fmt::Display for PointingLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Rendering style with its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapStyle {
    /// `exp(-d^2 / (2 sigma^2))` of the distance `d` to the pointing segment.
    GaussianRay { sigma: f64 },
    /// 1 inside the forward cone of the given half-angle (radians), else 0.
    Conic { half_angle: f64 },
}

impl HeatmapStyle {
    pub fn gaussian(sigma: f64) -> Result<Self, HeatmapError> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(HeatmapError::InvalidParameter("sigma must be positive"));
        }
        Ok(HeatmapStyle::GaussianRay { sigma })
    }

    pub fn conic(half_angle: f64) -> Result<Self, HeatmapError> {
        if !(half_angle > 0.0 && half_angle < std::f64::consts::FRAC_PI_2) {
            return Err(HeatmapError::InvalidParameter(
                "cone half-angle must lie in (0, pi/2)",
            ));
        }
        Ok(HeatmapStyle::Conic { half_angle })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            HeatmapStyle::GaussianRay { .. } => "gaussian",
            HeatmapStyle::Conic { .. } => "conic",
        }
    }
}

/// Full heatmap recipe: style plus the line it rasterizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSpec {
    pub style: HeatmapStyle,
    pub line: PointingLine,
}

impl HeatmapSpec {
    pub fn render(
        &self,
        kp: &GesturalKeypoints,
        image_size: ImageSize,
    ) -> Result<RasterHeatmap, HeatmapError> {
        match self.style {
            HeatmapStyle::GaussianRay { sigma } => {
                gaussian_ray_heatmap(kp, self.line, sigma, image_size)
            }
            HeatmapStyle::Conic { half_angle } => {
                conic_heatmap(kp, self.line, half_angle, image_size)
            }
        }
    }
}

/// Single-channel raster of values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterHeatmap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl RasterHeatmap {
    /// Builds a raster by sampling `f` at every pixel center `(i+0.5, j+0.5)`.
    /// Values are clamped into `[0, 1]`.
    pub fn from_fn(size: ImageSize, mut f: impl FnMut(Point2) -> f64) -> Self {
        let (w, h) = (size.width, size.height);
        let mut values = Vec::with_capacity(w as usize * h as usize);
        for j in 0..h {
            for i in 0..w {
                let center = Point2::new(f64::from(i) + 0.5, f64::from(j) + 0.5);
                values.push(f(center).clamp(0.0, 1.0));
            }
        }
        Self {
            width: w,
            height: h,
            values,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn size(&self) -> ImageSize {
        ImageSize::new(self.width, self.height).expect("raster dimensions are positive")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at pixel `(i, j)` (column, row).
    pub fn get(&self, i: u32, j: u32) -> f64 {
        self.values[j as usize * self.width as usize + i as usize]
    }

    /// Center coordinates of pixel `(i, j)`.
    pub fn pixel_center(i: u32, j: u32) -> Point2 {
        Point2::new(f64::from(i) + 0.5, f64::from(j) + 0.5)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Gaussian ray heatmap: `value(p) = exp(-d(p, seg)^2 / (2 sigma^2))` where
/// `seg` runs from the line's start point through the fingertip to the image
/// border. The distance is to the closed segment, so activation is capped at
/// both ends; there is no truncation radius.
pub fn gaussian_ray_heatmap(
    kp: &GesturalKeypoints,
    line: PointingLine,
    sigma: f64,
    image_size: ImageSize,
) -> Result<RasterHeatmap, HeatmapError> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(HeatmapError::InvalidParameter("sigma must be positive"));
    }
    let seg = extend_ray_to_border(line.start(kp), kp.fingertip, image_size)?;
    let denom = 2.0 * sigma * sigma;
    Ok(RasterHeatmap::from_fn(image_size, |center| {
        let d = point_segment_distance(center, &seg);
        (-d * d / denom).exp()
    }))
}

/// Binary conic heatmap: 1 when the pixel center lies in the forward
/// half-plane of the start point and within `half_angle` of the pointing
/// axis, else 0. The apex pixel itself counts as inside.
pub fn conic_heatmap(
    kp: &GesturalKeypoints,
    line: PointingLine,
    half_angle: f64,
    image_size: ImageSize,
) -> Result<RasterHeatmap, HeatmapError> {
    if !(half_angle > 0.0 && half_angle < std::f64::consts::FRAC_PI_2) {
        return Err(HeatmapError::InvalidParameter(
            "cone half-angle must lie in (0, pi/2)",
        ));
    }
    let start = line.start(kp);
    // Validates the pointing line even though only the direction is used.
    let seg = extend_ray_to_border(start, kp.fingertip, image_size)?;
    let axis = kp.fingertip - seg.origin;
    Ok(RasterHeatmap::from_fn(image_size, |center| {
        if (center - start).norm() < geometry::COINCIDENT_EPS {
            return 1.0;
        }
        let forward = (center - start).dot(axis) >= 0.0;
        let dev = angular_deviation(start, kp.fingertip, center)
            .expect("center differs from start by the check above");
        if forward && dev <= half_angle {
            1.0
        } else {
            0.0
        }
    }))
}

/// Elementwise `min(a + b, 1)`.
pub fn merge_heatmaps(a: &RasterHeatmap, b: &RasterHeatmap) -> Result<RasterHeatmap, HeatmapError> {
    if a.width != b.width || a.height != b.height {
        return Err(HeatmapError::DimensionMismatch {
            a_width: a.width,
            a_height: a.height,
            b_width: b.width,
            b_height: b.height,
        });
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x + y).min(1.0))
        .collect();
    Ok(RasterHeatmap {
        width: a.width,
        height: a.height,
        values,
    })
}

/// Writes the raster as an 8-bit grayscale image, `v -> round(v * 255)`.
pub fn render_heatmap(h: &RasterHeatmap, path: &Path) -> Result<(), HeatmapError> {
    let pixels: Vec<u8> = h.values.iter().map(|v| (v * 255.0).round() as u8).collect();
    let img = image::GrayImage::from_raw(h.width, h.height, pixels)
        .expect("pixel buffer matches declared dimensions");
    img.save(path)?;
    Ok(())
}

/// Reads an 8-bit grayscale image back into a raster, `g -> g / 255`.
pub fn load_heatmap(path: &Path) -> Result<RasterHeatmap, HeatmapError> {
    let img = image::open(path)?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        _ => return Err(HeatmapError::NotGrayscale),
    };
    let (width, height) = gray.dimensions();
    let values = gray
        .into_raw()
        .iter()
        .map(|&g| f64::from(g) / 255.0)
        .collect();
    Ok(RasterHeatmap {
        width,
        height,
        values,
    })
}
