use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use eru_core::config::{HeatmapStyleKind, LineSelection};
use eru_core::geometry::GeometryError;
use eru_core::heatmap::{self, HeatmapError, HeatmapSpec, PointingLine, RasterHeatmap};
use eru_core::io::{load_annotations, AnnotationRecord};

#[derive(clap::Args)]
pub struct Args {
    /// Annotation file (line-delimited JSON)
    #[arg(long)]
    annotations: PathBuf,
    /// Directory for the rendered images
    #[arg(long)]
    out_dir: PathBuf,
    /// Run configuration (JSON); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured style (gaussian | conic)
    #[arg(long)]
    style: Option<HeatmapStyleKind>,
    /// Override the configured lines (h2f | w2f | both | merged)
    #[arg(long)]
    line: Option<LineSelection>,
    /// Override the Gaussian sigma (pixels of the generated raster)
    #[arg(long)]
    sigma: Option<f64>,
    /// Override the conic half-angle (degrees)
    #[arg(long)]
    half_angle_deg: Option<f64>,
}

pub fn run(args: Args) -> Result<()> {
    let mut config = super::load_config(args.config.as_ref())?;
    if let Some(style) = args.style {
        config.heatmap.style = style;
    }
    if let Some(line) = args.line {
        config.heatmap.line = line;
    }
    if let Some(sigma) = args.sigma {
        config.heatmap.sigma = sigma;
    }
    if let Some(half_angle) = args.half_angle_deg {
        config.heatmap.cone_half_angle_deg = half_angle;
    }
    config.validate()?;

    let file = load_annotations(&args.annotations)?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let style = config.heatmap.style_for()?;
    let style_tag = style.tag();
    let mut written = 0usize;
    let mut skipped = file.skipped.len();

    for record in &file.records {
        let rasters: Vec<(String, Option<RasterHeatmap>)> = match config.heatmap.line {
            LineSelection::H2f => vec![(
                PointingLine::HeadToFingertip.tag().into(),
                render(record, PointingLine::HeadToFingertip, style)?,
            )],
            LineSelection::W2f => vec![(
                PointingLine::WristToFingertip.tag().into(),
                render(record, PointingLine::WristToFingertip, style)?,
            )],
            LineSelection::Both => vec![
                (
                    PointingLine::HeadToFingertip.tag().into(),
                    render(record, PointingLine::HeadToFingertip, style)?,
                ),
                (
                    PointingLine::WristToFingertip.tag().into(),
                    render(record, PointingLine::WristToFingertip, style)?,
                ),
            ],
            LineSelection::Merged => {
                let h2f = render(record, PointingLine::HeadToFingertip, style)?;
                let w2f = render(record, PointingLine::WristToFingertip, style)?;
                let merged = match (h2f, w2f) {
                    (Some(a), Some(b)) => Some(heatmap::merge_heatmaps(&a, &b)?),
                    _ => None,
                };
                vec![("merged".into(), merged)]
            }
        };

        for (line_tag, raster) in rasters {
            match raster {
                Some(raster) => {
                    let name = format!("{}.{line_tag}.{style_tag}.png", record.image_id);
                    let path = args.out_dir.join(name);
                    heatmap::render_heatmap(&raster, &path)
                        .with_context(|| format!("writing {}", path.display()))?;
                    written += 1;
                }
                None => skipped += 1,
            }
        }
    }

    println!(
        "wrote {written} heatmaps to {} ({skipped} skipped)",
        args.out_dir.display()
    );
    Ok(())
}

/// Renders one line, treating rays that never enter the image as a skip
/// rather than a failure.
fn render(
    record: &AnnotationRecord,
    line: PointingLine,
    style: eru_core::heatmap::HeatmapStyle,
) -> Result<Option<RasterHeatmap>> {
    let spec = HeatmapSpec { style, line };
    match spec.render(&record.keypoints, record.image_size) {
        Ok(raster) => Ok(Some(raster)),
        Err(HeatmapError::Geometry(GeometryError::NoIntersection)) => {
            log::warn!(
                "skipping {}/{}: pointing ray never enters the image",
                record.image_id,
                line
            );
            Ok(None)
        }
        Err(other) => Err(other.into()),
    }
}
