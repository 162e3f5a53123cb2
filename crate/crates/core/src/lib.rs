//! Algorithmic core for embodied reference understanding pipelines.
//!
//! A person in an image points at an object and describes it; upstream
//! models propose boxes. This crate implements everything around those
//! models that is pure geometry and arithmetic:
//!
//! * [`geometry`] - pointing rays, border clipping, segment distances, and
//!   the alignment cosine between a pointing direction and a box center;
//! * [`heatmap`] - Gaussian ray and conic pointing priors as rasters;
//! * [`losses`] - the grounding loss terms with verified closed-form
//!   gradients;
//! * [`ensemble`] - the five strategies for fusing two pointing models'
//!   candidate boxes, including the size-adaptive CAPE rule;
//! * [`metrics`] - IoU-threshold accuracy over object-size buckets, center
//!   distance, and CLIP-score aggregation;
//! * [`io`] / [`config`] - the file formats and run configuration gluing
//!   the pieces into a pipeline.
//!
//! Embeddings are always supplied precomputed; nothing here runs a neural
//! network.

pub mod bbox;
pub mod config;
pub mod ensemble;
pub mod geometry;
pub mod heatmap;
pub mod io;
pub mod losses;
pub mod metrics;

pub use bbox::BBox;
pub use config::RunConfig;
pub use ensemble::{Candidate, EnsembleConfig, ModelSource, QueryContext, Strategy};
pub use geometry::{GesturalKeypoints, ImageSize, Point2};
pub use heatmap::{HeatmapSpec, PointingLine, RasterHeatmap};
pub use metrics::{EvalRecord, EvalReport, SizeBucket};
