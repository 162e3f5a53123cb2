use std::path::PathBuf;

use anyhow::{bail, Result};
use eru_core::ensemble::Strategy;
use eru_core::io::{
    attach_embeddings, load_predictions, save_final, EmbeddingStore, FinalPrediction,
};
use eru_core::{ImageSize, QueryContext};

#[derive(clap::Args)]
pub struct Args {
    /// Prediction file with both models' candidates (line-delimited JSON)
    #[arg(long)]
    predictions: PathBuf,
    /// Embedding sidecar with candidate and text vectors
    #[arg(long)]
    embeddings: PathBuf,
    /// Fusion strategy: confidence | clip-top1 | clip-top2 | clip-fusion | cape
    #[arg(long)]
    strategy: Strategy,
    /// Output file for the final predictions
    #[arg(long)]
    out: PathBuf,
    /// Run configuration (JSON); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<()> {
    let config = super::load_config(args.config.as_ref())?;
    config.validate()?;

    let mut predictions = load_predictions(&args.predictions)?;
    let store = EmbeddingStore::read(&args.embeddings)?;
    attach_embeddings(&mut predictions, &store);

    let mut finals = Vec::new();
    let mut skipped = 0usize;
    for (image_id, per_model) in &predictions.by_image {
        let (Some(h2f), Some(w2f)) = (&per_model.h2f, &per_model.w2f) else {
            log::warn!("skipping `{image_id}`: predictions from one model only");
            skipped += 1;
            continue;
        };
        let Some(text_embedding) = store.get_text(image_id) else {
            log::warn!("skipping `{image_id}`: no text embedding in the sidecar");
            skipped += 1;
            continue;
        };
        // Boxes are normalized, so the strategies never consult the image
        // size; records that do not carry one get a neutral value.
        let ctx = QueryContext {
            text_embedding: text_embedding.to_vec(),
            image_size: ImageSize::new(1, 1).expect("static size"),
        };
        let choice = args
            .strategy
            .run(&h2f.candidates, &w2f.candidates, &ctx, &config.ensemble)?;
        finals.push(FinalPrediction {
            image_id: image_id.clone(),
            bbox: choice.bbox,
            confidence: choice.confidence,
            model: choice.source,
            rank: choice.rank,
        });
    }

    if finals.is_empty() {
        bail!("no image had predictions from both models plus a text embedding");
    }
    save_final(args.strategy.name(), &finals, &args.out)?;
    println!(
        "{}: wrote {} final predictions to {} ({skipped} skipped)",
        args.strategy,
        finals.len(),
        args.out.display()
    );
    Ok(())
}
