use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use eru_core::io::{load_annotations, load_final, EmbeddingRole, EmbeddingStore};
use eru_core::metrics::{build_report, EvalRecord};

#[derive(clap::Args)]
pub struct Args {
    /// Annotation file with ground truth (line-delimited JSON)
    #[arg(long)]
    annotations: PathBuf,
    /// Final predictions produced by `eru ensemble`
    #[arg(long = "final")]
    final_predictions: PathBuf,
    /// Embedding sidecar enabling the CLIP-score metric
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Directory for report.txt and report.json
    #[arg(long)]
    out_dir: PathBuf,
    /// Run configuration (JSON); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<()> {
    let config = super::load_config(args.config.as_ref())?;
    config.validate()?;

    let annotations = load_annotations(&args.annotations)?;
    let final_file = load_final(&args.final_predictions)?;
    let store = args
        .embeddings
        .as_ref()
        .map(|p| EmbeddingStore::read(p))
        .transpose()?;

    let by_image: BTreeMap<_, _> = final_file
        .predictions
        .iter()
        .map(|p| (p.image_id.as_str(), p))
        .collect();

    let mut records = Vec::new();
    let mut unmatched = 0usize;
    for ann in &annotations.records {
        let Some(pred) = by_image.get(ann.image_id.as_str()) else {
            log::warn!("no final prediction for `{}`", ann.image_id);
            unmatched += 1;
            continue;
        };
        let (pred_embedding, text_embedding) = match &store {
            Some(store) => (
                store
                    .get(
                        &ann.image_id,
                        EmbeddingRole::from(pred.model),
                        pred.rank as u16,
                    )
                    .map(<[f64]>::to_vec),
                store.get_text(&ann.image_id).map(<[f64]>::to_vec),
            ),
            None => (None, None),
        };
        records.push(EvalRecord {
            image_id: ann.image_id.clone(),
            gt_box: ann.gt_box,
            pred_box: pred.bbox,
            pred_embedding,
            text_embedding,
        });
    }
    if records.is_empty() {
        bail!("no annotation had a matching final prediction");
    }

    let report = build_report(&records, &config.iou_thresholds, &config.size_buckets);
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let json_path = args.out_dir.join("report.json");
    let text_path = args.out_dir.join("report.txt");
    fs::write(&json_path, report.to_json())
        .with_context(|| format!("writing {}", json_path.display()))?;
    fs::write(&text_path, report.to_text())
        .with_context(|| format!("writing {}", text_path.display()))?;

    print!("{}", report.to_text());
    println!(
        "coverage: {} evaluated, {} annotations without predictions, {} skipped at load",
        records.len(),
        unmatched,
        annotations.skipped.len()
    );
    println!(
        "reports: {} and {}",
        json_path.display(),
        text_path.display()
    );
    Ok(())
}
