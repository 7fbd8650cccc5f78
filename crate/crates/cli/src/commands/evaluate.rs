use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use instmatte::{evaluate_image, summarize, ImageReport, ImqConfig};
use rayon::prelude::*;

use super::prefer_sub;
use crate::error::{CliError, CliResult};
use crate::layout::{self, ALPHAS};
use crate::report::{self, Record, SCHEMA_VERSION};
use crate::settings::{Common, FileConfig, MetricArgs};

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Prediction root (mirrors the ground-truth alphas tree)
    pub pred_root: PathBuf,
    /// Ground-truth dataset root
    pub gt_root: PathBuf,
    /// Report file (line-delimited JSON)
    #[arg(long, default_value = "report.jsonl")]
    pub out: PathBuf,
    #[command(flatten)]
    pub metric: MetricArgs,
}

pub fn run(args: &EvaluateArgs, common: &Common, file: &FileConfig) -> CliResult<String> {
    let config = args.metric.resolve(file)?;
    let gt_dir = prefer_sub(&args.gt_root, ALPHAS);
    let pred_dir = prefer_sub(&args.pred_root, ALPHAS);
    layout::require_dir(&gt_dir)?;
    layout::require_dir(&pred_dir)?;
    let gt_names = layout::subdirs(&gt_dir)?;
    let pred_names: BTreeSet<String> = layout::subdirs(&pred_dir)?.into_iter().collect();
    if let Some(orphan) = pred_names.iter().find(|n| !gt_names.contains(n)) {
        return Err(CliError::Data(format!("prediction {orphan} has no ground truth")));
    }
    if let Some(missing) = gt_names.iter().find(|n| !pred_names.contains(*n)) {
        return Err(CliError::Data(format!("no predictions for image {missing}")));
    }
    if gt_names.is_empty() {
        return Err(CliError::Data(format!("{}: no images", gt_dir.display())));
    }

    let outcomes: Vec<Result<ImageReport, String>> = gt_names
        .par_iter()
        .map(|name| evaluate_one(&pred_dir.join(name), &gt_dir.join(name), &config))
        .collect();

    let mut records = vec![Record::Header {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        seed: common.seed,
    }];
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for (name, outcome) in gt_names.iter().zip(outcomes) {
        match outcome {
            Ok(r) => {
                records.push(Record::Image {
                    name: name.clone(),
                    matching: r.matching.clone(),
                    scores: r.scores.clone(),
                });
                reports.push(r);
            }
            Err(message) => {
                log::warn!("skipping {name}: {message}");
                records.push(Record::Error {
                    name: name.clone(),
                    message,
                });
                skipped.push(name.clone());
            }
        }
    }
    if reports.is_empty() {
        report::write_lines(&args.out, &records)?;
        return Err(CliError::Data("every image failed to load".into()));
    }
    let summary = summarize(&reports, &config)?;
    let text = report::render_summary(&summary, &skipped);
    records.push(Record::Summary { summary, skipped });
    report::write_lines(&args.out, &records)?;
    Ok(text)
}

fn evaluate_one(pred: &std::path::Path, gt: &std::path::Path, config: &ImqConfig) -> Result<ImageReport, String> {
    let gts = layout::read_instances(gt).map_err(|e| e.to_string())?;
    let preds = layout::read_instances(pred).map_err(|e| e.to_string())?;
    evaluate_image(&preds, &gts, config).map_err(|e| e.to_string())
}
