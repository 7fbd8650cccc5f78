//! Line-delimited JSON reports.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use instmatte::{summarize, DatasetSummary, ImageReport, ImqConfig, ImqScore, MatchResult};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// One line of an `evaluate` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum Record {
    Header {
        schema_version: u32,
        tool_version: String,
        config: ImqConfig,
        seed: u64,
    },
    Image {
        name: String,
        matching: MatchResult,
        scores: Vec<ImqScore>,
    },
    Error {
        name: String,
        message: String,
    },
    Summary {
        summary: DatasetSummary,
        skipped: Vec<String>,
    },
}

pub fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| CliError::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_records(path: &Path) -> CliResult<Vec<Record>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Recomputes the dataset summary from the per-image rows of a report.
pub fn recompute_summary(records: &[Record]) -> CliResult<DatasetSummary> {
    let config = records
        .iter()
        .find_map(|r| match r {
            Record::Header { config, .. } => Some(config.clone()),
            _ => None,
        })
        .ok_or_else(|| CliError::Data("report has no header".into()))?;
    let images: Vec<ImageReport> = records
        .iter()
        .filter_map(|r| match r {
            Record::Image { matching, scores, .. } => Some(ImageReport {
                matching: matching.clone(),
                scores: scores.clone(),
            }),
            _ => None,
        })
        .collect();
    Ok(summarize(&images, &config)?)
}

/// Human-readable summary table.
pub fn render_summary(summary: &DatasetSummary, skipped: &[String]) -> String {
    let c = summary.counts;
    let mut s = format!(
        "{} images ({} aggregation), tp {} fp {} fn {}\n",
        summary.images, summary.aggregation, c.tp, c.fp, c.fn_
    );
    s.push_str("kind        IMQ       MQ       RQ\n");
    for k in &summary.kinds {
        s.push_str(&format!("{:<6} {:>8.2} {:>8.2} {:>8.2}\n", k.kind.as_str(), k.imq, k.mq, k.rq));
    }
    if !skipped.is_empty() {
        s.push_str(&format!("skipped {} image(s): {}\n", skipped.len(), skipped.join(", ")));
    }
    s
}
