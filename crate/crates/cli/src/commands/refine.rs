use std::path::PathBuf;

use clap::{Args, ValueEnum};
use instmatte::refinement::{DEFAULT_PATCH, DEFAULT_THRESHOLD};
use instmatte::{error_map, refine_patches, select_patches, Schedule, TriMatte, TriStack};
use rayon::prelude::*;
use serde::Serialize;

use super::prefer_sub;
use super::trimask::{read_triples, write_triple};
use crate::error::{CliError, CliResult};
use crate::layout;
use crate::raster;
use crate::report::{self, SCHEMA_VERSION};
use crate::settings::{Common, FileConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Parallel,
    Cycle,
}

#[derive(Debug, Clone, Args)]
pub struct RefineArgs {
    /// Tri-matte root: <name>/instance_XX_{t,r,b}.png (or a root with trimattes/)
    pub root: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Parallel)]
    pub mode: Mode,
    /// 1-based, comma-separated instance order for cycle mode
    #[arg(long)]
    pub order: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    /// Error-map level above which a pixel seeds a patch [default: 0.01]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Patch side in pixels [default: 128]
    #[arg(long)]
    pub patch: Option<usize>,
}

#[derive(Debug, Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum RefineRecord {
    Header {
        schema_version: u32,
        mode: Mode,
        order: Option<Vec<usize>>,
        rounds: usize,
        threshold: f64,
        patch: usize,
    },
    Image(ImageStats),
    Summary {
        images: usize,
        patches: usize,
        pre_mean_error: f64,
        post_mean_error: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
struct ImageStats {
    name: String,
    instances: usize,
    patches: usize,
    covered_pixels: usize,
    pre_mean_error: f64,
    post_mean_error: f64,
    pre_max_error: f64,
    post_max_error: f64,
}

/// Parses a 1-based order such as `2,1,3` into 0-based indices.
pub fn parse_order(text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|p| match p.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(k - 1),
            _ => Err(CliError::Usage(format!("bad --order entry '{p}' (expected 1-based indices)"))),
        })
        .collect()
}

pub fn run(args: &RefineArgs, common: &Common, file: &FileConfig) -> CliResult<String> {
    let threshold = args.threshold.or(file.threshold).unwrap_or(DEFAULT_THRESHOLD);
    let patch = args.patch.or(file.patch).unwrap_or(DEFAULT_PATCH);
    if args.rounds == 0 {
        return Err(CliError::Usage("--rounds must be at least 1".into()));
    }
    let order = args.order.as_deref().map(parse_order).transpose()?;
    if args.mode == Mode::Parallel && order.is_some() {
        log::warn!("--order is ignored in parallel mode");
    }
    let root = prefer_sub(&args.root, "trimattes");
    layout::require_dir(&root)?;
    let names = layout::subdirs(&root)?;
    let stacks: Vec<(String, TriStack)> = names
        .par_iter()
        .map(|name| {
            let dir = root.join(name);
            let mattes = read_triples(&dir)?
                .iter()
                .map(|[t, r, b]| {
                    TriMatte::new(raster::read_alpha(t)?, raster::read_alpha(r)?, raster::read_alpha(b)?)
                        .map_err(|e| CliError::from(e).context(name))
                })
                .collect::<CliResult<Vec<_>>>()?;
            if mattes.is_empty() {
                return Err(CliError::Data(format!("{}: no tri-matte triples", dir.display())));
            }
            Ok((name.clone(), TriStack::from_trimattes(&mattes)?))
        })
        .collect::<CliResult<_>>()?;

    let mut schedules = Vec::with_capacity(stacks.len());
    for (name, stack) in &stacks {
        let schedule = match args.mode {
            Mode::Parallel => Schedule::Parallel { rounds: args.rounds },
            Mode::Cycle => match (&order, stack.len()) {
                (None, 1) => Schedule::Cycle {
                    order: vec![0],
                    rounds: args.rounds,
                },
                (None, n) => {
                    return Err(CliError::Usage(format!(
                        "cycle mode needs --order for {name} with {n} instances"
                    )));
                }
                (Some(o), n) if o.len() != n => {
                    return Err(CliError::Usage(format!(
                        "--order lists {} instances but {name} has {n}",
                        o.len()
                    )));
                }
                (Some(o), _) => Schedule::Cycle {
                    order: o.clone(),
                    rounds: args.rounds,
                },
            },
        };
        schedules.push(schedule);
    }

    let stats: Vec<ImageStats> = stacks
        .par_iter()
        .zip(&schedules)
        .map(|((name, stack), schedule)| {
            let before = error_map(stack);
            let patches = select_patches(&before, threshold, patch)?;
            let refined = refine_patches(stack, &patches, schedule).map_err(|e| CliError::from(e).context(name))?;
            let after = error_map(&refined);
            let dir = args.out.join(name);
            for (k, m) in refined.to_trimattes()?.iter().enumerate() {
                write_triple(&dir, k, m.planes(), common.bit_depth)?;
            }
            let (w, h) = stack.dims();
            Ok(ImageStats {
                name: name.clone(),
                instances: stack.len(),
                patches: patches.len(),
                covered_pixels: patches.covered_pixels(w, h).iter().filter(|c| **c).count(),
                pre_mean_error: before.mean(),
                post_mean_error: after.mean(),
                pre_max_error: before.max(),
                post_max_error: after.max(),
            })
        })
        .collect::<CliResult<_>>()?;

    let n = stats.len().max(1) as f64;
    let total_patches = stats.iter().map(|s| s.patches).sum();
    let pre = stats.iter().map(|s| s.pre_mean_error).sum::<f64>() / n;
    let post = stats.iter().map(|s| s.post_mean_error).sum::<f64>() / n;
    let mut records = vec![RefineRecord::Header {
        schema_version: SCHEMA_VERSION,
        mode: args.mode,
        order: order.map(|o| o.iter().map(|k| k + 1).collect()),
        rounds: args.rounds,
        threshold,
        patch,
    }];
    records.extend(stats.iter().cloned().map(RefineRecord::Image));
    records.push(RefineRecord::Summary {
        images: stats.len(),
        patches: total_patches,
        pre_mean_error: pre,
        post_mean_error: post,
    });
    report::write_lines(&args.out.join("refine_report.jsonl"), &records)?;
    Ok(format!(
        "refined {} image(s), {} patch(es), mean error {:.6} -> {:.6}\n",
        stats.len(),
        total_patches,
        pre,
        post
    ))
}
