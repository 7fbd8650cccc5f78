use std::path::PathBuf;

use clap::Args;
use instmatte::{sparsity_audit_planes, AlphaPlane, SparsityAudit};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::layout::{self, ALPHAS, LAYERS};
use crate::raster;

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    /// Scene root with alphas/<name>/ (and optionally layers/<name>/)
    pub root: PathBuf,
    /// CSV output [default: <root>/audit.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &AuditArgs) -> CliResult<String> {
    let alphas = args.root.join(ALPHAS);
    layout::require_dir(&alphas)?;
    let names = layout::subdirs(&alphas)?;
    let audits: Vec<SparsityAudit> = names
        .par_iter()
        .map(|name| {
            let set = layout::read_instances(&alphas.join(name))?;
            let stored = args.root.join(LAYERS).join(name).join("background_alpha.png");
            let background = if stored.is_file() {
                raster::read_alpha(&stored)?
            } else {
                let (w, h) = set
                    .dims()
                    .ok_or_else(|| CliError::Data(format!("{name}: no instances and no background alpha")))?;
                let mut rest = vec![1.0; w * h];
                for plane in set.planes() {
                    rest.iter_mut().zip(plane.values()).for_each(|(r, v)| *r -= v);
                }
                AlphaPlane::from_clamped(w, h, rest)?
            };
            Ok(sparsity_audit_planes(&background, set.planes()))
        })
        .collect::<CliResult<_>>()?;
    let total = SparsityAudit::combine(&audits);

    let out = args.out.clone().unwrap_or_else(|| args.root.join("audit.csv"));
    let width = total.histogram.len();
    let mut w = csv::Writer::from_path(&out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let mut header = vec!["scene".to_string(), "pixels".to_string()];
    header.extend((0..width).map(|k| format!("count_{k}")));
    header.extend(["fraction_above_2".to_string(), "fraction_above_3".to_string()]);
    let csv_err = |e: csv::Error| CliError::Data(format!("{}: {e}", out.display()));
    w.write_record(&header).map_err(csv_err)?;
    for (name, a) in names.iter().map(String::as_str).zip(&audits).chain(std::iter::once(("all", &total))) {
        let mut row = vec![name.to_string(), a.pixels.to_string()];
        row.extend((0..width).map(|k| a.histogram.get(k).copied().unwrap_or(0).to_string()));
        row.extend([a.fraction_above_2.to_string(), a.fraction_above_3.to_string()]);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(&out, e))?;

    Ok(format!(
        "{} scene(s), {} pixels: {:.4}% above 2 layers, {:.4}% above 3, max {}\n",
        names.len(),
        total.pixels,
        100.0 * total.fraction_above_2,
        100.0 * total.fraction_above_3,
        total.max_count()
    ))
}
