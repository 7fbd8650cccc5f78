use std::path::{Path, PathBuf};

use clap::Args;
use instmatte::{
    augment_trimask, partial_band, quantize, trimask_from_masks, trimatte_gt, AugmentOptions, BinaryMask,
    InstanceMatteSet, MaskSource, TriMask,
};
use rayon::prelude::*;

use super::prefer_sub;
use crate::error::{CliError, CliResult};
use crate::layout::{self, ALPHAS};
use crate::raster::{self, BitDepth};
use crate::settings::{Common, FileConfig};

pub const DEFAULT_BAND_K: usize = 35;

#[derive(Debug, Clone, Args)]
pub struct TrimaskArgs {
    /// Dataset root with alphas/<name>/instance_XX.png
    pub root: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Only build the triple for this 0-based instance index
    #[arg(long)]
    pub target: Option<usize>,
    /// Apply seeded tri-mask augmentation
    #[arg(long)]
    pub augment: bool,
    /// Half-width of the partial-supervision band [default: 35]
    #[arg(long = "band-k")]
    pub band_k: Option<usize>,
}

fn triple_name(k: usize, part: &str) -> String {
    format!("instance_{k:02}_{part}.png")
}

/// Seed of the augmentation for one (image, target) pair.
pub fn augment_seed(base: u64, image: usize, target: usize) -> u64 {
    base.wrapping_add((image as u64) << 8).wrapping_add(target as u64)
}

pub fn run(args: &TrimaskArgs, common: &Common, file: &FileConfig) -> CliResult<String> {
    let band_k = args.band_k.or(file.band_k).unwrap_or(DEFAULT_BAND_K);
    let alphas = prefer_sub(&args.root, ALPHAS);
    layout::require_dir(&alphas)?;
    let names = layout::subdirs(&alphas)?;
    let sets: Vec<InstanceMatteSet> = names
        .par_iter()
        .map(|n| layout::read_instances(&alphas.join(n)))
        .collect::<CliResult<_>>()?;
    if let Some(t) = args.target {
        if let Some((name, set)) = names.iter().zip(&sets).find(|(_, s)| t >= s.len()) {
            return Err(CliError::Usage(format!(
                "target index {t} out of range for {name} with {} instance(s)",
                set.len()
            )));
        }
    }
    let triples: Vec<usize> = names
        .par_iter()
        .zip(&sets)
        .enumerate()
        .map(|(image, (name, set))| {
            if set.is_empty() {
                log::warn!("{name}: no instances, skipped");
                return Ok(0);
            }
            let targets: Vec<usize> = match args.target {
                Some(t) => vec![t],
                None => (0..set.len()).collect(),
            };
            let masks: Vec<BinaryMask> = set.planes().map(quantize).collect();
            for &t in &targets {
                let tri = if args.augment {
                    let seed = augment_seed(common.seed, image, t);
                    augment_trimask(MaskSource::Alphas(set), t, &AugmentOptions::default(), seed)?
                } else {
                    trimask_from_masks(&masks, t)?
                };
                write_trimask(&args.out.join("trimasks").join(name), t, &tri)?;
                let matte = trimatte_gt(set, t).map_err(|e| CliError::from(e).context(name))?;
                let dir = args.out.join("trimattes").join(name);
                for (part, plane) in ["t", "r", "b"].iter().zip(matte.planes()) {
                    raster::write_alpha(&dir.join(triple_name(t, part)), plane, common.bit_depth)?;
                }
                let band = partial_band(&masks[t], band_k);
                raster::write_mask(&args.out.join("bands").join(name).join(layout::instance_file(t)), &band)?;
            }
            Ok(targets.len())
        })
        .collect::<CliResult<Vec<usize>>>()?;
    Ok(format!(
        "wrote {} tri-mask triple(s) for {} image(s) to {}\n",
        triples.iter().sum::<usize>(),
        names.len(),
        args.out.display()
    ))
}

fn write_trimask(dir: &Path, k: usize, tri: &TriMask) -> CliResult<()> {
    raster::write_mask(&dir.join(triple_name(k, "t")), &tri.target)?;
    raster::write_mask(&dir.join(triple_name(k, "r")), &tri.reference)?;
    raster::write_mask(&dir.join(triple_name(k, "b")), &tri.background)
}

/// Reads `instance_XX_{t,r,b}.png` triples of one image, numbered from 00.
pub fn read_triples(dir: &Path) -> CliResult<Vec<[PathBuf; 3]>> {
    let mut out = Vec::new();
    loop {
        let k = out.len();
        let paths = ["t", "r", "b"].map(|p| dir.join(triple_name(k, p)));
        match paths.iter().filter(|p| p.is_file()).count() {
            0 => break,
            3 => out.push(paths),
            _ => {
                return Err(CliError::Data(format!(
                    "{}: incomplete tri-matte triple for instance {k:02}",
                    dir.display()
                )));
            }
        }
    }
    Ok(out)
}

pub fn write_triple(dir: &Path, k: usize, planes: [&instmatte::AlphaPlane; 3], depth: BitDepth) -> CliResult<()> {
    for (part, plane) in ["t", "r", "b"].iter().zip(planes) {
        raster::write_alpha(&dir.join(triple_name(k, part)), plane, depth)?;
    }
    Ok(())
}
