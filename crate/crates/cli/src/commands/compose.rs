use std::path::{Path, PathBuf};

use clap::Args;
use instmatte::{compose_scene, ColorPlane, Layer, LayeredScene, Placement, PlacementPolicy, RandomPlacement};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::prefer_sub;
use crate::error::{CliError, CliResult};
use crate::layout::{self, instance_file, ALPHAS, IMAGES, LAYERS};
use crate::raster::{self, BitDepth};
use crate::settings::Common;

#[derive(Debug, Clone, Args)]
pub struct ComposeArgs {
    /// Foreground root with images/<name>.png and alphas/<name>.png
    pub fg_root: PathBuf,
    /// Directory of background images (or a root with images/)
    pub bg_root: PathBuf,
    /// Output dataset root
    #[arg(long)]
    pub out: PathBuf,
    /// Number of scenes to generate
    #[arg(long, default_value_t = 1)]
    pub scenes: usize,
    /// Foregrounds per scene (2 to 5); drawn per scene when omitted
    #[arg(long)]
    pub count: Option<usize>,
    /// Smallest overlap of neighbouring instances, as a fraction of width
    #[arg(long, allow_negative_numbers = true)]
    pub overlap_min: Option<f64>,
    /// Largest overlap of neighbouring instances, as a fraction of width
    #[arg(long, allow_negative_numbers = true)]
    pub overlap_max: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    scene: &'a str,
    base_seed: u64,
    scene_seed: u64,
    background: String,
    foregrounds: Vec<String>,
    placements: &'a [Placement],
    bit_depth: BitDepth,
}

struct Source {
    name: String,
    layer: Layer,
}

pub fn scene_name(index: usize) -> String {
    format!("scene_{index:04}")
}

pub fn run(args: &ComposeArgs, common: &Common) -> CliResult<String> {
    let mut policy = RandomPlacement::default();
    if let Some(lo) = args.overlap_min {
        policy.overlap_range.0 = lo;
    }
    if let Some(hi) = args.overlap_max {
        policy.overlap_range.1 = hi;
    }
    let (lo, hi) = policy.count_range;
    if let Some(k) = args.count {
        if !(lo..=hi).contains(&k) {
            return Err(CliError::Usage(format!("--count must lie in {lo}..={hi}, got {k}")));
        }
    }
    if args.scenes == 0 {
        return Err(CliError::Usage("--scenes must be at least 1".into()));
    }
    let sources = load_foregrounds(&args.fg_root)?;
    let bg_dir = prefer_sub(&args.bg_root, IMAGES);
    layout::require_dir(&bg_dir)?;
    let backgrounds = layout::png_files(&bg_dir)?;
    if backgrounds.is_empty() {
        return Err(CliError::Usage(format!("{}: no background images", bg_dir.display())));
    }
    let policy = PlacementPolicy::Random(policy);

    let written: Vec<usize> = (0..args.scenes)
        .into_par_iter()
        .map(|s| {
            let name = scene_name(s);
            let scene_seed = common.seed.wrapping_add(s as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
            let bg_path = &backgrounds[rng.random_range(0..backgrounds.len())];
            let count = args.count.unwrap_or_else(|| rng.random_range(lo..=hi));
            let picks: Vec<usize> = if count <= sources.len() {
                sample(&mut rng, sources.len(), count).into_vec()
            } else {
                (0..count).map(|_| rng.random_range(0..sources.len())).collect()
            };
            let layers: Vec<Layer> = picks.iter().map(|&i| sources[i].layer.clone()).collect();
            let background = raster::read_color(bg_path)?;
            let scene = compose_scene(&layers, &background, &policy, rng.random())
                .map_err(|e| CliError::from(e).context(&name))?;
            let manifest = Manifest {
                scene: &name,
                base_seed: common.seed,
                scene_seed,
                background: layout::stem(bg_path),
                foregrounds: picks.iter().map(|&i| sources[i].name.clone()).collect(),
                placements: scene.placements(),
                bit_depth: common.bit_depth,
            };
            write_scene(&args.out, &name, &scene, &manifest, common.bit_depth)?;
            Ok(count)
        })
        .collect::<CliResult<_>>()?;
    Ok(format!(
        "wrote {} scene(s) with {} instances to {}\n",
        written.len(),
        written.iter().sum::<usize>(),
        args.out.display()
    ))
}

fn load_foregrounds(root: &Path) -> CliResult<Vec<Source>> {
    let images = root.join(IMAGES);
    let alphas = root.join(ALPHAS);
    if !images.is_dir() || !alphas.is_dir() {
        return Err(CliError::Usage(format!(
            "{}: expected images/ and alphas/ subdirectories",
            root.display()
        )));
    }
    let files = layout::png_files(&images)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("{}: no foreground images", images.display())));
    }
    files
        .par_iter()
        .map(|path| {
            let name = layout::stem(path);
            let alpha_path = alphas.join(format!("{name}.png"));
            if !alpha_path.is_file() {
                return Err(CliError::Data(format!("foreground {name} has no alpha matte")));
            }
            let layer = Layer::new(raster::read_color(path)?, raster::read_alpha(&alpha_path)?)
                .map_err(|e| CliError::from(e).context(&name))?;
            Ok(Source { name, layer })
        })
        .collect()
}

fn write_scene(out: &Path, name: &str, scene: &LayeredScene, manifest: &Manifest<'_>, depth: BitDepth) -> CliResult<()> {
    let (w, h) = scene.dims();
    raster::write_color(&out.join(IMAGES).join(format!("{name}.png")), scene.composite(), depth)?;

    // background first, so ties in rounding favour it consistently
    let mut planes: Vec<&[f64]> = vec![scene.background_alpha().values()];
    planes.extend(scene.effective().planes().map(|p| p.values()));
    let mut codes = raster::partition_codes(&planes, depth).into_iter();
    let layers_dir = out.join(LAYERS).join(name);
    raster::write_codes(&layers_dir.join("background_alpha.png"), w, h, codes.next().unwrap_or_default(), depth)?;
    let alpha_dir = out.join(ALPHAS).join(name);
    for (k, c) in codes.enumerate() {
        raster::write_codes(&alpha_dir.join(instance_file(k)), w, h, c, depth)?;
    }

    raster::write_color(&layers_dir.join("background.png"), scene.background(), depth)?;
    for (k, layer) in scene.foregrounds().iter().enumerate() {
        raster::write_color(&layers_dir.join(format!("layer_{k:02}.png")), layer.color(), depth)?;
        raster::write_alpha(&layers_dir.join(format!("raw_alpha_{k:02}.png")), layer.alpha(), depth)?;
    }
    let json = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Data(e.to_string()))?;
    let path = layers_dir.join("manifest.json");
    std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))
}

/// Reads a composed scene back: composite, effective alphas, background
/// alpha, canvas-sized colour layers and the background colour.
pub struct StoredScene {
    pub composite: ColorPlane,
    pub effective: instmatte::InstanceMatteSet,
    pub background_alpha: instmatte::AlphaPlane,
    pub layers: Vec<ColorPlane>,
    pub background: ColorPlane,
}

pub fn read_scene(root: &Path, name: &str) -> CliResult<StoredScene> {
    let layers_dir = root.join(LAYERS).join(name);
    let effective = layout::read_instances(&root.join(ALPHAS).join(name))?;
    let layers = (0..effective.len())
        .map(|k| raster::read_color(&layers_dir.join(format!("layer_{k:02}.png"))))
        .collect::<CliResult<_>>()?;
    Ok(StoredScene {
        composite: raster::read_color(&root.join(IMAGES).join(format!("{name}.png")))?,
        effective,
        background_alpha: raster::read_alpha(&layers_dir.join("background_alpha.png"))?,
        layers,
        background: raster::read_color(&layers_dir.join("background.png"))?,
    })
}
