#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use instmatte::{AlphaPlane, ColorPlane};
use instmatte_cli::layout::instance_file;
use instmatte_cli::raster::{self, BitDepth};

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn cli(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("instmatte").chain(args.iter().copied());
    let code = instmatte_cli::run(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8_lossy(&out).into_owned(),
        stderr: String::from_utf8_lossy(&err).into_owned(),
    }
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Soft elliptical blob with a flat core and a linear falloff.
pub fn blob(w: usize, h: usize, cx: f64, cy: f64, rx: f64, ry: f64) -> AlphaPlane {
    AlphaPlane::from_fn(w, h, |x, y| {
        let dx = (x as f64 - cx) / rx;
        let dy = (y as f64 - cy) / ry;
        (2.0 * (1.0 - (dx * dx + dy * dy).sqrt())).clamp(0.0, 1.0)
    })
    .unwrap()
}

pub fn write_instances(dir: &Path, planes: &[AlphaPlane]) {
    fs::create_dir_all(dir).unwrap();
    for (k, p) in planes.iter().enumerate() {
        raster::write_alpha(&dir.join(instance_file(k)), p, BitDepth::Sixteen).unwrap();
    }
}

/// Foreground root with `n` soft blobs of distinct grey levels and sizes.
pub fn foreground_root(root: &Path, n: usize) {
    for i in 0..n {
        let (w, h) = (24 + 4 * i, 40 + 2 * i);
        let alpha = blob(w, h, w as f64 / 2.0 - 0.5, h as f64 / 2.0 - 0.5, w as f64 / 2.0, h as f64 / 2.0);
        let color = ColorPlane::new(
            w,
            h,
            3,
            (0..w * h * 3)
                .map(|k| ((k % 3) as f64 * 0.2 + 0.1 * i as f64 + ((k / 3) % w) as f64 / w as f64 * 0.3).min(1.0))
                .collect(),
        )
        .unwrap();
        raster::write_color(&root.join("images").join(format!("fg{i}.png")), &color, BitDepth::Sixteen).unwrap();
        raster::write_alpha(&root.join("alphas").join(format!("fg{i}.png")), &alpha, BitDepth::Sixteen).unwrap();
    }
}

pub fn background_root(dir: &Path, n: usize, w: usize, h: usize) {
    for i in 0..n {
        let plane = ColorPlane::new(
            w,
            h,
            3,
            (0..w * h * 3).map(|k| ((k * (i + 3)) % 97) as f64 / 96.0).collect(),
        )
        .unwrap();
        raster::write_color(&dir.join(format!("bg{i}.png")), &plane, BitDepth::Eight).unwrap();
    }
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Copies the alphas tree of a dataset so it can serve as predictions.
pub fn copy_tree(from: &Path, to: &Path) {
    for (rel, bytes) in tree(from) {
        let dst = to.join(rel);
        fs::create_dir_all(dst.parent().unwrap()).unwrap();
        fs::write(dst, bytes).unwrap();
    }
}
