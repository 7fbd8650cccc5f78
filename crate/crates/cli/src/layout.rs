//! Directory layout of datasets, scenes and tri-matte trees.
//!
//! ```text
//! root/images/<name>.png
//! root/alphas/<name>/instance_00.png, instance_01.png, ...
//! root/layers/<name>/               (composer output only)
//! ```
//!
//! Prediction roots mirror the `alphas/` tree.

use std::fs;
use std::path::{Path, PathBuf};

use instmatte::{AlphaPlane, InstanceMatteSet};

use crate::error::{CliError, CliResult};
use crate::raster;

pub const IMAGES: &str = "images";
pub const ALPHAS: &str = "alphas";
pub const LAYERS: &str = "layers";

pub fn instance_file(k: usize) -> String {
    format!("instance_{k:02}.png")
}

/// Sorted subdirectory names of `dir`.
pub fn subdirs(dir: &Path) -> CliResult<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

/// Sorted `.png` files of `dir`.
pub fn png_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Paths of `instance_XX.png` in `dir`, checked to be numbered 00, 01, ...
/// without gaps. Other files are ignored.
pub fn instance_paths(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut indices = Vec::new();
    for path in png_files(dir)? {
        let name = stem(&path);
        if let Some(num) = name.strip_prefix("instance_") {
            let k: usize = num
                .parse()
                .map_err(|_| CliError::Data(format!("{}: bad instance file name", path.display())))?;
            indices.push(k);
        }
    }
    indices.sort_unstable();
    if let Some((pos, _)) = indices.iter().enumerate().find(|(i, k)| *i != **k) {
        return Err(CliError::Data(format!(
            "{}: instance files are not numbered contiguously from 00 (missing {})",
            dir.display(),
            instance_file(pos)
        )));
    }
    Ok(indices.into_iter().map(|k| dir.join(instance_file(k))).collect())
}

/// Instance mattes of one image; ids are the file indices.
pub fn read_instances(dir: &Path) -> CliResult<InstanceMatteSet> {
    let planes = instance_paths(dir)?
        .iter()
        .map(|p| raster::read_alpha(p))
        .collect::<CliResult<Vec<AlphaPlane>>>()?;
    InstanceMatteSet::from_planes(planes).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

pub fn require_dir(path: &Path) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{}: directory not found", path.display())))
    }
}
