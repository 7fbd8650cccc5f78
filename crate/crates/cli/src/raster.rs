//! PNG reading and writing for alphas, masks and colour planes.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use instmatte::{AlphaPlane, BinaryMask, ColorPlane};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_code(self) -> u16 {
        match self {
            BitDepth::Eight => u8::MAX as u16,
            BitDepth::Sixteen => u16::MAX,
        }
    }

    pub fn step(self) -> f64 {
        1.0 / self.max_code() as f64
    }
}

impl TryFrom<u8> for BitDepth {
    type Error = String;

    fn try_from(bits: u8) -> Result<Self, String> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(format!("bit depth must be 8 or 16, got {other}")),
        }
    }
}

impl From<BitDepth> for u8 {
    fn from(depth: BitDepth) -> u8 {
        match depth {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }
}

fn open(path: &Path) -> CliResult<DynamicImage> {
    image::open(path).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

fn data_err(path: &Path, e: instmatte::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Luminance of any raster, scaled to `[0, 1]`.
pub fn read_gray(path: &Path) -> CliResult<(usize, usize, Vec<f64>)> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        other => other.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
    };
    Ok((w, h, values))
}

pub fn read_alpha(path: &Path) -> CliResult<AlphaPlane> {
    let (w, h, v) = read_gray(path)?;
    AlphaPlane::new(w, h, v).map_err(|e| data_err(path, e))
}

/// Nonzero pixels of a raster.
pub fn read_mask(path: &Path) -> CliResult<BinaryMask> {
    let (w, h, v) = read_gray(path)?;
    BinaryMask::new(w, h, v.into_iter().map(|x| x > 0.0).collect()).map_err(|e| data_err(path, e))
}

/// Grayscale rasters give one channel, everything else three (alpha dropped).
pub fn read_color(path: &Path) -> CliResult<ColorPlane> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            let v = img.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
            ColorPlane::new(w, h, 1, v)
        }
        other => {
            let v = other.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
            ColorPlane::new(w, h, 3, v)
        }
    };
    plane.map_err(|e| data_err(path, e))
}

pub fn code(v: f64, depth: BitDepth) -> u16 {
    (v.clamp(0.0, 1.0) * depth.max_code() as f64).round() as u16
}

/// Writes integer codes as a single-channel PNG.
pub fn write_codes(path: &Path, width: usize, height: usize, codes: Vec<u16>, depth: BitDepth) -> CliResult<()> {
    ensure_parent(path)?;
    let (w, h) = (width as u32, height as u32);
    let result = match depth {
        BitDepth::Sixteen => ImageBuffer::<Luma<u16>, _>::from_raw(w, h, codes).map(|b| b.save(path)),
        BitDepth::Eight => {
            let bytes: Vec<u8> = codes.into_iter().map(|c| c.min(255) as u8).collect();
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).map(|b| b.save(path))
        }
    };
    result
        .expect("buffer length matches dimensions")
        .map_err(|source| CliError::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn write_gray(path: &Path, width: usize, height: usize, values: &[f64], depth: BitDepth) -> CliResult<()> {
    write_codes(path, width, height, values.iter().map(|&v| code(v, depth)).collect(), depth)
}

pub fn write_alpha(path: &Path, plane: &AlphaPlane, depth: BitDepth) -> CliResult<()> {
    write_gray(path, plane.width(), plane.height(), plane.values(), depth)
}

/// 8-bit 0/255 mask.
pub fn write_mask(path: &Path, mask: &BinaryMask) -> CliResult<()> {
    let codes = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_codes(path, mask.width(), mask.height(), codes, BitDepth::Eight)
}

pub fn write_color(path: &Path, plane: &ColorPlane, depth: BitDepth) -> CliResult<()> {
    if plane.channels() == 1 {
        return write_gray(path, plane.width(), plane.height(), plane.data(), depth);
    }
    let plane = plane.with_channels(3).map_err(|e| data_err(path, e))?;
    ensure_parent(path)?;
    let (w, h) = (plane.width() as u32, plane.height() as u32);
    let codes: Vec<u16> = plane.data().iter().map(|&v| code(v, depth)).collect();
    let result = match depth {
        BitDepth::Sixteen => ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, codes).map(|b| b.save(path)),
        BitDepth::Eight => {
            let bytes: Vec<u8> = codes.into_iter().map(|c| c as u8).collect();
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).map(|b| b.save(path))
        }
    };
    result
        .expect("buffer length matches dimensions")
        .map_err(|source| CliError::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Quantizes planes that sum to 1 per pixel so their integer codes sum to
/// exactly the maximum code (largest-remainder rounding).
pub fn partition_codes(planes: &[&[f64]], depth: BitDepth) -> Vec<Vec<u16>> {
    let max = depth.max_code() as f64;
    let len = planes.first().map_or(0, |p| p.len());
    let mut out = vec![Vec::with_capacity(len); planes.len()];
    let mut scratch: Vec<(usize, f64)> = Vec::with_capacity(planes.len());
    for p in 0..len {
        scratch.clear();
        let mut assigned: i64 = 0;
        for (k, plane) in planes.iter().enumerate() {
            let scaled = plane[p].clamp(0.0, 1.0) * max;
            let floor = scaled.floor();
            assigned += floor as i64;
            out[k].push(floor as u16);
            scratch.push((k, scaled - floor));
        }
        let mut deficit = (max as i64 - assigned).max(0) as usize;
        // ties go to the lower index so the result is deterministic
        scratch.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(k, frac) in &scratch {
            if deficit == 0 {
                break;
            }
            if frac > 0.0 {
                out[k][p] += 1;
                deficit -= 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_codes_sum_to_max() {
        let a = [0.3, 1.0 / 3.0, 0.0, 0.5];
        let b = [0.3, 1.0 / 3.0, 0.0, 0.25];
        let c = [0.4, 1.0 / 3.0, 1.0, 0.25];
        let codes = partition_codes(&[&a, &b, &c], BitDepth::Sixteen);
        for p in 0..4 {
            let sum: u32 = codes.iter().map(|c| c[p] as u32).sum();
            assert_eq!(sum, 65535);
            for (k, plane) in [&a, &b, &c].iter().enumerate() {
                assert!((codes[k][p] as f64 / 65535.0 - plane[p]).abs() < 1.0 / 65535.0);
            }
        }
        assert_eq!(codes[2][2], 65535);
    }

    #[test]
    fn sixteen_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let plane = AlphaPlane::new(3, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0, 12345.0 / 65535.0]).unwrap();
        write_alpha(&path, &plane, BitDepth::Sixteen).unwrap();
        let back = read_alpha(&path).unwrap();
        for (x, y) in plane.values().iter().zip(back.values()) {
            assert!((x - y).abs() <= 0.5 / 65535.0);
        }
        assert_eq!(back.values()[5], 12345.0 / 65535.0);
    }

    #[test]
    fn color_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let plane = ColorPlane::new(2, 1, 3, vec![0.0, 0.5, 1.0, 0.2, 0.4, 0.6]).unwrap();
        write_color(&path, &plane, BitDepth::Sixteen).unwrap();
        let back = read_color(&path).unwrap();
        assert_eq!(back.channels(), 3);
        assert!(back.max_abs_diff(&plane).unwrap() <= 0.5 / 65535.0);
    }

    #[test]
    fn bit_depth_parsing() {
        assert_eq!(BitDepth::try_from(8).unwrap(), BitDepth::Eight);
        assert!(BitDepth::try_from(12).is_err());
    }
}
