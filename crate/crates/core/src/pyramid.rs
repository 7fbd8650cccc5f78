//! Laplacian pyramid loss over single-channel planes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::reflect;

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidOptions {
    pub levels: usize,
    /// Level `k` is weighted by `base^k`.
    pub weight_base: f64,
}

impl Default for PyramidOptions {
    fn default() -> Self {
        Self {
            levels: 5,
            weight_base: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Grid {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Grid {
    fn blur(&self) -> Grid {
        let conv = |get: &dyn Fn(isize) -> f64| BINOMIAL.iter().enumerate().map(|(k, c)| c * get(k as isize - 2)).sum();
        let mut rows = vec![0.0; self.v.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                rows[y * self.w + x] = conv(&|d| self.v[y * self.w + reflect(x as isize + d, self.w)]);
            }
        }
        let mut out = vec![0.0; self.v.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                out[y * self.w + x] = conv(&|d| rows[reflect(y as isize + d, self.h) * self.w + x]);
            }
        }
        Grid { w: self.w, h: self.h, v: out }
    }

    fn down(&self) -> Grid {
        let b = self.blur();
        let (w, h) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let v = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| b.v[2 * y * self.w + 2 * x])
            .collect();
        Grid { w, h, v }
    }

    /// Zero-insert to `w`×`h`, then smooth with gain 4 to keep the mean.
    fn up(&self, w: usize, h: usize) -> Grid {
        let mut v = vec![0.0; w * h];
        for y in 0..self.h {
            for x in 0..self.w {
                if 2 * y < h && 2 * x < w {
                    v[2 * y * w + 2 * x] = 4.0 * self.v[y * self.w + x];
                }
            }
        }
        Grid { w, h, v }.blur()
    }
}

fn bands(w: usize, h: usize, values: &[f64], levels: usize) -> Vec<Grid> {
    let mut current = Grid { w, h, v: values.to_vec() };
    let mut out = Vec::with_capacity(levels);
    for _ in 0..levels {
        if current.w < 2 || current.h < 2 {
            break;
        }
        let next = current.down();
        let up = next.up(current.w, current.h);
        let band: Vec<f64> = current.v.iter().zip(&up.v).map(|(a, b)| a - b).collect();
        out.push(Grid { w: current.w, h: current.h, v: band });
        current = next;
    }
    out
}

/// Weighted sum over band-pass levels of the mean absolute band difference.
/// Levels stop early once a side drops below two pixels.
pub fn laplacian_loss(
    (w, h): (usize, usize),
    pred: &[f64],
    gt: &[f64],
    options: &PyramidOptions,
) -> Result<f64> {
    if pred.len() != w * h || gt.len() != w * h {
        return Err(Error::BufferLength {
            expected: w * h,
            found: if pred.len() != w * h { pred.len() } else { gt.len() },
        });
    }
    let diff: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| p - g).collect();
    // the pyramid is linear, so one pyramid of the difference suffices
    Ok(bands(w, h, &diff, options.levels)
        .iter()
        .enumerate()
        .map(|(k, band)| {
            let mean = band.v.iter().map(|v| v.abs()).sum::<f64>() / band.v.len() as f64;
            options.weight_base.powi(k as i32) * mean
        })
        .sum())
}
