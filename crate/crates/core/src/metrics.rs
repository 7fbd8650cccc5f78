//! Matting error functions evaluated over the union support of a
//! prediction/ground-truth pair, and the similarity score built on them.
//!
//! `grad` follows the usual matting-benchmark recipe: gradient magnitudes
//! from first-order Gaussian-derivative filters (reflective borders), with
//! the per-pixel error the squared magnitude difference. `conn` uses the
//! threshold sweep against the largest 4-connected component of the jointly
//! thresholded pair; degradations below 0.15 count as zero.

use serde::{Deserialize, Serialize};

use crate::config::{ErrorKind, ImqConfig};
use crate::error::{check_dims, Error, Result};
use crate::plane::{bounding_box, union_support, AlphaPlane, BinaryMask, Rect};

/// Degradations below this are ignored by the connectivity error.
pub const CONN_MIN_DEGRADATION: f64 = 0.15;

/// Per-pixel nonnegative error grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ErrorField {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyGrid { width, height });
        }
        if values.len() != width * height {
            return Err(Error::BufferLength {
                expected: width * height,
                found: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| v.is_nan() || **v < 0.0) {
            return Err(Error::OutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub(crate) fn from_vec_unchecked(width: usize, height: usize, values: Vec<f64>) -> Self {
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Mean of an error field over a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionError {
    pub value: f64,
    /// Set when the region had no pixels; `value` is then 0.
    pub empty: bool,
}

/// Per-pixel error of `pred` against `gt` over the whole image.
pub fn error_field(
    kind: ErrorKind,
    pred: &AlphaPlane,
    gt: &AlphaPlane,
    config: &ImqConfig,
) -> Result<ErrorField> {
    check_dims(gt.dims(), pred.dims())?;
    let full = Rect {
        x0: 0,
        y0: 0,
        x1: pred.width(),
        y1: pred.height(),
    };
    let values = error_window(kind, pred, gt, config, full);
    Ok(ErrorField::from_vec_unchecked(
        pred.width(),
        pred.height(),
        values,
    ))
}

/// Mean of `field` over the set pixels of `region`.
pub fn region_error(field: &ErrorField, region: &BinaryMask) -> Result<RegionError> {
    check_dims(field.dims(), region.dims())?;
    let (sum, count) = field
        .values()
        .iter()
        .zip(region.bits())
        .filter(|(_, &b)| b)
        .fold((0.0, 0usize), |(s, c), (&v, _)| (s + v, c + 1));
    Ok(if count == 0 {
        RegionError {
            value: 0.0,
            empty: true,
        }
    } else {
        RegionError {
            value: sum / count as f64,
            empty: false,
        }
    })
}

/// Similarity `1 - min(w * err, 1)`.
pub fn similarity(err: f64, w: f64) -> Result<f64> {
    if err.is_nan() || err < 0.0 {
        return Err(Error::Domain(format!("error must be nonnegative, got {err}")));
    }
    if w.is_nan() || w <= 0.0 {
        return Err(Error::Domain(format!("w must be positive, got {w}")));
    }
    Ok(1.0 - (w * err).min(1.0))
}

/// Error of a pair averaged over the union of its supports.
///
/// Equivalent to `region_error(error_field(..), union_support(..))`, but the
/// filters and the connectivity sweep only run over the bounding box of the
/// union, which is exact: neighbours outside the box are still read from the
/// full planes and the thresholded sets of the sweep never leave the box.
pub fn pair_error(
    kind: ErrorKind,
    pred: &AlphaPlane,
    gt: &AlphaPlane,
    config: &ImqConfig,
) -> Result<RegionError> {
    let region = union_support(pred, gt)?;
    let Some(rect) = bounding_box(&region) else {
        return Ok(RegionError {
            value: 0.0,
            empty: true,
        });
    };
    let values = error_window(kind, pred, gt, config, rect);
    let width = pred.width();
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in rect.y0..rect.y1 {
        let row = &region.bits()[y * width + rect.x0..y * width + rect.x1];
        let field_row = &values[(y - rect.y0) * rect.width()..(y - rect.y0 + 1) * rect.width()];
        for (&inside, &v) in row.iter().zip(field_row) {
            if inside {
                sum += v;
                count += 1;
            }
        }
    }
    Ok(RegionError {
        value: sum / count as f64,
        empty: false,
    })
}

/// Error values for the pixels of `rect`, row-major within it.
fn error_window(
    kind: ErrorKind,
    pred: &AlphaPlane,
    gt: &AlphaPlane,
    config: &ImqConfig,
    rect: Rect,
) -> Vec<f64> {
    match kind {
        ErrorKind::Mad => pointwise(pred, gt, rect, |d| d.abs()),
        ErrorKind::Mse => pointwise(pred, gt, rect, |d| d * d),
        ErrorKind::Grad => {
            let kernels = GaussianDerivative::new(config.grad_sigma);
            let p = kernels.magnitude(pred, rect);
            let g = kernels.magnitude(gt, rect);
            p.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).collect()
        }
        ErrorKind::Conn => connectivity_window(pred, gt, config.conn_step, rect),
    }
}

fn pointwise(pred: &AlphaPlane, gt: &AlphaPlane, rect: Rect, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let w = pred.width();
    let mut out = Vec::with_capacity(rect.width() * rect.height());
    for y in rect.y0..rect.y1 {
        let range = y * w + rect.x0..y * w + rect.x1;
        out.extend(
            pred.values()[range.clone()]
                .iter()
                .zip(&gt.values()[range])
                .map(|(p, g)| f(p - g)),
        );
    }
    out
}

/// Index into `0..n` with `d c b a | a b c d | d c b a` reflection.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable first-order Gaussian-derivative filter pair.
struct GaussianDerivative {
    half: usize,
    smooth: Vec<f64>,
    deriv: Vec<f64>,
}

impl GaussianDerivative {
    fn new(sigma: f64) -> Self {
        const EPSILON: f64 = 1e-2;
        let gauss = |x: f64| (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let arg = -2.0 * ((2.0 * std::f64::consts::PI).sqrt() * sigma * EPSILON).ln();
        let half = if arg > 0.0 {
            (sigma * arg.sqrt()).ceil().max(1.0) as usize
        } else {
            1
        };
        let taps = (0..=2 * half).map(|i| i as f64 - half as f64);
        let smooth: Vec<f64> = taps.clone().map(gauss).collect();
        let mut deriv: Vec<f64> = taps.map(|x| -x * gauss(x) / (sigma * sigma)).collect();
        // the 2-D kernel is normalised to unit Frobenius norm
        let norm = smooth.iter().map(|v| v * v).sum::<f64>().sqrt()
            * deriv.iter().map(|v| v * v).sum::<f64>().sqrt();
        deriv.iter_mut().for_each(|v| *v /= norm);
        Self {
            half,
            smooth,
            deriv,
        }
    }

    /// Gradient magnitude for the pixels of `rect`.
    fn magnitude(&self, plane: &AlphaPlane, rect: Rect) -> Vec<f64> {
        let (w, h) = plane.dims();
        let v = plane.values();
        let half = self.half as isize;
        let rows = rect.height() + 2 * self.half;
        let cols = rect.width();
        let taps = self.smooth.len();
        let xs: Vec<Vec<usize>> = (rect.x0..rect.x1)
            .map(|x| {
                (0..taps)
                    .map(|k| reflect(x as isize + k as isize - half, w))
                    .collect()
            })
            .collect();

        // horizontal pass over the rows the vertical pass will touch
        let mut hs = vec![0.0; rows * cols];
        let mut hd = vec![0.0; rows * cols];
        for r in 0..rows {
            let y = reflect(rect.y0 as isize + r as isize - half, h);
            let src = &v[y * w..(y + 1) * w];
            for (c, idx) in xs.iter().enumerate() {
                let (mut s, mut d) = (0.0, 0.0);
                for (k, &x) in idx.iter().enumerate() {
                    s += self.smooth[k] * src[x];
                    d += self.deriv[k] * src[x];
                }
                hs[r * cols + c] = s;
                hd[r * cols + c] = d;
            }
        }

        let mut out = vec![0.0; rect.height() * cols];
        for r in 0..rect.height() {
            for c in 0..cols {
                let (mut gx, mut gy) = (0.0, 0.0);
                for k in 0..taps {
                    let i = (r + k) * cols + c;
                    gx += self.smooth[k] * hd[i];
                    gy += self.deriv[k] * hs[i];
                }
                out[r * cols + c] = (gx * gx + gy * gy).sqrt();
            }
        }
        out
    }
}

/// Sweep levels `0, step, 2*step, ..` up to 1.
fn sweep_levels(step: f64) -> Vec<f64> {
    let last = ((1.0 + 1e-9) / step).floor() as usize;
    (0..=last).map(|i| (i as f64 * step).min(1.0)).collect()
}

fn connectivity_window(pred: &AlphaPlane, gt: &AlphaPlane, step: f64, rect: Rect) -> Vec<f64> {
    let w = pred.width();
    let (cols, rows) = (rect.width(), rect.height());
    let n = cols * rows;
    let mut p = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for y in rect.y0..rect.y1 {
        p.extend_from_slice(&pred.values()[y * w + rect.x0..y * w + rect.x1]);
        g.extend_from_slice(&gt.values()[y * w + rect.x0..y * w + rect.x1]);
    }

    let levels = sweep_levels(step);
    let mut level: Vec<Option<f64>> = vec![None; n];
    let mut labels = ComponentLabeller::new(cols, rows);
    for i in 1..levels.len() {
        let t = levels[i];
        let largest = labels.largest(|k| p[k] >= t && g[k] >= t);
        for (k, l) in level.iter_mut().enumerate() {
            if l.is_none() && !largest.contains(k) {
                *l = Some(levels[i - 1]);
            }
        }
    }

    let phi = |alpha: f64, l: f64| {
        let d = alpha - l;
        if d >= CONN_MIN_DEGRADATION {
            1.0 - d
        } else {
            1.0
        }
    };
    (0..n)
        .map(|k| {
            let l = level[k].unwrap_or(1.0);
            (phi(p[k], l) - phi(g[k], l)).abs()
        })
        .collect()
}

/// 4-connected component labelling with reusable buffers.
pub(crate) struct ComponentLabeller {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    stack: Vec<usize>,
}

pub(crate) struct Largest<'a> {
    labels: &'a [u32],
    label: u32,
}

impl Largest<'_> {
    pub(crate) fn contains(&self, k: usize) -> bool {
        self.label != 0 && self.labels[k] == self.label
    }
}

impl ComponentLabeller {
    pub(crate) fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
            stack: Vec::new(),
        }
    }

    /// Labels the pixels where `inside` holds and returns the largest
    /// component; ties go to the component found first in row-major order.
    pub(crate) fn largest(&mut self, inside: impl Fn(usize) -> bool) -> Largest<'_> {
        let (w, h) = (self.width, self.height);
        self.labels.iter_mut().for_each(|l| *l = 0);
        let mut next = 0u32;
        let (mut best, mut best_size) = (0u32, 0usize);
        for start in 0..w * h {
            if self.labels[start] != 0 || !inside(start) {
                continue;
            }
            next += 1;
            self.labels[start] = next;
            self.stack.push(start);
            let mut size = 0usize;
            while let Some(k) = self.stack.pop() {
                size += 1;
                let (x, y) = (k % w, k / w);
                let visit = |j: usize, labels: &mut [u32], stack: &mut Vec<usize>| {
                    if labels[j] == 0 && inside(j) {
                        labels[j] = next;
                        stack.push(j);
                    }
                };
                if x > 0 {
                    visit(k - 1, &mut self.labels, &mut self.stack);
                }
                if x + 1 < w {
                    visit(k + 1, &mut self.labels, &mut self.stack);
                }
                if y > 0 {
                    visit(k - w, &mut self.labels, &mut self.stack);
                }
                if y + 1 < h {
                    visit(k + w, &mut self.labels, &mut self.stack);
                }
            }
            if size > best_size {
                best = next;
                best_size = size;
            }
        }
        Largest {
            labels: &self.labels,
            label: best,
        }
    }
}
