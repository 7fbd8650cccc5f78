//! Raster primitives shared by every other module: alpha planes, binary
//! masks, colour layers and ordered instance sets, plus support
//! quantization and IoU.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

fn check_shape(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyGrid { width, height });
    }
    let expected = width * height;
    if len != expected {
        return Err(Error::BufferLength {
            expected,
            found: len,
        });
    }
    Ok(())
}

/// A row-major grid of opacities, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaPlane {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl AlphaPlane {
    /// Builds a plane, rejecting (never clamping) values outside `[0, 1]` and NaN.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(width, height, values.len())?;
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::OutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a plane from `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    /// Builds a plane after clamping every value into `[0, 1]`.
    ///
    /// Only for results of algebra that may leave the unit interval by
    /// construction (refinement on alpha stacks); NaN is still rejected.
    pub fn from_clamped(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let values = values
            .into_iter()
            .map(|v| if v.is_nan() { v } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(width, height, values)
    }

    pub(crate) fn from_vec_unchecked(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// True when no pixel is strictly positive.
    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v <= 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// A row-major grid of bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_shape(width, height, bits.len())?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn ones(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![true; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    /// Parses `0`/`1` values; anything else is out of range.
    pub fn from_values(width: usize, height: usize, values: &[u8]) -> Result<Self> {
        if let Some((index, &v)) = values.iter().enumerate().find(|(_, v)| **v > 1) {
            return Err(Error::OutOfRange {
                index,
                value: v as f64,
            });
        }
        Self::new(width, height, values.iter().map(|&v| v == 1).collect())
    }

    pub(crate) fn from_vec_unchecked(width: usize, height: usize, bits: Vec<bool>) -> Self {
        debug_assert_eq!(bits.len(), width * height);
        Self {
            width,
            height,
            bits,
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_all_zero(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        check_dims(self.dims(), other.dims())?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_vec_unchecked(self.width, self.height, bits))
    }

    pub fn and(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a != b)
    }

    pub fn not(&self) -> Self {
        Self::from_vec_unchecked(
            self.width,
            self.height,
            self.bits.iter().map(|&b| !b).collect(),
        )
    }

    pub fn is_subset_of(&self, other: &Self) -> Result<bool> {
        check_dims(self.dims(), other.dims())?;
        Ok(self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b))
    }

    /// Views the mask as an alpha plane with values 0 and 1.
    pub fn to_alpha(&self) -> AlphaPlane {
        AlphaPlane::from_vec_unchecked(
            self.width,
            self.height,
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }
}

/// An interleaved colour (or grayscale) raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorPlane {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ColorPlane {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Usage("colour plane needs at least one channel".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::EmptyGrid { width, height });
        }
        if data.len() != width * height * channels {
            return Err(Error::BufferLength {
                expected: width * height * channels,
                found: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::OutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// A single-channel plane carrying the values of `plane`.
    pub fn from_gray(plane: &AlphaPlane) -> Self {
        Self {
            width: plane.width(),
            height: plane.height(),
            channels: 1,
            data: plane.values().to_vec(),
        }
    }

    pub(crate) fn from_vec_unchecked(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Value of channel `c` at pixel index `p`.
    pub fn at(&self, p: usize, c: usize) -> f64 {
        self.data[p * self.channels + c]
    }

    /// Replicates a single channel up to `channels`; other shapes must
    /// already match.
    pub fn with_channels(&self, channels: usize) -> Result<Self> {
        if channels == self.channels {
            return Ok(self.clone());
        }
        if self.channels != 1 {
            return Err(Error::Usage(format!(
                "cannot convert {} channels to {}",
                self.channels, channels
            )));
        }
        let data = self
            .data
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, channels))
            .collect();
        Ok(Self::from_vec_unchecked(
            self.width,
            self.height,
            channels,
            data,
        ))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        check_dims(self.dims(), other.dims())?;
        if self.channels != other.channels {
            return Err(Error::Usage("channel count mismatch".into()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// One image's instances, each with an integer id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstanceMatteSet {
    instances: Vec<(u32, AlphaPlane)>,
}

impl InstanceMatteSet {
    pub fn new(instances: Vec<(u32, AlphaPlane)>) -> Result<Self> {
        if let Some((_, first)) = instances.first() {
            for (_, plane) in &instances[1..] {
                check_dims(first.dims(), plane.dims())?;
            }
        }
        let mut seen = HashSet::new();
        for (id, _) in &instances {
            if !seen.insert(*id) {
                return Err(Error::Usage(format!("duplicate instance id {id}")));
            }
        }
        Ok(Self { instances })
    }

    /// Numbers the planes `0..n` in order.
    pub fn from_planes(planes: Vec<AlphaPlane>) -> Result<Self> {
        Self::new(
            planes
                .into_iter()
                .enumerate()
                .map(|(i, p)| (i as u32, p))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Common dimensions, `None` for an empty set.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.instances.first().map(|(_, p)| p.dims())
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.instances.iter().map(|(id, _)| *id)
    }

    pub fn planes(&self) -> impl Iterator<Item = &AlphaPlane> + '_ {
        self.instances.iter().map(|(_, p)| p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &AlphaPlane)> + '_ {
        self.instances.iter().map(|(id, p)| (*id, p))
    }

    pub fn get(&self, index: usize) -> Option<(u32, &AlphaPlane)> {
        self.instances.get(index).map(|(id, p)| (*id, p))
    }

    pub fn push(&mut self, id: u32, plane: AlphaPlane) -> Result<()> {
        if let Some(d) = self.dims() {
            check_dims(d, plane.dims())?;
        }
        if self.ids().any(|i| i == id) {
            return Err(Error::Usage(format!("duplicate instance id {id}")));
        }
        self.instances.push((id, plane));
        Ok(())
    }

    pub fn into_planes(self) -> Vec<AlphaPlane> {
        self.instances.into_iter().map(|(_, p)| p).collect()
    }
}

/// Support of a matte: bit set exactly where alpha is strictly positive.
pub fn quantize(matte: &AlphaPlane) -> BinaryMask {
    BinaryMask::from_vec_unchecked(
        matte.width(),
        matte.height(),
        matte.values().iter().map(|&v| v > 0.0).collect(),
    )
}

/// Union of the supports of two mattes.
pub fn union_support(a: &AlphaPlane, b: &AlphaPlane) -> Result<BinaryMask> {
    check_dims(a.dims(), b.dims())?;
    let bits = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| x > 0.0 || y > 0.0)
        .collect();
    Ok(BinaryMask::from_vec_unchecked(a.width(), a.height(), bits))
}

/// Intersection over union; 0 when both masks are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Pixel extent of a rectangle, used for bounding boxes of supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    /// Exclusive.
    pub x1: usize,
    /// Exclusive.
    pub y1: usize,
}

impl Rect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    /// Grows by `margin` on every side, clipped to `width`×`height`.
    pub fn expand(&self, margin: usize, width: usize, height: usize) -> Rect {
        Rect {
            x0: self.x0.saturating_sub(margin),
            y0: self.y0.saturating_sub(margin),
            x1: (self.x1 + margin).min(width),
            y1: (self.y1 + margin).min(height),
        }
    }
}

/// Bounding box of the set bits, `None` for an empty mask.
pub fn bounding_box(mask: &BinaryMask) -> Option<Rect> {
    let w = mask.width();
    let mut rect: Option<Rect> = None;
    for (y, row) in mask.bits().chunks(w).enumerate() {
        let Some(first) = row.iter().position(|&b| b) else {
            continue;
        };
        let last = row.iter().rposition(|&b| b).unwrap_or(first);
        rect = Some(match rect {
            None => Rect {
                x0: first,
                y0: y,
                x1: last + 1,
                y1: y + 1,
            },
            Some(r) => Rect {
                x0: r.x0.min(first),
                y0: r.y0,
                x1: r.x1.max(last + 1),
                y1: y + 1,
            },
        });
    }
    rect
}
