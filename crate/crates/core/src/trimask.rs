//! Tri-masks, ground-truth tri-mattes, square-element morphology and the
//! boundary bands used for partial supervision.
//!
//! For instance `i` of `n`, the tri-mask is `(M_i, union_{j != i} M_j,
//! complement of both)` and the tri-matte is `(a_i, sum_{j != i} a_j,
//! 1 - a_i - sum_{j != i} a_j)`.

use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::plane::{quantize, AlphaPlane, BinaryMask, InstanceMatteSet};

/// Slack allowed on `sum a_i <= 1` before a tri-matte is refused.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMask {
    pub target: BinaryMask,
    pub reference: BinaryMask,
    pub background: BinaryMask,
    /// Set by [`augment_trimask`]; augmented triples need not partition the image.
    pub augmented: bool,
}

impl TriMask {
    pub fn dims(&self) -> (usize, usize) {
        self.target.dims()
    }

    /// True when every pixel lies in exactly one of the three masks.
    pub fn is_partition(&self) -> bool {
        self.target
            .bits()
            .iter()
            .zip(self.reference.bits())
            .zip(self.background.bits())
            .all(|((&t, &r), &b)| (t as u8 + r as u8 + b as u8) == 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMatte {
    pub target: AlphaPlane,
    pub reference: AlphaPlane,
    pub background: AlphaPlane,
}

impl TriMatte {
    pub fn new(target: AlphaPlane, reference: AlphaPlane, background: AlphaPlane) -> Result<Self> {
        check_dims(target.dims(), reference.dims())?;
        check_dims(target.dims(), background.dims())?;
        Ok(Self {
            target,
            reference,
            background,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.target.dims()
    }

    pub fn planes(&self) -> [&AlphaPlane; 3] {
        [&self.target, &self.reference, &self.background]
    }

    /// Largest pixelwise deviation of `t + r + b` from 1.
    pub fn sum_error(&self) -> f64 {
        self.target
            .values()
            .iter()
            .zip(self.reference.values())
            .zip(self.background.values())
            .map(|((t, r), b)| (t + r + b - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn check_masks(masks: &[BinaryMask], target: usize) -> Result<(usize, usize)> {
    let first = masks
        .first()
        .ok_or_else(|| Error::Usage("at least one instance mask is required".into()))?;
    if target >= masks.len() {
        return Err(Error::Usage(format!(
            "target index {target} out of range for {} instances",
            masks.len()
        )));
    }
    for m in masks {
        check_dims(first.dims(), m.dims())?;
    }
    Ok(first.dims())
}

pub fn trimask_from_masks(masks: &[BinaryMask], target: usize) -> Result<TriMask> {
    let (w, h) = check_masks(masks, target)?;
    let mut reference = BinaryMask::zeros(w, h)?;
    for (j, m) in masks.iter().enumerate() {
        if j != target {
            reference = reference.or(m)?;
        }
    }
    build_trimask(masks[target].clone(), reference, false)
}

fn build_trimask(target: BinaryMask, reference: BinaryMask, augmented: bool) -> Result<TriMask> {
    let background = target.or(&reference)?.not();
    Ok(TriMask {
        target,
        reference,
        background,
        augmented,
    })
}

/// Ground-truth tri-matte from effective (post-occlusion) instance alphas.
pub fn trimatte_gt(effective: &InstanceMatteSet, target: usize) -> Result<TriMatte> {
    let (w, h) = effective
        .dims()
        .ok_or_else(|| Error::Usage("at least one instance matte is required".into()))?;
    if target >= effective.len() {
        return Err(Error::Usage(format!(
            "target index {target} out of range for {} instances",
            effective.len()
        )));
    }
    let mut reference = vec![0.0; w * h];
    for (j, plane) in effective.planes().enumerate() {
        if j != target {
            reference.iter_mut().zip(plane.values()).for_each(|(r, v)| *r += v);
        }
    }
    let t = effective.get(target).expect("index checked").1;
    let mut background = Vec::with_capacity(w * h);
    for (k, (&a, &r)) in t.values().iter().zip(&reference).enumerate() {
        let total = a + r;
        if total > 1.0 + SUM_TOLERANCE {
            return Err(Error::Inconsistent(format!(
                "instance alphas sum to {total} at pixel ({}, {})",
                k % w,
                k / w
            )));
        }
        background.push((1.0 - total).max(0.0));
    }
    let reference = reference.into_iter().map(|v| v.min(1.0)).collect();
    TriMatte::new(
        t.clone(),
        AlphaPlane::from_vec_unchecked(w, h, reference),
        AlphaPlane::from_vec_unchecked(w, h, background),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Dilate,
    Erode,
}

/// Rounds an even kernel up to the next odd size.
pub fn normalize_kernel(kernel: usize) -> usize {
    kernel | 1
}

/// Square-element dilation or erosion. Pixels outside the image count as
/// background for both operators, so erosion eats inward from the border.
/// An axis of length 1 is treated as absent, so a single row or column
/// behaves as a 1-D signal.
pub fn morph(mask: &BinaryMask, op: MorphOp, kernel: usize) -> Result<BinaryMask> {
    if kernel == 0 {
        return Err(Error::Usage("morphology kernel must be at least 1".into()));
    }
    let size = normalize_kernel(kernel);
    if size != kernel {
        log::warn!("even morphology kernel {kernel} rounded up to {size}");
    }
    Ok(morph_odd(mask, op, size))
}

fn morph_odd(mask: &BinaryMask, op: MorphOp, size: usize) -> BinaryMask {
    if size == 1 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let mut bits = mask.bits().to_vec();
    if w > 1 {
        bits = sweep(&bits, w, h, op, size / 2, true);
    }
    if h > 1 {
        bits = sweep(&bits, w, h, op, size / 2, false);
    }
    BinaryMask::from_vec_unchecked(w, h, bits)
}

/// One-dimensional pass along rows (`horizontal`) or columns using window
/// counts from a running prefix sum.
fn sweep(bits: &[bool], w: usize, h: usize, op: MorphOp, radius: usize, horizontal: bool) -> Vec<bool> {
    let (lines, len) = if horizontal { (h, w) } else { (w, h) };
    let index = |line: usize, k: usize| if horizontal { line * w + k } else { k * w + line };
    let full = 2 * radius + 1;
    let mut out = vec![false; bits.len()];
    let mut prefix = vec![0usize; len + 1];
    for line in 0..lines {
        for k in 0..len {
            prefix[k + 1] = prefix[k] + bits[index(line, k)] as usize;
        }
        for k in 0..len {
            let lo = k.saturating_sub(radius);
            let hi = (k + radius + 1).min(len);
            let ones = prefix[hi] - prefix[lo];
            out[index(line, k)] = match op {
                MorphOp::Dilate => ones > 0,
                // a clipped window contains outside zeros
                MorphOp::Erode => ones == full,
            };
        }
    }
    out
}

/// Boundary band of half-width `k`: grown by `k` minus shrunk by `k`.
pub fn partial_band(mask: &BinaryMask, k: usize) -> BinaryMask {
    let size = 2 * k + 1;
    let grown = morph_odd(mask, MorphOp::Dilate, size);
    let shrunk = morph_odd(mask, MorphOp::Erode, size);
    grown.and_not(&shrunk).expect("same dimensions")
}

/// Instance masks or alphas to build augmented tri-masks from.
#[derive(Debug, Clone, Copy)]
pub enum MaskSource<'a> {
    Masks(&'a [BinaryMask]),
    Alphas(&'a InstanceMatteSet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReferenceSelection {
    /// Every non-target instance.
    All,
    /// Each non-target instance kept independently with this probability.
    Random { keep_probability: f64 },
    /// Explicit instance indices; the target is ignored if listed.
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentOptions {
    /// Alphas are binarised at a level drawn per instance from this range;
    /// `None` keeps every pixel with positive alpha. Ignored for mask input.
    pub truncation: Option<(f64, f64)>,
    pub reference: ReferenceSelection,
    /// Each of the three masks is dilated or eroded with a kernel drawn
    /// independently from this inclusive range.
    pub perturbation: Option<(usize, usize)>,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            truncation: Some((0.2, 0.8)),
            reference: ReferenceSelection::Random { keep_probability: 0.5 },
            perturbation: Some((1, 30)),
        }
    }
}

impl AugmentOptions {
    /// Options under which augmentation reduces to [`trimask_from_masks`].
    pub fn disabled() -> Self {
        Self {
            truncation: None,
            reference: ReferenceSelection::All,
            perturbation: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.truncation {
            if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
                return Err(Error::Usage(format!("invalid truncation range ({lo}, {hi})")));
            }
        }
        if let ReferenceSelection::Random { keep_probability: p } = self.reference {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Usage(format!("keep probability must lie in [0, 1], got {p}")));
            }
        }
        if let Some((lo, hi)) = self.perturbation {
            if lo == 0 || hi < lo {
                return Err(Error::Usage(format!("invalid perturbation kernel range ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

/// Randomised tri-mask for training-style robustness; deterministic per seed.
pub fn augment_trimask(source: MaskSource<'_>, target: usize, options: &AugmentOptions, seed: u64) -> Result<TriMask> {
    options.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks: Vec<BinaryMask> = match source {
        MaskSource::Masks(masks) => masks.to_vec(),
        MaskSource::Alphas(set) => set
            .planes()
            .map(|plane| match options.truncation {
                None => quantize(plane),
                Some((lo, hi)) => {
                    let level = if lo < hi { rng.random_range(lo..=hi) } else { lo };
                    let bits = plane.values().iter().map(|&a| a > level).collect();
                    BinaryMask::from_vec_unchecked(plane.width(), plane.height(), bits)
                }
            })
            .collect(),
    };
    let (w, h) = check_masks(&masks, target)?;

    let others = (0..masks.len()).filter(|&j| j != target);
    let chosen: Vec<usize> = match &options.reference {
        ReferenceSelection::All => others.collect(),
        ReferenceSelection::Random { keep_probability } => {
            others.filter(|_| rng.random_bool(*keep_probability)).collect()
        }
        ReferenceSelection::Fixed(list) => {
            if let Some(&bad) = list.iter().find(|&&j| j >= masks.len()) {
                return Err(Error::Usage(format!(
                    "reference index {bad} out of range for {} instances",
                    masks.len()
                )));
            }
            others.filter(|j| list.contains(j)).collect()
        }
    };
    let mut reference = BinaryMask::zeros(w, h)?;
    for j in chosen {
        reference = reference.or(&masks[j])?;
    }
    let mut tri = build_trimask(masks[target].clone(), reference, false)?;

    if let Some((lo, hi)) = options.perturbation {
        let mut perturb = |mask: &BinaryMask| {
            let kernel = normalize_kernel((lo..=hi).choose(&mut rng).unwrap_or(lo));
            let op = if rng.random_bool(0.5) { MorphOp::Dilate } else { MorphOp::Erode };
            morph_odd(mask, op, kernel)
        };
        tri.target = perturb(&tri.target);
        tri.reference = perturb(&tri.reference);
        tri.background = perturb(&tri.background);
        tri.augmented = true;
    }
    Ok(tri)
}
