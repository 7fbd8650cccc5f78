//! Multi-instance refinement applied directly to tri-mattes.
//!
//! For instance `i` of `n`, the reductions are
//!
//! ```text
//! t~ = (t_i + (1/(n-1)) sum_j r_j - sum_{j != i} t_j) / 2
//! r~ = (r_i + sum_{j != i} t_j) / 2
//! b~ = (1/n) sum_j b_j
//! ```
//!
//! with a single instance passing through unchanged. Stacks holding alphas
//! are clamped to `[0, 1]` after every update.

use serde::{Deserialize, Serialize};

use crate::compositing::LayeredScene;
use crate::error::{check_dims, Error, Result};
use crate::metrics::ErrorField;
use crate::plane::{AlphaPlane, ColorPlane, InstanceMatteSet, Rect};
use crate::pyramid::{laplacian_loss, PyramidOptions};
use crate::trimask::{trimatte_gt, TriMatte};

pub const DEFAULT_PATCH: usize = 128;
pub const DEFAULT_THRESHOLD: f64 = 0.01;

/// Value range of the planes in a [`TriStack`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// Alpha values; updates are clamped to `[0, 1]`.
    Alpha,
    /// Arbitrary features; no clamping.
    Unbounded,
}

/// Target, reference and background planes of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TriPlanes {
    pub target: Vec<f64>,
    pub reference: Vec<f64>,
    pub background: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriStack {
    width: usize,
    height: usize,
    entries: Vec<TriPlanes>,
    domain: Domain,
}

impl TriStack {
    pub fn new(width: usize, height: usize, entries: Vec<TriPlanes>, domain: Domain) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Usage("a tri-stack needs at least one instance".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::EmptyGrid { width, height });
        }
        for e in &entries {
            for plane in [&e.target, &e.reference, &e.background] {
                if plane.len() != width * height {
                    return Err(Error::BufferLength {
                        expected: width * height,
                        found: plane.len(),
                    });
                }
                if let Some((index, &value)) = plane.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                    return Err(Error::OutOfRange { index, value });
                }
            }
        }
        Ok(Self {
            width,
            height,
            entries,
            domain,
        })
    }

    /// One-pixel stack from `(t, r, b)` triples.
    pub fn from_scalars(triples: &[(f64, f64, f64)], domain: Domain) -> Result<Self> {
        let entries = triples
            .iter()
            .map(|&(t, r, b)| TriPlanes {
                target: vec![t],
                reference: vec![r],
                background: vec![b],
            })
            .collect();
        Self::new(1, 1, entries, domain)
    }

    pub fn from_trimattes(mattes: &[TriMatte]) -> Result<Self> {
        let first = mattes
            .first()
            .ok_or_else(|| Error::Usage("a tri-stack needs at least one instance".into()))?;
        let (w, h) = first.dims();
        let mut entries = Vec::with_capacity(mattes.len());
        for m in mattes {
            check_dims((w, h), m.dims())?;
            entries.push(TriPlanes {
                target: m.target.values().to_vec(),
                reference: m.reference.values().to_vec(),
                background: m.background.values().to_vec(),
            });
        }
        Self::new(w, h, entries, Domain::Alpha)
    }

    /// Only valid for alpha stacks, whose values are kept in range.
    pub fn to_trimattes(&self) -> Result<Vec<TriMatte>> {
        let plane = |v: &[f64]| AlphaPlane::new(self.width, self.height, v.to_vec());
        self.entries
            .iter()
            .map(|e| TriMatte::new(plane(&e.target)?, plane(&e.reference)?, plane(&e.background)?))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn entries(&self) -> &[TriPlanes] {
        &self.entries
    }

    /// `(t, r, b)` of instance `i` at pixel `p`.
    pub fn triple(&self, i: usize, p: usize) -> (f64, f64, f64) {
        let e = &self.entries[i];
        (e.target[p], e.reference[p], e.background[p])
    }

    /// Reorders instances so that entry `k` of the result is entry `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.len())?;
        Ok(Self {
            entries: perm.iter().map(|&i| self.entries[i].clone()).collect(),
            ..self.clone()
        })
    }

    /// Max-norm distance over all planes.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        check_dims(self.dims(), other.dims())?;
        if self.len() != other.len() {
            return Err(Error::Usage(format!(
                "stacks hold {} and {} instances",
                self.len(),
                other.len()
            )));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.entries.iter().zip(&other.entries) {
            for (pa, pb) in [(&a.target, &b.target), (&a.reference, &b.reference), (&a.background, &b.background)] {
                worst = pa.iter().zip(pb).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
            }
        }
        Ok(worst)
    }
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::Usage(format!("order has {} entries for {n} instances", order.len())));
    }
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Usage(format!("order {order:?} is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

/// Per-pixel sums shared by all instances.
struct Totals {
    t: Vec<f64>,
    r: Vec<f64>,
    b: Vec<f64>,
}

impl Totals {
    /// Sums are taken over sorted values so they do not depend on the
    /// instance order.
    fn of(stack: &TriStack) -> Totals {
        let len = stack.width * stack.height;
        let mut buf = Vec::with_capacity(stack.len());
        let mut sum = |pick: fn(&TriPlanes) -> &Vec<f64>| -> Vec<f64> {
            (0..len)
                .map(|p| {
                    buf.clear();
                    buf.extend(stack.entries.iter().map(|e| pick(e)[p]));
                    buf.sort_unstable_by(f64::total_cmp);
                    buf.iter().sum()
                })
                .collect()
        };
        Totals {
            t: sum(|e| &e.target),
            r: sum(|e| &e.reference),
            b: sum(|e| &e.background),
        }
    }

    fn add(&mut self, e: &TriPlanes, sign: f64) {
        for (acc, plane) in [(&mut self.t, &e.target), (&mut self.r, &e.reference), (&mut self.b, &e.background)] {
            acc.iter_mut().zip(plane).for_each(|(a, v)| *a += sign * v);
        }
    }
}

/// Reduced planes of one instance given the current totals.
fn reduce_one(own: &TriPlanes, totals: &Totals, n: usize, domain: Domain) -> TriPlanes {
    let fix = |v: f64| match domain {
        Domain::Alpha => v.clamp(0.0, 1.0),
        Domain::Unbounded => v,
    };
    let peers = (n - 1) as f64;
    let len = own.target.len();
    let mut out = TriPlanes {
        target: Vec::with_capacity(len),
        reference: Vec::with_capacity(len),
        background: Vec::with_capacity(len),
    };
    for p in 0..len {
        let others_t = totals.t[p] - own.target[p];
        out.target.push(fix(0.5 * (own.target[p] + totals.r[p] / peers - others_t)));
        out.reference.push(fix(0.5 * (own.reference[p] + others_t)));
        out.background.push(fix(totals.b[p] / n as f64));
    }
    out
}

/// One simultaneous application of the three reductions.
pub fn tri_reduce(stack: &TriStack) -> TriStack {
    let n = stack.len();
    if n == 1 {
        return stack.clone();
    }
    let totals = Totals::of(stack);
    TriStack {
        entries: stack
            .entries
            .iter()
            .map(|e| reduce_one(e, &totals, n, stack.domain))
            .collect(),
        ..stack.clone()
    }
}

pub fn parallel_refine(stack: &TriStack, rounds: usize) -> Result<TriStack> {
    if rounds == 0 {
        return Err(Error::Usage("rounds must be at least 1".into()));
    }
    let mut current = tri_reduce(stack);
    for _ in 1..rounds {
        current = tri_reduce(&current);
    }
    Ok(current)
}

/// Sequential refinement; `order` is a 0-based permutation of the instances.
/// Each instance sees the refined values of those updated before it.
pub fn cycle_refine(stack: &TriStack, order: &[usize]) -> Result<TriStack> {
    check_permutation(order, stack.len())?;
    let n = stack.len();
    if n == 1 {
        return Ok(stack.clone());
    }
    let mut current = stack.clone();
    let mut totals = Totals::of(stack);
    for &i in order {
        let updated = reduce_one(&current.entries[i], &totals, n, current.domain);
        totals.add(&current.entries[i], -1.0);
        totals.add(&updated, 1.0);
        current.entries[i] = updated;
    }
    Ok(current)
}

/// Schedule applied by [`refine_patches`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    Parallel { rounds: usize },
    /// 0-based order, repeated `rounds` times.
    Cycle { order: Vec<usize>, rounds: usize },
}

impl Schedule {
    pub fn apply(&self, stack: &TriStack) -> Result<TriStack> {
        match self {
            Schedule::Parallel { rounds } => parallel_refine(stack, *rounds),
            Schedule::Cycle { order, rounds } => {
                if *rounds == 0 {
                    return Err(Error::Usage("rounds must be at least 1".into()));
                }
                let mut current = cycle_refine(stack, order)?;
                for _ in 1..*rounds {
                    current = cycle_refine(&current, order)?;
                }
                Ok(current)
            }
        }
    }
}

/// `|(1/n) sum_i b_i + sum_i t_i - 1|` per pixel.
pub fn error_map(stack: &TriStack) -> ErrorField {
    let totals = Totals::of(stack);
    let n = stack.len() as f64;
    let values = totals
        .t
        .iter()
        .zip(&totals.b)
        .map(|(t, b)| (b / n + t - 1.0).abs())
        .collect();
    ErrorField::from_vec_unchecked(stack.width, stack.height, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub center_row: usize,
    pub center_col: usize,
    /// The window, shifted to stay inside the image and clipped when the
    /// image is smaller than the patch.
    pub window: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchList {
    pub patch_size: usize,
    pub patches: Vec<Patch>,
}

impl PatchList {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn covered_pixels(&self, width: usize, height: usize) -> Vec<bool> {
        let mut covered = vec![false; width * height];
        for p in &self.patches {
            mark(&mut covered, width, &p.window);
        }
        covered
    }
}

fn mark(covered: &mut [bool], width: usize, r: &Rect) {
    for y in r.y0..r.y1 {
        covered[y * width + r.x0..y * width + r.x1].fill(true);
    }
}

fn window_1d(center: usize, size: usize, len: usize) -> (usize, usize) {
    if size >= len {
        return (0, len);
    }
    let start = center.saturating_sub(size / 2).min(len - size);
    (start, start + size)
}

/// Square windows centred on pixels whose error exceeds `threshold`,
/// scanning row-major and skipping centres inside an earlier window.
pub fn select_patches(errors: &ErrorField, threshold: f64, patch_size: usize) -> Result<PatchList> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::Usage(format!("threshold must be nonnegative, got {threshold}")));
    }
    if patch_size == 0 {
        return Err(Error::Usage("patch size must be at least 1".into()));
    }
    let (w, h) = errors.dims();
    let mut covered = vec![false; w * h];
    let mut patches = Vec::new();
    for (p, &e) in errors.values().iter().enumerate() {
        if e <= threshold || covered[p] {
            continue;
        }
        let (row, col) = (p / w, p % w);
        let (x0, x1) = window_1d(col, patch_size, w);
        let (y0, y1) = window_1d(row, patch_size, h);
        let window = Rect { x0, y0, x1, y1 };
        mark(&mut covered, w, &window);
        patches.push(Patch {
            center_row: row,
            center_col: col,
            window,
        });
    }
    Ok(PatchList { patch_size, patches })
}

/// Refines the pixels under `patches`; other pixels keep their input values.
///
/// The reductions act per pixel, so overlapping windows all produce the same
/// value and the row-major last-writer-wins order is immaterial.
pub fn refine_patches(stack: &TriStack, patches: &PatchList, schedule: &Schedule) -> Result<TriStack> {
    let refined = schedule.apply(stack)?;
    if patches.is_empty() {
        return Ok(stack.clone());
    }
    let covered = patches.covered_pixels(stack.width, stack.height);
    let mut out = stack.clone();
    for (dst, src) in out.entries.iter_mut().zip(&refined.entries) {
        for (d, s) in [
            (&mut dst.target, &src.target),
            (&mut dst.reference, &src.reference),
            (&mut dst.background, &src.background),
        ] {
            for (p, _) in covered.iter().enumerate().filter(|(_, c)| **c) {
                d[p] = s[p];
            }
        }
    }
    Ok(out)
}

/// Colour layers matching the three tri-matte components.
#[derive(Debug, Clone, PartialEq)]
pub struct TriLayers {
    pub target: ColorPlane,
    pub reference: ColorPlane,
    pub background: ColorPlane,
}

/// Ground-truth tri-matte and layers of instance `target` in a composed scene.
pub fn scene_trimatte(scene: &LayeredScene, target: usize) -> Result<(TriMatte, TriLayers)> {
    let colors: Vec<&ColorPlane> = scene.foregrounds().iter().map(|l| l.color()).collect();
    trimatte_with_layers(scene.effective(), &colors, scene.background(), target)
}

/// Ground-truth tri-matte of `target` together with matching colour layers.
///
/// `colors` are the canvas-sized instance layers in the order of
/// `effective`. The reference layer is the alpha-weighted mean of the other
/// instances' colours, so `a_r F_r` reproduces their joint contribution.
pub fn trimatte_with_layers(
    effective: &InstanceMatteSet,
    colors: &[&ColorPlane],
    background: &ColorPlane,
    target: usize,
) -> Result<(TriMatte, TriLayers)> {
    if colors.len() != effective.len() {
        return Err(Error::Usage(format!(
            "{} colour layers for {} instances",
            colors.len(),
            effective.len()
        )));
    }
    let matte = trimatte_gt(effective, target)?;
    let (w, h) = matte.dims();
    check_dims((w, h), background.dims())?;
    let c = colors
        .iter()
        .map(|l| l.channels())
        .chain(std::iter::once(background.channels()))
        .max()
        .unwrap_or(1);
    let mut weighted = vec![0.0; w * h * c];
    for (j, (layer, eff)) in colors.iter().zip(effective.planes()).enumerate() {
        check_dims((w, h), layer.dims())?;
        if j == target {
            continue;
        }
        let color = layer.with_channels(c)?;
        for (k, v) in weighted.iter_mut().enumerate() {
            *v += eff.values()[k / c] * color.data()[k];
        }
    }
    let reference_alpha = matte.reference.values();
    let reference: Vec<f64> = weighted
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let a = reference_alpha[k / c];
            if a > 0.0 { (v / a).clamp(0.0, 1.0) } else { 0.0 }
        })
        .collect();
    let layers = TriLayers {
        target: colors[target].with_channels(c)?,
        reference: ColorPlane::new(w, h, c, reference)?,
        background: background.with_channels(c)?,
    };
    Ok((matte, layers))
}

/// Which terms [`constraint_losses`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossTerms {
    pub alpha: bool,
    pub laplacian: bool,
    pub composition: bool,
    pub multi_alpha: bool,
}

impl Default for LossTerms {
    fn default() -> Self {
        Self {
            alpha: true,
            laplacian: true,
            composition: true,
            multi_alpha: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossInputs<'a> {
    pub gt: Option<&'a TriMatte>,
    pub layers: Option<&'a TriLayers>,
    pub image: Option<&'a ColorPlane>,
}

/// Loss terms; `None` where a term was not requested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintLosses {
    pub l_alpha: Option<f64>,
    pub l_lap: Option<f64>,
    pub l_mc: Option<f64>,
    pub l_malpha: Option<f64>,
    pub total: f64,
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Supervision and constraint losses of a predicted tri-matte.
pub fn constraint_losses(
    pred: &TriMatte,
    inputs: LossInputs<'_>,
    terms: LossTerms,
    pyramid: &PyramidOptions,
) -> Result<ConstraintLosses> {
    let dims = pred.dims();
    let gt = match (terms.alpha || terms.laplacian, inputs.gt) {
        (true, None) => {
            return Err(Error::Usage("alpha and laplacian losses need a ground-truth tri-matte".into()));
        }
        (true, Some(gt)) => {
            check_dims(dims, gt.dims())?;
            Some(gt)
        }
        (false, _) => None,
    };
    let pairs = |gt: &'_ TriMatte| {
        pred.planes()
            .into_iter()
            .zip(gt.planes())
            .map(|(p, g)| (p.values().to_vec(), g.values().to_vec()))
            .collect::<Vec<_>>()
    };

    let l_alpha = match gt {
        Some(gt) if terms.alpha => Some(pairs(gt).iter().map(|(p, g)| mean_abs_diff(p, g)).sum()),
        _ => None,
    };
    let l_lap = match gt {
        Some(gt) if terms.laplacian => {
            let mut sum = 0.0;
            for (p, g) in pairs(gt) {
                sum += laplacian_loss(dims, &p, &g, pyramid)?;
            }
            Some(sum)
        }
        _ => None,
    };
    let l_mc = if terms.composition {
        let (Some(layers), Some(image)) = (inputs.layers, inputs.image) else {
            return Err(Error::Usage("the composition loss needs layers and an image".into()));
        };
        let c = image.channels();
        for plane in [&layers.target, &layers.reference, &layers.background] {
            check_dims(dims, plane.dims())?;
            if plane.channels() != c {
                return Err(Error::Usage(format!(
                    "layer has {} channels, image has {c}",
                    plane.channels()
                )));
            }
        }
        check_dims(dims, image.dims())?;
        let (t, r, b) = (pred.target.values(), pred.reference.values(), pred.background.values());
        let sum: f64 = image
            .data()
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let p = k / c;
                let recon = t[p] * layers.target.data()[k]
                    + r[p] * layers.reference.data()[k]
                    + b[p] * layers.background.data()[k];
                (recon - i).abs()
            })
            .sum();
        Some(sum / image.data().len() as f64)
    } else {
        None
    };
    let l_malpha = terms.multi_alpha.then(|| {
        let (t, r, b) = (pred.target.values(), pred.reference.values(), pred.background.values());
        t.iter()
            .zip(r)
            .zip(b)
            .map(|((t, r), b)| (t + r + b - 1.0).abs())
            .sum::<f64>()
            / t.len() as f64
    });
    let total = [l_alpha, l_lap, l_mc, l_malpha].iter().flatten().sum();
    Ok(ConstraintLosses {
        l_alpha,
        l_lap,
        l_mc,
        l_malpha,
        total,
    })
}
