//! Layered composition of foreground instances over a background.
//!
//! Layers are composited bottom to top with the over operator
//! `I_i = a_i F_i + (1 - a_i) I_{i-1}`. Unrolling the recursion gives the
//! effective (post-occlusion) alpha of layer `j` as
//! `a'_j = a_j * prod_{k > j} (1 - a_k)` and of the background as
//! `a'_0 = prod_j (1 - a_j)`, so the composite is `sum_i a'_i L_i` and the
//! effective alphas form a partition of unity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::plane::{AlphaPlane, ColorPlane, InstanceMatteSet};

/// A colour plane together with its raw (pre-occlusion) alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    color: ColorPlane,
    alpha: AlphaPlane,
}

impl Layer {
    pub fn new(color: ColorPlane, alpha: AlphaPlane) -> Result<Self> {
        check_dims(alpha.dims(), color.dims())?;
        Ok(Self { color, alpha })
    }

    pub fn color(&self) -> &ColorPlane {
        &self.color
    }

    pub fn alpha(&self) -> &AlphaPlane {
        &self.alpha
    }

    pub fn dims(&self) -> (usize, usize) {
        self.alpha.dims()
    }
}

/// One over-operator step: `alpha * fg + (1 - alpha) * under`.
pub fn composite_step(fg: &Layer, under: &ColorPlane) -> Result<ColorPlane> {
    check_dims(under.dims(), fg.dims())?;
    if fg.color.channels() != under.channels() {
        return Err(Error::Usage(format!(
            "channel mismatch: layer has {}, canvas has {}",
            fg.color.channels(),
            under.channels()
        )));
    }
    let c = under.channels();
    let data = under
        .data()
        .iter()
        .zip(fg.color.data())
        .enumerate()
        .map(|(k, (&u, &f))| {
            let a = fg.alpha.values()[k / c];
            a * f + (1.0 - a) * u
        })
        .collect();
    Ok(ColorPlane::from_vec_unchecked(
        under.width(),
        under.height(),
        c,
        data,
    ))
}

/// Effective alphas of stacked layers plus the background's share.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveAlphas {
    /// Bottom to top, ids `0..n`.
    pub instances: InstanceMatteSet,
    pub background: AlphaPlane,
}

/// Effective alphas of `raw` layers listed bottom to top.
pub fn effective_alphas(width: usize, height: usize, raw: &[AlphaPlane]) -> Result<EffectiveAlphas> {
    for plane in raw {
        check_dims((width, height), plane.dims())?;
    }
    let len = width * height;
    if len == 0 {
        return Err(Error::EmptyGrid { width, height });
    }
    // running product of (1 - a_k) over the layers above
    let mut above = vec![1.0; len];
    let mut effective: Vec<Vec<f64>> = vec![Vec::new(); raw.len()];
    for (j, plane) in raw.iter().enumerate().rev() {
        let a = plane.values();
        effective[j] = a.iter().zip(&above).map(|(&a, &p)| a * p).collect();
        above.iter_mut().zip(a).for_each(|(p, &a)| *p *= 1.0 - a);
    }
    let instances = InstanceMatteSet::from_planes(
        effective
            .into_iter()
            .map(|v| AlphaPlane::from_vec_unchecked(width, height, v))
            .collect(),
    )?;
    Ok(EffectiveAlphas {
        instances,
        background: AlphaPlane::from_vec_unchecked(width, height, above),
    })
}

/// Where a source foreground ended up on the canvas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Index into the foreground list handed to the composer.
    pub source: usize,
    /// Left/top of the resampled foreground; may be negative for fixed layouts.
    pub x: i64,
    pub y: i64,
    pub width: usize,
    pub height: usize,
    /// Resampled height over source height.
    pub scale: f64,
}

/// A composed multi-instance scene with its exact ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredScene {
    background: ColorPlane,
    /// Canvas-sized layers, bottom to top.
    foregrounds: Vec<Layer>,
    effective: EffectiveAlphas,
    composite: ColorPlane,
    placements: Vec<Placement>,
}

impl LayeredScene {
    /// Builds a scene from canvas-sized layers listed bottom to top; the
    /// composite is produced by iterating the over operator.
    pub fn assemble(background: ColorPlane, foregrounds: Vec<Layer>, placements: Vec<Placement>) -> Result<Self> {
        let (w, h) = background.dims();
        let mut composite = background.clone();
        for layer in &foregrounds {
            composite = composite_step(layer, &composite)?;
        }
        let raw: Vec<AlphaPlane> = foregrounds.iter().map(|l| l.alpha.clone()).collect();
        let effective = effective_alphas(w, h, &raw)?;
        Ok(Self {
            background,
            foregrounds,
            effective,
            composite,
            placements,
        })
    }

    pub fn background(&self) -> &ColorPlane {
        &self.background
    }

    pub fn foregrounds(&self) -> &[Layer] {
        &self.foregrounds
    }

    pub fn effective(&self) -> &InstanceMatteSet {
        &self.effective.instances
    }

    pub fn background_alpha(&self) -> &AlphaPlane {
        &self.effective.background
    }

    pub fn composite(&self) -> &ColorPlane {
        &self.composite
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    pub fn dims(&self) -> (usize, usize) {
        self.background.dims()
    }

    /// `sum_i a'_i L_i` with the background as layer 0.
    pub fn closed_form_composite(&self) -> ColorPlane {
        weighted_sum(
            std::iter::once((&self.effective.background, &self.background)).chain(
                self.effective
                    .instances
                    .planes()
                    .zip(self.foregrounds.iter().map(|l| &l.color)),
            ),
        )
    }

    /// Largest deviation of `a'_0 + sum_i a'_i` from 1.
    pub fn partition_error(&self) -> f64 {
        partition_error(&self.effective.background, self.effective.instances.planes())
    }
}

pub(crate) fn weighted_sum<'a>(terms: impl Iterator<Item = (&'a AlphaPlane, &'a ColorPlane)>) -> ColorPlane {
    let mut out: Option<(usize, usize, usize, Vec<f64>)> = None;
    for (alpha, color) in terms {
        let c = color.channels();
        let acc = out.get_or_insert_with(|| (color.width(), color.height(), c, vec![0.0; color.data().len()]));
        for (k, v) in acc.3.iter_mut().enumerate() {
            *v += alpha.values()[k / c] * color.data()[k];
        }
    }
    let (w, h, c, data) = out.expect("at least the background term");
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    ColorPlane::from_vec_unchecked(w, h, c, data)
}

/// Largest pixelwise deviation of the summed alphas from 1.
pub fn partition_error<'a>(background: &AlphaPlane, instances: impl Iterator<Item = &'a AlphaPlane>) -> f64 {
    let mut sum = background.values().to_vec();
    for plane in instances {
        sum.iter_mut().zip(plane.values()).for_each(|(s, v)| *s += v);
    }
    sum.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
}

/// Randomised layout for [`compose_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomPlacement {
    /// Foreground height as a fraction of the background height.
    pub scale_range: (f64, f64),
    /// Overlap of horizontally adjacent instances as a fraction of the
    /// narrower one's width; negative values leave a gap.
    pub overlap_range: (f64, f64),
    /// Reject layouts where an instance keeps less than this share of its
    /// alpha mass after occlusion.
    pub min_visible: f64,
    pub max_tries: usize,
    /// Allowed number of foregrounds per scene (inclusive).
    pub count_range: (usize, usize),
}

impl Default for RandomPlacement {
    fn default() -> Self {
        Self {
            scale_range: (0.4, 1.0),
            overlap_range: (-0.3, 0.5),
            min_visible: 0.05,
            max_tries: 100,
            count_range: (2, 5),
        }
    }
}

/// Explicit position and scale (relative to the source size) of one foreground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPlacement {
    pub x: i64,
    pub y: i64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlacementPolicy {
    Random(RandomPlacement),
    /// One entry per foreground, in layer order; no rejection sampling.
    Fixed(Vec<FixedPlacement>),
}

impl Default for PlacementPolicy {
    fn default() -> Self {
        PlacementPolicy::Random(RandomPlacement::default())
    }
}

/// Composes `foregrounds` (bottom to top) over `background`.
///
/// Deterministic for a given seed. Colour channel counts are unified by
/// replicating single-channel layers.
pub fn compose_scene(
    foregrounds: &[Layer],
    background: &ColorPlane,
    policy: &PlacementPolicy,
    seed: u64,
) -> Result<LayeredScene> {
    let channels = foregrounds
        .iter()
        .map(|l| l.color.channels())
        .chain(std::iter::once(background.channels()))
        .max()
        .unwrap_or(1);
    let background = background.with_channels(channels)?;
    match policy {
        PlacementPolicy::Fixed(spots) => {
            if spots.len() != foregrounds.len() {
                return Err(Error::Usage(format!(
                    "{} placements for {} foregrounds",
                    spots.len(),
                    foregrounds.len()
                )));
            }
            let mut layers = Vec::with_capacity(spots.len());
            let mut placements = Vec::with_capacity(spots.len());
            for (source, (fg, spot)) in foregrounds.iter().zip(spots).enumerate() {
                if spot.scale.is_nan() || spot.scale <= 0.0 {
                    return Err(Error::Usage(format!("scale must be positive, got {}", spot.scale)));
                }
                let h = ((fg.dims().1 as f64 * spot.scale).round() as usize).max(1);
                let w = ((fg.dims().0 as f64 * spot.scale).round() as usize).max(1);
                let placement = Placement {
                    source,
                    x: spot.x,
                    y: spot.y,
                    width: w,
                    height: h,
                    scale: h as f64 / fg.dims().1 as f64,
                };
                layers.push(place_layer(fg, &placement, &background, channels)?);
                placements.push(placement);
            }
            LayeredScene::assemble(background, layers, placements)
        }
        PlacementPolicy::Random(options) => compose_random(foregrounds, &background, channels, options, seed),
    }
}

fn compose_random(
    foregrounds: &[Layer],
    background: &ColorPlane,
    channels: usize,
    options: &RandomPlacement,
    seed: u64,
) -> Result<LayeredScene> {
    let (lo, hi) = options.count_range;
    if foregrounds.len() < lo || foregrounds.len() > hi {
        return Err(Error::Usage(format!(
            "scenes take {lo} to {hi} foregrounds, got {}",
            foregrounds.len()
        )));
    }
    let (s_lo, s_hi) = options.scale_range;
    if !(s_lo > 0.0 && s_lo <= s_hi && s_hi <= 1.0) {
        return Err(Error::Usage(format!("invalid scale range {:?}", options.scale_range)));
    }
    let (o_lo, o_hi) = options.overlap_range;
    if !(o_lo <= o_hi && o_hi < 1.0) {
        return Err(Error::Usage(format!("invalid overlap range {:?}", options.overlap_range)));
    }
    let (bw, bh) = background.dims();
    let sized = |fg: &Layer, s: f64| {
        let h = ((s * bh as f64).round() as usize).clamp(1, bh);
        let factor = h as f64 / fg.dims().1 as f64;
        let w = ((fg.dims().0 as f64 * factor).round() as usize).max(1);
        (w, h)
    };
    for (i, fg) in foregrounds.iter().enumerate() {
        let (w, _) = sized(fg, s_lo);
        if w > bw {
            return Err(Error::Placement(format!(
                "foreground {i} is {w} px wide at minimum scale, background is {bw} px"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..options.max_tries.max(1) {
        let sizes: Vec<(usize, usize)> = foregrounds
            .iter()
            .map(|fg| sized(fg, if s_lo < s_hi { rng.random_range(s_lo..=s_hi) } else { s_lo }))
            .collect();
        let mut order: Vec<usize> = (0..foregrounds.len()).collect();
        order.shuffle(&mut rng);

        // left edges along the horizontal order
        let mut lefts = vec![0i64; foregrounds.len()];
        let mut cursor = 0i64;
        let mut prev: Option<usize> = None;
        for &i in &order {
            if let Some(p) = prev {
                let ratio = if o_lo < o_hi { rng.random_range(o_lo..=o_hi) } else { o_lo };
                let narrow = sizes[p].0.min(sizes[i].0) as f64;
                cursor = lefts[p] + sizes[p].0 as i64 - (ratio * narrow).round() as i64;
            }
            lefts[i] = cursor;
            prev = Some(i);
        }
        let min_left = lefts.iter().copied().min().unwrap_or(0);
        let max_right = order
            .iter()
            .map(|&i| lefts[i] + sizes[i].0 as i64)
            .max()
            .unwrap_or(0);
        let span = max_right - min_left;
        if span > bw as i64 {
            continue;
        }
        let offset = rng.random_range(0..=(bw as i64 - span)) - min_left;

        let mut layers = Vec::with_capacity(foregrounds.len());
        let mut placements = Vec::with_capacity(foregrounds.len());
        for (source, fg) in foregrounds.iter().enumerate() {
            let (w, h) = sizes[source];
            let y = rng.random_range(0..=(bh - h)) as i64;
            let placement = Placement {
                source,
                x: lefts[source] + offset,
                y,
                width: w,
                height: h,
                scale: h as f64 / fg.dims().1 as f64,
            };
            layers.push(place_layer(fg, &placement, background, channels)?);
            placements.push(placement);
        }
        let scene = LayeredScene::assemble(background.clone(), layers, placements)?;
        let visible = scene
            .foregrounds
            .iter()
            .zip(scene.effective.instances.planes())
            .all(|(layer, eff)| {
                let raw: f64 = layer.alpha.values().iter().sum();
                let kept: f64 = eff.values().iter().sum();
                raw > 0.0 && kept >= options.min_visible * raw
            });
        if visible {
            return Ok(scene);
        }
    }
    Err(Error::Placement(format!(
        "no admissible layout after {} tries",
        options.max_tries
    )))
}

/// Resamples `fg` to the placement size and pastes it into a canvas-sized layer.
fn place_layer(fg: &Layer, placement: &Placement, canvas: &ColorPlane, channels: usize) -> Result<Layer> {
    let (cw, ch) = canvas.dims();
    let color = fg.color.with_channels(channels)?;
    let alpha = resize_bilinear(fg.alpha.values(), fg.dims(), 1, (placement.width, placement.height));
    let color = resize_bilinear(color.data(), fg.dims(), channels, (placement.width, placement.height));

    let mut out_alpha = vec![0.0; cw * ch];
    let mut out_color = vec![0.0; cw * ch * channels];
    for sy in 0..placement.height {
        let y = placement.y + sy as i64;
        if y < 0 || y >= ch as i64 {
            continue;
        }
        for sx in 0..placement.width {
            let x = placement.x + sx as i64;
            if x < 0 || x >= cw as i64 {
                continue;
            }
            let dst = y as usize * cw + x as usize;
            let src = sy * placement.width + sx;
            out_alpha[dst] = alpha[src];
            out_color[dst * channels..(dst + 1) * channels]
                .copy_from_slice(&color[src * channels..(src + 1) * channels]);
        }
    }
    Layer::new(
        ColorPlane::from_vec_unchecked(cw, ch, channels, out_color),
        AlphaPlane::from_vec_unchecked(cw, ch, out_alpha),
    )
}

/// Bilinear resampling with pixel-centre alignment; an identity when the
/// size is unchanged. Outputs are convex combinations of inputs.
pub(crate) fn resize_bilinear(src: &[f64], (sw, sh): (usize, usize), channels: usize, (dw, dh): (usize, usize)) -> Vec<f64> {
    let coord = |d: usize, dn: usize, sn: usize| {
        let s = ((d as f64 + 0.5) * sn as f64 / dn as f64 - 0.5).clamp(0.0, (sn - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(sn - 1);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..dw).map(|x| coord(x, dw, sw)).collect();
    let mut out = Vec::with_capacity(dw * dh * channels);
    for y in 0..dh {
        let (y0, y1, fy) = coord(y, dh, sh);
        for &(x0, x1, fx) in &xs {
            for c in 0..channels {
                let at = |x: usize, y: usize| src[(y * sw + x) * channels + c];
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                out.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
            }
        }
    }
    out
}

/// Histogram of how many layers (background included) are visible at each pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityAudit {
    /// `histogram[k]` = number of pixels with exactly `k` positive effective alphas.
    pub histogram: Vec<usize>,
    pub pixels: usize,
    pub fraction_above_2: f64,
    pub fraction_above_3: f64,
}

impl SparsityAudit {
    pub fn max_count(&self) -> usize {
        self.histogram.iter().rposition(|&c| c > 0).unwrap_or(0)
    }

    /// Merges several audits into one over all their pixels.
    pub fn combine<'a>(audits: impl IntoIterator<Item = &'a SparsityAudit>) -> SparsityAudit {
        let mut histogram: Vec<usize> = Vec::new();
        for a in audits {
            if histogram.len() < a.histogram.len() {
                histogram.resize(a.histogram.len(), 0);
            }
            histogram.iter_mut().zip(&a.histogram).for_each(|(h, c)| *h += c);
        }
        SparsityAudit::from_histogram(histogram)
    }

    fn from_histogram(histogram: Vec<usize>) -> SparsityAudit {
        let pixels: usize = histogram.iter().sum();
        let above = |k: usize| {
            if pixels == 0 {
                0.0
            } else {
                histogram.iter().skip(k + 1).sum::<usize>() as f64 / pixels as f64
            }
        };
        SparsityAudit {
            fraction_above_2: above(2),
            fraction_above_3: above(3),
            histogram,
            pixels,
        }
    }
}

pub fn sparsity_audit(scene: &LayeredScene) -> SparsityAudit {
    sparsity_audit_planes(scene.background_alpha(), scene.effective().planes())
}

/// Audit over explicit effective alphas, e.g. ones read back from disk.
pub fn sparsity_audit_planes<'a>(background: &AlphaPlane, instances: impl Iterator<Item = &'a AlphaPlane>) -> SparsityAudit {
    let mut counts: Vec<usize> = background.values().iter().map(|&v| (v > 0.0) as usize).collect();
    let mut layers = 1;
    for plane in instances {
        layers += 1;
        counts.iter_mut().zip(plane.values()).for_each(|(c, &v)| *c += (v > 0.0) as usize);
    }
    let mut histogram = vec![0usize; layers + 1];
    for c in counts {
        histogram[c] += 1;
    }
    SparsityAudit::from_histogram(histogram)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(w: usize, h: usize, v: f64) -> AlphaPlane {
        AlphaPlane::filled(w, h, v).unwrap()
    }

    fn gray(w: usize, h: usize, v: f64) -> ColorPlane {
        ColorPlane::filled(w, h, 1, v).unwrap()
    }

    fn square_layer(size: usize, value: f64) -> Layer {
        Layer::new(gray(size, size, value), uniform(size, size, 1.0)).unwrap()
    }

    #[test]
    fn composite_step_examples() {
        let under = gray(3, 2, 0.25);
        let opaque = Layer::new(gray(3, 2, 0.8), uniform(3, 2, 1.0)).unwrap();
        assert_eq!(composite_step(&opaque, &under).unwrap(), gray(3, 2, 0.8));
        let clear = Layer::new(gray(3, 2, 0.8), uniform(3, 2, 0.0)).unwrap();
        assert_eq!(composite_step(&clear, &under).unwrap(), under);
        let half = Layer::new(gray(1, 1, 1.0), uniform(1, 1, 0.5)).unwrap();
        assert_eq!(composite_step(&half, &gray(1, 1, 0.0)).unwrap().data(), &[0.5]);
    }

    #[test]
    fn composite_step_rejects_mismatch() {
        let l = Layer::new(gray(3, 2, 0.8), uniform(3, 2, 1.0)).unwrap();
        assert!(matches!(composite_step(&l, &gray(2, 2, 0.0)), Err(Error::Dimension { .. })));
        assert!(Layer::new(gray(3, 2, 0.8), uniform(2, 2, 1.0)).is_err());
    }

    #[test]
    fn effective_alphas_examples() {
        let a = AlphaPlane::new(3, 1, vec![0.0, 0.3, 1.0]).unwrap();
        let e = effective_alphas(3, 1, std::slice::from_ref(&a)).unwrap();
        assert_eq!(e.instances.get(0).unwrap().1, &a);
        assert_eq!(e.background.values(), &[1.0, 0.7, 0.0]);

        let e = effective_alphas(2, 2, &[uniform(2, 2, 0.6), uniform(2, 2, 1.0)]).unwrap();
        assert!(e.instances.get(0).unwrap().1.is_all_zero());

        let e = effective_alphas(1, 1, &[uniform(1, 1, 0.5), uniform(1, 1, 0.5)]).unwrap();
        let planes: Vec<f64> = e.instances.planes().map(|p| p.values()[0]).collect();
        assert_eq!(planes, vec![0.25, 0.5]);
        assert_eq!(e.background.values(), &[0.25]);

        let e = effective_alphas(2, 1, &[]).unwrap();
        assert!(e.instances.is_empty());
        assert_eq!(e.background.values(), &[1.0, 1.0]);
    }

    #[test]
    fn disjoint_squares_keep_their_alphas() {
        let bg = gray(40, 20, 0.1);
        let fgs = vec![square_layer(10, 0.9), square_layer(10, 0.6)];
        let policy = PlacementPolicy::Fixed(vec![
            FixedPlacement { x: 2, y: 5, scale: 1.0 },
            FixedPlacement { x: 25, y: 5, scale: 1.0 },
        ]);
        let scene = compose_scene(&fgs, &bg, &policy, 0).unwrap();
        for (layer, eff) in scene.foregrounds().iter().zip(scene.effective().planes()) {
            assert_eq!(layer.alpha(), eff);
        }
        let audit = sparsity_audit(&scene);
        assert_eq!(audit.fraction_above_2, 0.0);
        assert_eq!(audit.max_count(), 1);
        assert!(scene.partition_error() < 1e-12);
    }

    #[test]
    fn full_overlap_hides_the_lower_instance() {
        let bg = gray(12, 12, 0.0);
        let fgs = vec![square_layer(10, 0.9), square_layer(10, 0.6)];
        let spot = FixedPlacement { x: 1, y: 1, scale: 1.0 };
        let scene = compose_scene(&fgs, &bg, &PlacementPolicy::Fixed(vec![spot, spot]), 0).unwrap();
        assert!(scene.effective().get(0).unwrap().1.is_all_zero());
    }

    #[test]
    fn random_scenes_are_deterministic_and_valid() {
        let bg = gray(120, 60, 0.3);
        let blob = Layer::new(
            gray(30, 50, 0.8),
            AlphaPlane::from_fn(30, 50, |x, y| {
                let dx = (x as f64 - 14.5) / 14.0;
                let dy = (y as f64 - 24.5) / 24.0;
                (1.5 - 1.5 * (dx * dx + dy * dy)).clamp(0.0, 1.0)
            })
            .unwrap(),
        )
        .unwrap();
        let fgs = vec![blob.clone(), blob.clone(), blob];
        let policy = PlacementPolicy::default();
        let a = compose_scene(&fgs, &bg, &policy, 11).unwrap();
        let b = compose_scene(&fgs, &bg, &policy, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.partition_error() < 1e-12);
        assert!(a.closed_form_composite().max_abs_diff(a.composite()).unwrap() < 1e-12);
        for p in a.placements() {
            assert!(p.x >= 0 && p.x as usize + p.width <= 120);
            assert!(p.height >= 24 && p.height <= 60);
        }
        let c = compose_scene(&fgs, &bg, &policy, 12).unwrap();
        assert_ne!(a.placements(), c.placements());
    }

    #[test]
    fn random_policy_enforces_counts_and_fit() {
        let bg = gray(50, 50, 0.3);
        let one = vec![square_layer(10, 0.5)];
        assert!(matches!(
            compose_scene(&one, &bg, &PlacementPolicy::default(), 0),
            Err(Error::Usage(_))
        ));
        // 4:1 aspect at minimum scale is still 80 px wide on a 50 px canvas
        let wide = Layer::new(gray(40, 10, 0.5), uniform(40, 10, 1.0)).unwrap();
        let err = compose_scene(&[wide.clone(), wide], &bg, &PlacementPolicy::default(), 0).unwrap_err();
        assert!(matches!(err, Error::Placement(_)));
    }

    #[test]
    fn audit_counts_overlaps() {
        // three translucent layers over one pixel: background + 3
        let bg = gray(1, 1, 0.0);
        let layers: Vec<Layer> = (0..3)
            .map(|_| Layer::new(gray(1, 1, 0.5), uniform(1, 1, 0.5)).unwrap())
            .collect();
        let scene = LayeredScene::assemble(bg, layers, vec![]).unwrap();
        let audit = sparsity_audit(&scene);
        assert_eq!(audit.histogram, vec![0, 0, 0, 0, 1]);
        assert_eq!(audit.fraction_above_3, 1.0);

        let single = LayeredScene::assemble(
            gray(4, 1, 0.0),
            vec![Layer::new(gray(4, 1, 1.0), AlphaPlane::new(4, 1, vec![0.0, 0.5, 1.0, 0.2]).unwrap()).unwrap()],
            vec![],
        )
        .unwrap();
        assert!(sparsity_audit(&single).max_count() <= 2);
    }

    #[test]
    fn resize_identity_and_range() {
        let src: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        assert_eq!(resize_bilinear(&src, (4, 3), 1, (4, 3)), src);
        let up = resize_bilinear(&src, (4, 3), 1, (9, 7));
        assert!(up.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(up.len(), 63);
    }

    #[test]
    fn channel_broadcast() {
        let bg = ColorPlane::filled(4, 4, 3, 0.2).unwrap();
        let fg = square_layer(2, 0.7);
        let scene = compose_scene(
            &[fg.clone(), fg],
            &bg,
            &PlacementPolicy::Fixed(vec![FixedPlacement { x: 0, y: 0, scale: 1.0 }, FixedPlacement { x: 2, y: 2, scale: 1.0 }]),
            0,
        )
        .unwrap();
        assert_eq!(scene.composite().channels(), 3);
        assert_eq!(&scene.composite().data()[0..3], &[0.7, 0.7, 0.7]);
    }
}
