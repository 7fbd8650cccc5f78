//! Instance matching and instance matting quality (IMQ) scoring.
//!
//! Predictions and ground truths are reduced to their supports (`alpha > 0`),
//! matched one-to-one by an optimal assignment over the IoU matrix, and
//! assigned pairs whose IoU is strictly above the threshold become true
//! positives. Each true positive contributes a similarity in `[0, 1]`;
//! IMQ divides their sum by `|TP| + |FP|/2 + |FN|/2`. All scores are on a
//! 0–100 scale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{assign, ScoreMatrix};
use crate::config::{Aggregation, ErrorKind, ImqConfig};
use crate::error::{check_dims, Error, Result};
use crate::metrics::{pair_error, similarity};
use crate::plane::{iou, quantize, InstanceMatteSet};

/// IoU of every prediction (rows) against every ground truth (columns).
pub fn iou_matrix(preds: &InstanceMatteSet, gts: &InstanceMatteSet) -> Result<ScoreMatrix> {
    if let (Some(p), Some(g)) = (preds.dims(), gts.dims()) {
        check_dims(g, p)?;
    }
    let pred_masks: Vec<_> = preds.planes().map(quantize).collect();
    let gt_masks: Vec<_> = gts.planes().map(quantize).collect();
    let mut data = Vec::with_capacity(pred_masks.len() * gt_masks.len());
    for p in &pred_masks {
        for g in &gt_masks {
            data.push(iou(p, g)?);
        }
    }
    ScoreMatrix::new(pred_masks.len(), gt_masks.len(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred_index: usize,
    pub gt_index: usize,
    pub pred_id: u32,
    pub gt_id: u32,
    pub iou: f64,
}

/// Outcome of matching one image's predictions against its ground truths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// Every assigned pair, true positive or not.
    pub pairs: Vec<MatchedPair>,
    pub true_positives: Vec<MatchedPair>,
    /// Prediction ids left unmatched or matched below the threshold.
    pub false_positives: Vec<u32>,
    /// Non-empty ground-truth ids left unmatched or matched below the threshold.
    pub false_negatives: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    /// `|TP| + |FP|/2 + |FN|/2`.
    pub fn denominator(&self) -> f64 {
        self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl MatchResult {
    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.true_positives.len(),
            fp: self.false_positives.len(),
            fn_: self.false_negatives.len(),
        }
    }
}

/// Splits an assignment into TP/FP/FN.
///
/// All-zero ground truths are dropped entirely: they never count as false
/// negatives, and a prediction assigned to one is a false positive.
pub fn classify(
    preds: &InstanceMatteSet,
    gts: &InstanceMatteSet,
    matrix: &ScoreMatrix,
    assignment: &[(usize, usize)],
    iou_threshold: f64,
) -> MatchResult {
    let pred_ids: Vec<u32> = preds.ids().collect();
    let gt_ids: Vec<u32> = gts.ids().collect();
    let gt_present: Vec<bool> = gts.planes().map(|p| !p.is_all_zero()).collect();

    let mut pred_tp = vec![false; pred_ids.len()];
    let mut gt_tp = vec![false; gt_ids.len()];
    let mut result = MatchResult::default();
    for &(r, c) in assignment {
        let pair = MatchedPair {
            pred_index: r,
            gt_index: c,
            pred_id: pred_ids[r],
            gt_id: gt_ids[c],
            iou: matrix.get(r, c),
        };
        result.pairs.push(pair);
        if gt_present[c] && pair.iou > iou_threshold {
            pred_tp[r] = true;
            gt_tp[c] = true;
            result.true_positives.push(pair);
        }
    }
    result.false_positives = pred_ids
        .iter()
        .zip(&pred_tp)
        .filter(|(_, &tp)| !tp)
        .map(|(&id, _)| id)
        .collect();
    result.false_negatives = gt_ids
        .iter()
        .zip(gt_tp.iter().zip(&gt_present))
        .filter(|(_, (&tp, &present))| present && !tp)
        .map(|(&id, _)| id)
        .collect();
    result
}

/// Matches `preds` against the non-empty ground truths of `gts`.
pub fn match_instances(
    preds: &InstanceMatteSet,
    gts: &InstanceMatteSet,
    iou_threshold: f64,
) -> Result<MatchResult> {
    let kept = InstanceMatteSet::new(
        gts.iter()
            .filter(|(_, p)| !p.is_all_zero())
            .map(|(id, p)| (id, p.clone()))
            .collect(),
    )?;
    let matrix = iou_matrix(preds, &kept)?;
    let assignment = assign(&matrix);
    let mut result = classify(preds, &kept, &matrix, &assignment, iou_threshold);
    // report indices into the caller's ground-truth set
    let index_of: Vec<usize> = gts
        .iter()
        .enumerate()
        .filter(|(_, (_, p))| !p.is_all_zero())
        .map(|(i, _)| i)
        .collect();
    for pair in result.pairs.iter_mut().chain(result.true_positives.iter_mut()) {
        pair.gt_index = index_of[pair.gt_index];
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSimilarity {
    pub pred_id: u32,
    pub gt_id: u32,
    pub error: f64,
    pub similarity: f64,
}

/// IMQ for one error kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImqScore {
    pub kind: ErrorKind,
    pub imq: f64,
    pub mq: f64,
    pub rq: f64,
    pub counts: Counts,
    pub similarities: Vec<PairSimilarity>,
    /// No predictions and no ground truths: every score is 100 by convention.
    pub vacuous: bool,
    /// No true positives: the matting quality is undefined and reported as 0.
    pub mq_undefined: bool,
}

impl ImqScore {
    pub fn similarity_sum(&self) -> f64 {
        self.similarities.iter().map(|s| s.similarity).sum()
    }
}

fn imq_from_counts(similarity_sum: f64, counts: Counts) -> (f64, bool) {
    let d = counts.denominator();
    if d == 0.0 {
        (100.0, true)
    } else {
        (100.0 * similarity_sum / d, false)
    }
}

/// Scores the true positives of `matched` with one error kind.
pub fn imq(
    matched: &MatchResult,
    preds: &InstanceMatteSet,
    gts: &InstanceMatteSet,
    kind: ErrorKind,
    config: &ImqConfig,
) -> Result<ImqScore> {
    let mut similarities = Vec::with_capacity(matched.true_positives.len());
    for pair in &matched.true_positives {
        let (_, pred) = preds
            .get(pair.pred_index)
            .ok_or_else(|| Error::Usage("match refers to a missing prediction".into()))?;
        let (_, gt) = gts
            .get(pair.gt_index)
            .ok_or_else(|| Error::Usage("match refers to a missing ground truth".into()))?;
        let err = pair_error(kind, pred, gt, config)?;
        similarities.push(PairSimilarity {
            pred_id: pair.pred_id,
            gt_id: pair.gt_id,
            error: err.value,
            similarity: similarity(err.value, config.w)?,
        });
    }
    let counts = matched.counts();
    let sum: f64 = similarities.iter().map(|s| s.similarity).sum();
    let (imq, vacuous) = imq_from_counts(sum, counts);
    let mut score = ImqScore {
        kind,
        imq,
        mq: 0.0,
        rq: 0.0,
        counts,
        similarities,
        vacuous,
        mq_undefined: counts.tp == 0 && !vacuous,
    };
    let (mq, rq) = decompose(&score);
    score.mq = mq;
    score.rq = rq;
    Ok(score)
}

/// Matting quality (mean similarity of the true positives) and recognition
/// quality (`|TP| / (|TP| + |FP|/2 + |FN|/2)`), both scaled to 0–100.
///
/// With no true positives MQ is 0; an image with no instances at all scores
/// 100 on both so that `IMQ = MQ * RQ / 100` still holds.
pub fn decompose(score: &ImqScore) -> (f64, f64) {
    decompose_counts(score.similarity_sum(), score.counts)
}

fn decompose_counts(similarity_sum: f64, counts: Counts) -> (f64, f64) {
    let d = counts.denominator();
    if d == 0.0 {
        return (100.0, 100.0);
    }
    let rq = 100.0 * counts.tp as f64 / d;
    let mq = if counts.tp == 0 {
        0.0
    } else {
        100.0 * similarity_sum / counts.tp as f64
    };
    (mq, rq)
}

/// Matching plus one score per configured error kind for a single image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub matching: MatchResult,
    pub scores: Vec<ImqScore>,
}

impl ImageReport {
    pub fn counts(&self) -> Counts {
        self.matching.counts()
    }

    pub fn score(&self, kind: ErrorKind) -> Option<&ImqScore> {
        self.scores.iter().find(|s| s.kind == kind)
    }
}

pub fn evaluate_image(
    preds: &InstanceMatteSet,
    gts: &InstanceMatteSet,
    config: &ImqConfig,
) -> Result<ImageReport> {
    config.validate()?;
    let matching = match_instances(preds, gts, config.iou_threshold)?;
    let scores = config
        .error_kinds
        .iter()
        .map(|&kind| imq(&matching, preds, gts, kind, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImageReport { matching, scores })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: ErrorKind,
    pub imq: f64,
    pub mq: f64,
    pub rq: f64,
}

/// Dataset-level scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub aggregation: Aggregation,
    pub images: usize,
    pub counts: Counts,
    pub kinds: Vec<KindSummary>,
}

impl DatasetSummary {
    pub fn kind(&self, kind: ErrorKind) -> Option<&KindSummary> {
        self.kinds.iter().find(|k| k.kind == kind)
    }
}

/// Combines per-image reports according to `config.aggregation`.
pub fn summarize(reports: &[ImageReport], config: &ImqConfig) -> Result<DatasetSummary> {
    if reports.is_empty() {
        return Err(Error::Usage("cannot summarise an empty dataset".into()));
    }
    let counts = reports
        .iter()
        .fold(Counts::default(), |acc, r| acc + r.counts());
    let n = reports.len() as f64;
    let mut kinds = Vec::with_capacity(config.error_kinds.len());
    for &kind in &config.error_kinds {
        let scores: Vec<&ImqScore> = reports
            .iter()
            .map(|r| {
                r.score(kind)
                    .ok_or_else(|| Error::Usage(format!("image report lacks error kind {kind}")))
            })
            .collect::<Result<_>>()?;
        let summary = match config.aggregation {
            Aggregation::Mean => KindSummary {
                kind,
                imq: scores.iter().map(|s| s.imq).sum::<f64>() / n,
                mq: scores.iter().map(|s| s.mq).sum::<f64>() / n,
                rq: scores.iter().map(|s| s.rq).sum::<f64>() / n,
            },
            Aggregation::Pooled => {
                let sum: f64 = scores.iter().map(|s| s.similarity_sum()).sum();
                let (imq, _) = imq_from_counts(sum, counts);
                let (mq, rq) = decompose_counts(sum, counts);
                KindSummary { kind, imq, mq, rq }
            }
        };
        kinds.push(summary);
    }
    Ok(DatasetSummary {
        aggregation: config.aggregation,
        images: reports.len(),
        counts,
        kinds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEvaluation {
    pub images: Vec<ImageReport>,
    pub summary: DatasetSummary,
}

/// Evaluates `(predictions, ground truths)` pairs in parallel; results keep
/// the input order.
pub fn evaluate_dataset(
    pairs: &[(InstanceMatteSet, InstanceMatteSet)],
    config: &ImqConfig,
) -> Result<DatasetEvaluation> {
    if pairs.is_empty() {
        return Err(Error::Usage("no images to evaluate".into()));
    }
    config.validate()?;
    let images = pairs
        .par_iter()
        .map(|(p, g)| evaluate_image(p, g, config))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&images, config)?;
    Ok(DatasetEvaluation { images, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plane::AlphaPlane;

    fn strip(len: usize, range: std::ops::Range<usize>, value: f64) -> AlphaPlane {
        AlphaPlane::from_fn(len, 1, |x, _| if range.contains(&x) { value } else { 0.0 }).unwrap()
    }

    fn set(planes: Vec<AlphaPlane>) -> InstanceMatteSet {
        InstanceMatteSet::from_planes(planes).unwrap()
    }

    fn mad_only() -> ImqConfig {
        ImqConfig {
            error_kinds: vec![ErrorKind::Mad],
            ..Default::default()
        }
    }

    #[test]
    fn iou_matrix_examples() {
        let a = set(vec![strip(16, 0..8, 1.0)]);
        assert_eq!(iou_matrix(&a, &a).unwrap().to_rows(), vec![vec![1.0]]);

        let two = set(vec![strip(16, 0..4, 1.0), strip(16, 8..12, 0.3)]);
        assert_eq!(
            iou_matrix(&two, &two).unwrap().to_rows(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );

        let preds = set(vec![strip(16, 0..8, 0.5), strip(16, 4..12, 0.5)]);
        let gts = set(vec![strip(16, 0..8, 1.0), strip(16, 8..16, 1.0)]);
        let m = iou_matrix(&preds, &gts).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert!((m.get(1, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_matrix_rejects_mismatch() {
        let a = set(vec![strip(16, 0..8, 1.0)]);
        let b = set(vec![strip(15, 0..8, 1.0)]);
        assert!(matches!(iou_matrix(&a, &b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn classify_perfect_matching() {
        let gts = set(vec![strip(16, 0..4, 1.0), strip(16, 6..10, 1.0), strip(16, 12..16, 0.4)]);
        let m = match_instances(&gts, &gts, 0.5).unwrap();
        assert_eq!(m.counts(), Counts { tp: 3, fp: 0, fn_: 0 });
    }

    #[test]
    fn classify_without_predictions() {
        let gts = set(vec![strip(16, 0..4, 1.0), strip(16, 6..10, 1.0)]);
        let m = match_instances(&InstanceMatteSet::default(), &gts, 0.5).unwrap();
        assert_eq!(m.counts(), Counts { tp: 0, fp: 0, fn_: 2 });
    }

    #[test]
    fn below_threshold_match_is_demoted() {
        // IoU 4/10 = 0.4
        let preds = set(vec![strip(20, 0..7, 1.0)]);
        let gts = set(vec![strip(20, 3..10, 1.0)]);
        let matrix = iou_matrix(&preds, &gts).unwrap();
        assert!((matrix.get(0, 0) - 0.4).abs() < 1e-15);
        let assignment = assign(&matrix);
        let m = classify(&preds, &gts, &matrix, &assignment, 0.5);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.counts(), Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn threshold_is_strict() {
        // IoU exactly 0.5
        let preds = set(vec![strip(20, 0..4, 1.0)]);
        let gts = set(vec![strip(20, 0..8, 1.0)]);
        let m = match_instances(&preds, &gts, 0.5).unwrap();
        assert_eq!(m.counts(), Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn closed_form_substitution() {
        let counts = Counts { tp: 1, fp: 1, fn_: 1 };
        let (v, vacuous) = imq_from_counts(0.8, counts);
        assert!(!vacuous);
        assert!((v - 40.0).abs() < 1e-12);
        let (mq, rq) = decompose_counts(0.8, counts);
        assert!((mq * rq / 100.0 - 40.0).abs() < 1e-12);
    }

    #[test]
    fn reported_table_pairs_recombine() {
        for (mq, rq, imq) in [(25.57f64, 94.71, 24.22), (68.19, 94.71, 64.58)] {
            assert!((mq * rq / 100.0 - imq).abs() <= 0.01);
        }
    }

    #[test]
    fn imq_for_a_constructed_pair() {
        // pred equals gt except a constant 0.01 offset on the support:
        // MAD over the union is 0.01, similarity 0.9
        let gt = strip(10, 2..8, 0.5);
        let pred = strip(10, 2..8, 0.51);
        let report = evaluate_image(&set(vec![pred]), &set(vec![gt]), &mad_only()).unwrap();
        let s = report.score(ErrorKind::Mad).unwrap();
        assert!((s.imq - 90.0).abs() < 1e-9);
        assert!((s.mq - 90.0).abs() < 1e-9);
        assert!((s.rq - 100.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_score_100_for_every_kind() {
        let gts = set(vec![strip(32, 0..10, 0.7), strip(32, 14..30, 1.0)]);
        let r = evaluate_image(&gts, &gts, &ImqConfig::default()).unwrap();
        for s in &r.scores {
            assert!((s.imq - 100.0).abs() < 1e-12, "{:?}", s.kind);
        }
    }

    #[test]
    fn no_tp_means_zero_mq_and_rq() {
        let gts = set(vec![strip(16, 0..4, 1.0)]);
        let r = evaluate_image(&InstanceMatteSet::default(), &gts, &mad_only()).unwrap();
        let s = &r.scores[0];
        assert_eq!((s.imq, s.mq, s.rq), (0.0, 0.0, 0.0));
        assert!(s.mq_undefined);
    }

    #[test]
    fn empty_image_is_vacuous() {
        let r = evaluate_image(&InstanceMatteSet::default(), &InstanceMatteSet::default(), &mad_only())
            .unwrap();
        let s = &r.scores[0];
        assert!(s.vacuous);
        assert_eq!((s.imq, s.mq, s.rq), (100.0, 100.0, 100.0));
    }

    #[test]
    fn empty_ground_truth_is_ignored() {
        let gts = set(vec![strip(16, 0..6, 1.0)]);
        let preds = set(vec![strip(16, 0..6, 0.9)]);
        let base = evaluate_image(&preds, &gts, &ImqConfig::default()).unwrap();
        let mut padded = gts.clone();
        padded.push(7, AlphaPlane::zeros(16, 1).unwrap()).unwrap();
        let with_empty = evaluate_image(&preds, &padded, &ImqConfig::default()).unwrap();
        assert_eq!(base.counts(), with_empty.counts());
        for (a, b) in base.scores.iter().zip(&with_empty.scores) {
            assert_eq!(a.imq, b.imq);
        }
    }

    #[test]
    fn imq_is_not_symmetric() {
        let one = set(vec![strip(20, 0..10, 1.0)]);
        let two = set(vec![strip(20, 0..10, 1.0), strip(20, 12..20, 1.0)]);
        let forward = evaluate_image(&one, &two, &mad_only()).unwrap();
        let backward = evaluate_image(&two, &one, &mad_only()).unwrap();
        assert_eq!(forward.counts(), Counts { tp: 1, fp: 0, fn_: 1 });
        assert_eq!(backward.counts(), Counts { tp: 1, fp: 1, fn_: 0 });
        // RQ is symmetric here, the scores agree, but the sets differ
        assert_ne!(forward.matching.false_negatives, backward.matching.false_negatives);
        let iou_fw = forward.matching.pairs[0].iou;
        let iou_bw = backward.matching.pairs[0].iou;
        assert_eq!(iou_fw, iou_bw);
    }

    #[test]
    fn dataset_mean_and_pooled() {
        let gt = set(vec![strip(10, 0..5, 1.0)]);
        let exact = set(vec![strip(10, 0..5, 1.0)]);
        // similarity 0.5: MAD 0.05 over the 5-pixel union
        let half = set(vec![strip(10, 0..5, 0.95)]);
        let extra = strip(10, 6..10, 1.0);
        let mut with_fp = exact.clone();
        with_fp.push(9, extra).unwrap();
        let mut gt_with_fn = gt.clone();
        gt_with_fn.push(9, strip(10, 6..10, 1.0)).unwrap();
        let pairs = vec![(with_fp, gt.clone()), (half, gt_with_fn)];

        let pooled = ImqConfig {
            aggregation: Aggregation::Pooled,
            ..mad_only()
        };
        let eval = evaluate_dataset(&pairs, &pooled).unwrap();
        assert_eq!(eval.summary.counts, Counts { tp: 2, fp: 1, fn_: 1 });
        assert!((eval.summary.kinds[0].imq - 50.0).abs() < 1e-9);

        let eval = evaluate_dataset(&pairs, &mad_only()).unwrap();
        let per: Vec<f64> = eval.images.iter().map(|r| r.scores[0].imq).collect();
        assert!((per[0] - 100.0 / 1.5).abs() < 1e-9);
        assert!((per[1] - 50.0 / 1.5).abs() < 1e-9);
        assert!((eval.summary.kinds[0].imq - (per[0] + per[1]) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn dataset_singleton_matches_image() {
        let gt = set(vec![strip(12, 0..6, 0.8)]);
        let pred = set(vec![strip(12, 0..7, 0.8)]);
        let eval = evaluate_dataset(&[(pred.clone(), gt.clone())], &mad_only()).unwrap();
        let single = evaluate_image(&pred, &gt, &mad_only()).unwrap();
        assert_eq!(eval.summary.kinds[0].imq, single.scores[0].imq);
    }

    #[test]
    fn dataset_rejects_empty_input() {
        assert!(matches!(
            evaluate_dataset(&[], &ImqConfig::default()),
            Err(Error::Usage(_))
        ));
    }
}
