//! Corpus-level detection metrics for crowded single-class scenes.
//!
//! The headline numbers are the ones used to compare detectors on cell
//! images: whole-correct rate (WCR), average error ratio (AER), accuracy,
//! F1, all-point average precision, and the log-average miss rate over nine
//! FPPI targets. A parallel sub-report restricts the counts to the
//! "overlapping" subset of ground truths, the boxes whose neighbors cover at
//! least `tau` of their area.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iog, iou, BBox};
use crate::Detection;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty corpus: need at least one image")]
    EmptyCorpus,
    #[error("corpus has no ground-truth boxes; recall-family metrics are undefined")]
    NoGroundTruth,
    #[error("threshold {name} = {value} outside (0, 1]")]
    InvalidThreshold { name: &'static str, value: f64 },
}

/// How detections are assigned to ground truths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchRule {
    /// Every detection points at its highest-IoU ground truth (if that IoU
    /// clears the threshold); per ground truth the highest-scoring claimant
    /// is the true positive and the rest are false positives. This is the
    /// default and the rule the headline numbers assume.
    #[default]
    BestScorePerGt,
    /// Score-descending greedy: each detection consumes the best still-free
    /// ground truth above the threshold. Kept for comparison runs; counts
    /// can differ from the default rule on crowded images.
    GreedyScoreOrder,
}

/// Average-precision interpolation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApInterpolation {
    /// Precision-envelope integral over every distinct-score operating
    /// point. Default.
    #[default]
    AllPoint,
    /// Mean of interpolated precision at recalls 0.0, 0.1, ..., 1.0.
    ElevenPoint,
}

/// One image's detections and ground truths, ready for evaluation.
#[derive(Debug, Clone, Default)]
pub struct EvalImage {
    pub dets: Vec<Detection>,
    pub gts: Vec<BBox>,
}

/// Full per-image assignment, kept around so sub-reports can be derived
/// without re-matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    /// Per detection: the ground truth it was credited to as a true
    /// positive, if any.
    pub tp_of: Vec<Option<usize>>,
    /// Per detection: its highest-IoU ground truth among those clearing the
    /// IoU threshold, independent of who won the credit. Ties go to the
    /// lowest ground-truth index.
    pub candidate_gt: Vec<Option<usize>>,
    /// Per ground truth: whether some detection was credited to it.
    pub gt_matched: Vec<bool>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchOutcome {
    /// An image is wholly correct when nothing is spurious and nothing is
    /// missed.
    pub fn wholly_correct(&self) -> bool {
        self.fp == 0 && self.fn_ == 0
    }
}

fn best_gt_for(det: &BBox, gts: &[BBox], iou_thresh: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (g, gt) in gts.iter().enumerate() {
        let v = iou(det, gt);
        if v >= iou_thresh && best.map_or(true, |(_, bv)| v > bv) {
            best = Some((g, v));
        }
    }
    best.map(|(g, _)| g)
}

/// Assign one image's detections to its ground truths under `rule`.
pub fn match_image(
    dets: &[Detection],
    gts: &[BBox],
    iou_thresh: f64,
    rule: MatchRule,
) -> MatchOutcome {
    let candidate_gt: Vec<Option<usize>> = dets
        .iter()
        .map(|d| best_gt_for(&d.bbox, gts, iou_thresh))
        .collect();

    let mut tp_of = vec![None; dets.len()];
    let mut gt_matched = vec![false; gts.len()];

    match rule {
        MatchRule::BestScorePerGt => {
            // Per ground truth, the highest-scoring claimant wins; score
            // ties go to the earlier detection.
            let mut winner: Vec<Option<usize>> = vec![None; gts.len()];
            for (d, cand) in candidate_gt.iter().enumerate() {
                if let Some(g) = *cand {
                    let take = match winner[g] {
                        None => true,
                        Some(w) => dets[d].score > dets[w].score,
                    };
                    if take {
                        winner[g] = Some(d);
                    }
                }
            }
            for (g, w) in winner.iter().enumerate() {
                if let Some(d) = *w {
                    tp_of[d] = Some(g);
                    gt_matched[g] = true;
                }
            }
        }
        MatchRule::GreedyScoreOrder => {
            let mut order: Vec<usize> = (0..dets.len()).collect();
            order.sort_by(|&a, &b| {
                dets[b]
                    .score
                    .partial_cmp(&dets[a].score)
                    .expect("scores are finite")
                    .then(a.cmp(&b))
            });
            for d in order {
                let mut best: Option<(usize, f64)> = None;
                for (g, gt) in gts.iter().enumerate() {
                    if gt_matched[g] {
                        continue;
                    }
                    let v = iou(&dets[d].bbox, gt);
                    if v >= iou_thresh && best.map_or(true, |(_, bv)| v > bv) {
                        best = Some((g, v));
                    }
                }
                if let Some((g, _)) = best {
                    tp_of[d] = Some(g);
                    gt_matched[g] = true;
                }
            }
        }
    }

    let tp = tp_of.iter().filter(|t| t.is_some()).count();
    MatchOutcome {
        fp: dets.len() - tp,
        fn_: gts.len() - tp,
        tp,
        tp_of,
        candidate_gt,
        gt_matched,
    }
}

/// Mask of ground truths whose neighbors jointly cover at least `tau` of
/// their own area: `sum_{j != i} iog(g_j, g_i) >= tau`.
pub fn overlap_subset(gts: &[BBox], tau: f64) -> Vec<bool> {
    (0..gts.len())
        .map(|i| {
            let covered: f64 = gts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, g)| iog(g, &gts[i]))
                .sum();
            covered >= tau
        })
        .collect()
}

/// One operating point of the score sweep, taken after all detections with
/// a given distinct score have been admitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub score: f64,
    pub tp: usize,
    pub fp: usize,
    pub precision: f64,
    pub recall: f64,
    pub fppi: f64,
}

/// Score-descending sweep over the whole corpus. Matching happens once on
/// the full detection set: under both rules a detection's credit cannot be
/// taken by a lower-scoring one, so the flags are threshold-invariant.
/// Points are emitted per distinct score so ties enter together, exactly as
/// a literal score-threshold sweep would see them.
pub fn score_sweep(
    images: &[EvalImage],
    iou_thresh: f64,
    rule: MatchRule,
) -> Result<Vec<SweepPoint>, MetricsError> {
    let total_gt: usize = images.iter().map(|im| im.gts.len()).sum();
    if total_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let mut flagged: Vec<(f64, bool)> = Vec::new();
    for im in images {
        let outcome = match_image(&im.dets, &im.gts, iou_thresh, rule);
        for (d, det) in im.dets.iter().enumerate() {
            flagged.push((det.score, outcome.tp_of[d].is_some()));
        }
    }
    flagged.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("scores are finite"));

    let num_images = images.len() as f64;
    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < flagged.len() {
        let score = flagged[i].0;
        while i < flagged.len() && flagged[i].0 == score {
            if flagged[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(SweepPoint {
            score,
            tp,
            fp,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / total_gt as f64,
            fppi: fp as f64 / num_images,
        });
    }
    Ok(points)
}

/// All-point or eleven-point average precision over the corpus.
pub fn average_precision(
    images: &[EvalImage],
    iou_thresh: f64,
    rule: MatchRule,
    interp: ApInterpolation,
) -> Result<f64, MetricsError> {
    let points = score_sweep(images, iou_thresh, rule)?;
    Ok(ap_from_points(&points, interp))
}

fn ap_from_points(points: &[SweepPoint], interp: ApInterpolation) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    match interp {
        ApInterpolation::AllPoint => {
            // Precision envelope: at each point, the best precision
            // achievable at that recall or higher.
            let n = points.len();
            let mut env = vec![0.0f64; n];
            let mut run = 0.0f64;
            for k in (0..n).rev() {
                run = run.max(points[k].precision);
                env[k] = run;
            }
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (k, p) in points.iter().enumerate() {
                ap += (p.recall - prev_recall) * env[k];
                prev_recall = p.recall;
            }
            ap
        }
        ApInterpolation::ElevenPoint => {
            let mut total = 0.0;
            for k in 0..=10 {
                let r = k as f64 / 10.0;
                let best = points
                    .iter()
                    .filter(|p| p.recall >= r)
                    .map(|p| p.precision)
                    .fold(0.0f64, f64::max);
                total += best;
            }
            total / 11.0
        }
    }
}

/// The nine FPPI targets of the log-average miss rate: `10^(-2 + k/4)` for
/// `k = 0..=8`, i.e. log-spaced from 0.01 to 1.0.
pub fn fppi_targets() -> [f64; 9] {
    let mut t = [0.0; 9];
    for (k, slot) in t.iter_mut().enumerate() {
        *slot = 10f64.powf(-2.0 + 0.25 * k as f64);
    }
    t
}

/// Log-average miss rate: the geometric mean of the miss rate (1 - recall)
/// at the nine FPPI targets. A target with no operating point at or below
/// it contributes a miss rate of 1.0; miss rates are floored at 1e-10
/// before the log.
pub fn log_average_miss_rate(
    images: &[EvalImage],
    iou_thresh: f64,
    rule: MatchRule,
) -> Result<f64, MetricsError> {
    let points = score_sweep(images, iou_thresh, rule)?;
    Ok(lamr_from_points(&points))
}

fn lamr_from_points(points: &[SweepPoint]) -> f64 {
    let mut log_sum = 0.0;
    for target in fppi_targets() {
        let mut miss = 1.0f64;
        for p in points {
            if p.fppi <= target {
                miss = miss.min(1.0 - p.recall);
            }
        }
        log_sum += miss.max(1e-10).ln();
    }
    (log_sum / 9.0).exp()
}

/// Per-image confusion counts, serialized into reports.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ImageCounts {
    pub image_id: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Counts restricted to the overlapping ground-truth subset. A detection is
/// charged here only when its best-IoU ground truth is in the subset; truly
/// stray detections stay in the global report alone.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OverlapReport {
    pub num_gts: usize,
    pub gt_fraction: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// Evaluation knobs. Defaults are the standard operating point.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub iou_thresh: f64,
    pub tau: f64,
    pub match_rule: MatchRule,
    pub ap_interp: ApInterpolation,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_thresh: 0.5,
            tau: 0.5,
            match_rule: MatchRule::default(),
            ap_interp: ApInterpolation::default(),
        }
    }
}

/// The full corpus evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSummary {
    pub per_image: Vec<ImageCounts>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub num_images: usize,
    pub num_gts: usize,
    pub num_detections: usize,
    /// Fraction of images with zero false positives and zero misses.
    pub wcr: f64,
    /// (FP + FN) / total ground truths; can exceed 1.
    pub aer: f64,
    /// TP / (TP + FP + FN).
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    pub mr2: f64,
    pub overlap: OverlapReport,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn check_unit_interval(name: &'static str, value: f64) -> Result<(), MetricsError> {
    if !(value > 0.0 && value <= 1.0) {
        return Err(MetricsError::InvalidThreshold { name, value });
    }
    Ok(())
}

/// Evaluate a corpus end to end. Image ids are reported positionally as
/// `image_ids[i]`; pass the real ids from the corpus file.
pub fn evaluate_corpus(
    images: &[EvalImage],
    image_ids: &[String],
    opts: &EvalOptions,
) -> Result<CorpusSummary, MetricsError> {
    if images.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    check_unit_interval("iou_thresh", opts.iou_thresh)?;
    check_unit_interval("tau", opts.tau)?;
    let num_gts: usize = images.iter().map(|im| im.gts.len()).sum();
    if num_gts == 0 {
        return Err(MetricsError::NoGroundTruth);
    }

    struct PerImage {
        outcome: MatchOutcome,
        subset: Vec<bool>,
    }
    let evaluated: Vec<PerImage> = images
        .par_iter()
        .map(|im| PerImage {
            outcome: match_image(&im.dets, &im.gts, opts.iou_thresh, opts.match_rule),
            subset: overlap_subset(&im.gts, opts.tau),
        })
        .collect();

    let mut per_image = Vec::with_capacity(images.len());
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut wholly_correct = 0usize;
    let (mut s_gts, mut s_tp, mut s_fp, mut s_fn) = (0usize, 0usize, 0usize, 0usize);

    for (i, ev) in evaluated.iter().enumerate() {
        let o = &ev.outcome;
        tp += o.tp;
        fp += o.fp;
        fn_ += o.fn_;
        if o.wholly_correct() {
            wholly_correct += 1;
        }
        per_image.push(ImageCounts {
            image_id: image_ids.get(i).cloned().unwrap_or_else(|| i.to_string()),
            tp: o.tp,
            fp: o.fp,
            fn_: o.fn_,
        });

        let subset = &ev.subset;
        s_gts += subset.iter().filter(|&&b| b).count();
        for (g, &in_subset) in subset.iter().enumerate() {
            if in_subset {
                if o.gt_matched[g] {
                    s_tp += 1;
                } else {
                    s_fn += 1;
                }
            }
        }
        for d in 0..o.tp_of.len() {
            if o.tp_of[d].is_none() {
                if let Some(g) = o.candidate_gt[d] {
                    if subset[g] {
                        s_fp += 1;
                    }
                }
            }
        }
    }

    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let s_precision = ratio(s_tp, s_tp + s_fp);
    let s_recall = ratio(s_tp, s_tp + s_fn);

    Ok(CorpusSummary {
        wcr: ratio(wholly_correct, images.len()),
        aer: (fp + fn_) as f64 / num_gts as f64,
        accuracy: ratio(tp, tp + fp + fn_),
        f1: f1_from(precision, recall),
        ap: average_precision(images, opts.iou_thresh, opts.match_rule, opts.ap_interp)?,
        mr2: log_average_miss_rate(images, opts.iou_thresh, opts.match_rule)?,
        overlap: OverlapReport {
            num_gts: s_gts,
            gt_fraction: ratio(s_gts, num_gts),
            tp: s_tp,
            fp: s_fp,
            fn_: s_fn,
            precision: s_precision,
            recall: s_recall,
            accuracy: ratio(s_tp, s_tp + s_fp + s_fn),
            f1: f1_from(s_precision, s_recall),
        },
        per_image,
        tp,
        fp,
        fn_,
        num_images: images.len(),
        num_gts,
        num_detections: images.iter().map(|im| im.dets.len()).sum(),
        precision,
        recall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(b: BBox, score: f64) -> Detection {
        Detection {
            bbox: b,
            score,
            embedding: None,
        }
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("img_{i}")).collect()
    }

    #[test]
    fn best_score_rule_credits_highest_claimant() {
        let gts = vec![bb(0.0, 0.0, 10.0, 10.0)];
        let dets = vec![
            det(bb(0.0, 0.0, 10.0, 10.0), 0.6),
            det(bb(0.5, 0.0, 10.5, 10.0), 0.9),
        ];
        let o = match_image(&dets, &gts, 0.5, MatchRule::BestScorePerGt);
        assert_eq!(o.tp_of, vec![None, Some(0)]);
        assert_eq!((o.tp, o.fp, o.fn_), (1, 1, 0));
    }

    #[test]
    fn score_tie_goes_to_earlier_detection() {
        let gts = vec![bb(0.0, 0.0, 10.0, 10.0)];
        let dets = vec![
            det(bb(0.0, 0.0, 10.0, 10.0), 0.7),
            det(bb(0.0, 0.0, 10.0, 10.0), 0.7),
        ];
        let o = match_image(&dets, &gts, 0.5, MatchRule::BestScorePerGt);
        assert_eq!(o.tp_of, vec![Some(0), None]);
    }

    #[test]
    fn below_threshold_detection_is_fp_even_near_a_gt() {
        let gts = vec![bb(0.0, 0.0, 10.0, 10.0)];
        let dets = vec![det(bb(5.0, 0.0, 15.0, 10.0), 0.9)];
        let o = match_image(&dets, &gts, 0.5, MatchRule::BestScorePerGt);
        assert_eq!((o.tp, o.fp, o.fn_), (0, 1, 1));
        assert_eq!(o.candidate_gt, vec![None]);
    }

    #[test]
    fn rules_disagree_on_a_crowded_pair() {
        let gts = vec![bb(0.0, 0.0, 10.0, 10.0), bb(6.0, 0.0, 16.0, 10.0)];
        let dets = vec![
            det(bb(0.5, 0.0, 10.5, 10.0), 0.9),
            det(bb(3.0, 0.0, 13.0, 10.0), 0.8),
        ];
        let best = match_image(&dets, &gts, 0.5, MatchRule::BestScorePerGt);
        let greedy = match_image(&dets, &gts, 0.5, MatchRule::GreedyScoreOrder);
        assert_eq!((best.tp, best.fp, best.fn_), (1, 1, 1));
        assert_eq!((greedy.tp, greedy.fp, greedy.fn_), (2, 0, 0));
    }

    #[test]
    fn overlap_subset_sums_coverage_over_neighbors() {
        // Box 1 is covered 0.3 by box 0 and 0.25 by box 2: total 0.55.
        let gts = vec![
            bb(0.0, 0.0, 3.0, 10.0),
            bb(0.0, 0.0, 10.0, 10.0),
            bb(7.5, 0.0, 13.0, 10.0),
        ];
        let mask = overlap_subset(&gts, 0.5);
        assert_eq!(mask, vec![true, true, false]);
        // Threshold is inclusive.
        let exact = vec![bb(0.0, 0.0, 2.0, 2.0), bb(0.0, 0.0, 1.0, 2.0)];
        assert_eq!(overlap_subset(&exact, 0.5), vec![true, true]);
    }

    #[test]
    fn isolated_boxes_never_enter_the_subset() {
        let gts = vec![bb(0.0, 0.0, 5.0, 5.0), bb(100.0, 100.0, 105.0, 105.0)];
        assert_eq!(overlap_subset(&gts, 0.5), vec![false, false]);
    }

    #[test]
    fn aer_counts_both_error_kinds_against_gt_total() {
        // 46 ground truths, one missed, one spurious detection elsewhere.
        let mut gts = Vec::new();
        let mut dets = Vec::new();
        for i in 0..46 {
            let x = 20.0 * i as f64;
            gts.push(bb(x, 0.0, x + 10.0, 10.0));
            if i > 0 {
                dets.push(det(bb(x, 0.0, x + 10.0, 10.0), 0.9));
            }
        }
        dets.push(det(bb(2000.0, 0.0, 2010.0, 10.0), 0.8));
        let images = vec![EvalImage { dets, gts }];
        let s = evaluate_corpus(&images, &ids(1), &EvalOptions::default()).unwrap();
        assert_eq!((s.tp, s.fp, s.fn_), (45, 1, 1));
        assert_eq!(s.aer, 0.043478260869565216);
        assert_eq!(s.wcr, 0.0);
        assert_relative_eq!(s.accuracy, 45.0 / 47.0);
    }

    #[test]
    fn ap_worked_example_with_envelope() {
        // Two ground truths; detections at scores 0.9 (hit), 0.8 (miss),
        // 0.7 (hit) give the PR staircase whose envelope integrates to 5/6.
        let gts = vec![bb(0.0, 0.0, 10.0, 10.0), bb(50.0, 0.0, 60.0, 10.0)];
        let dets = vec![
            det(bb(0.0, 0.0, 10.0, 10.0), 0.9),
            det(bb(100.0, 0.0, 110.0, 10.0), 0.8),
            det(bb(50.0, 0.0, 60.0, 10.0), 0.7),
        ];
        let images = vec![EvalImage { dets, gts }];
        let ap = average_precision(&images, 0.5, MatchRule::BestScorePerGt, ApInterpolation::AllPoint)
            .unwrap();
        assert_eq!(ap, 0.8333333333333333);
        let ap11 =
            average_precision(&images, 0.5, MatchRule::BestScorePerGt, ApInterpolation::ElevenPoint)
                .unwrap();
        // Eleven-point: recalls 0.0..=0.5 see envelope 1.0, the rest 2/3.
        assert_relative_eq!(ap11, (6.0 + 5.0 * (2.0 / 3.0)) / 11.0, epsilon = 1e-12);
    }

    #[test]
    fn score_ties_enter_the_sweep_together() {
        let gts = vec![bb(0.0, 0.0, 10.0, 10.0), bb(50.0, 0.0, 60.0, 10.0)];
        let dets = vec![
            det(bb(0.0, 0.0, 10.0, 10.0), 0.8),
            det(bb(100.0, 0.0, 110.0, 10.0), 0.8),
        ];
        let images = vec![EvalImage { dets, gts }];
        let points = score_sweep(&images, 0.5, MatchRule::BestScorePerGt).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!((points[0].tp, points[0].fp), (1, 1));
        assert_relative_eq!(points[0].precision, 0.5);
    }

    #[test]
    fn fppi_targets_are_log_spaced() {
        let t = fppi_targets();
        assert_eq!(
            t.to_vec(),
            vec![
                0.01,
                0.01778279410038923,
                0.03162277660168379,
                0.05623413251903491,
                0.1,
                0.1778279410038923,
                0.31622776601683794,
                0.5623413251903491,
                1.0
            ]
        );
    }

    #[test]
    fn miss_rate_is_one_with_no_qualifying_point_and_floored_when_perfect() {
        // Ten images, one GT each, all hit perfectly: first sweep point has
        // fppi 0 <= every target and recall 1, so every miss clamps to 1e-10.
        let mut images = Vec::new();
        for i in 0..10 {
            let g = bb(0.0, 20.0 * i as f64, 10.0, 20.0 * i as f64 + 10.0);
            images.push(EvalImage {
                dets: vec![det(g, 0.9)],
                gts: vec![g],
            });
        }
        let mr2 = log_average_miss_rate(&images, 0.5, MatchRule::BestScorePerGt).unwrap();
        assert_relative_eq!(mr2, 1e-10, epsilon = 1e-22);

        // One image whose only detection is spurious: fppi 1 at the only
        // point, so targets below 1.0 see no qualifying point.
        let images = vec![EvalImage {
            dets: vec![det(bb(100.0, 0.0, 110.0, 10.0), 0.9)],
            gts: vec![bb(0.0, 0.0, 10.0, 10.0)],
        }];
        let mr2 = log_average_miss_rate(&images, 0.5, MatchRule::BestScorePerGt).unwrap();
        assert_relative_eq!(mr2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_and_gt_free_corpora_are_rejected() {
        assert_eq!(
            evaluate_corpus(&[], &[], &EvalOptions::default()).unwrap_err(),
            MetricsError::EmptyCorpus
        );
        let images = vec![EvalImage {
            dets: vec![det(bb(0.0, 0.0, 1.0, 1.0), 0.5)],
            gts: vec![],
        }];
        assert_eq!(
            evaluate_corpus(&images, &ids(1), &EvalOptions::default()).unwrap_err(),
            MetricsError::NoGroundTruth
        );
    }

    #[test]
    fn perfect_corpus_maxes_every_headline_metric() {
        let mut images = Vec::new();
        for i in 0..4 {
            let mut gts = Vec::new();
            let mut dets = Vec::new();
            for j in 0..5 {
                let g = bb(30.0 * j as f64, 30.0 * i as f64, 30.0 * j as f64 + 12.0, 30.0 * i as f64 + 12.0);
                gts.push(g);
                dets.push(det(g, 0.9 - 0.01 * (5 * i + j) as f64));
            }
            images.push(EvalImage { dets, gts });
        }
        let s = evaluate_corpus(&images, &ids(4), &EvalOptions::default()).unwrap();
        assert_eq!(s.wcr, 1.0);
        assert_eq!(s.aer, 0.0);
        assert_eq!(s.accuracy, 1.0);
        assert_eq!(s.f1, 1.0);
        assert_eq!(s.ap, 1.0);
    }

    #[test]
    fn overlap_report_restricts_the_global_matching() {
        // A crowded pair (both in subset) plus one isolated gt. The pair's
        // second member is missed and draws a duplicate claimant; a stray
        // detection overlaps nothing and must not enter the sub-report.
        let gts = vec![
            bb(0.0, 0.0, 10.0, 10.0),
            bb(3.0, 0.0, 13.0, 10.0),
            bb(100.0, 0.0, 110.0, 10.0),
        ];
        let dets = vec![
            det(bb(0.0, 0.0, 10.0, 10.0), 0.9),
            det(bb(0.5, 0.0, 10.5, 10.0), 0.8),
            det(bb(500.0, 0.0, 510.0, 10.0), 0.7),
            det(bb(100.0, 0.0, 110.0, 10.0), 0.85),
        ];
        let images = vec![EvalImage { dets, gts }];
        let s = evaluate_corpus(&images, &ids(1), &EvalOptions::default()).unwrap();
        assert_eq!(s.overlap.num_gts, 2);
        assert_relative_eq!(s.overlap.gt_fraction, 2.0 / 3.0);
        assert_eq!((s.overlap.tp, s.overlap.fp, s.overlap.fn_), (1, 1, 1));
        // Global report still sees the stray detection.
        assert_eq!((s.tp, s.fp, s.fn_), (2, 2, 1));
    }

    fn arb_image() -> impl Strategy<Value = EvalImage> {
        let gt = (0u32..6, 0u32..6).prop_map(|(i, j)| {
            bb(
                12.0 * i as f64,
                12.0 * j as f64,
                12.0 * i as f64 + 10.0,
                12.0 * j as f64 + 10.0,
            )
        });
        let d = ((0u32..6, 0u32..6), 0.01f64..1.0).prop_map(|((i, j), s)| {
            det(
                bb(
                    12.0 * i as f64 + 1.0,
                    12.0 * j as f64,
                    12.0 * i as f64 + 11.0,
                    12.0 * j as f64 + 10.0,
                ),
                s,
            )
        });
        (
            proptest::collection::vec(gt, 1..8),
            proptest::collection::vec(d, 0..10),
        )
            .prop_map(|(gts, dets)| EvalImage { dets, gts })
    }

    proptest! {
        #[test]
        fn counts_partition_detections_and_gts(im in arb_image(), greedy in proptest::bool::ANY) {
            let rule = if greedy { MatchRule::GreedyScoreOrder } else { MatchRule::BestScorePerGt };
            let o = match_image(&im.dets, &im.gts, 0.5, rule);
            prop_assert_eq!(o.tp + o.fp, im.dets.len());
            prop_assert_eq!(o.tp + o.fn_, im.gts.len());
            prop_assert_eq!(o.gt_matched.iter().filter(|&&m| m).count(), o.tp);
            // No ground truth credited twice.
            let mut seen = vec![false; im.gts.len()];
            for t in o.tp_of.iter().flatten() {
                prop_assert!(!seen[*t]);
                seen[*t] = true;
            }
        }

        #[test]
        fn headline_metrics_stay_in_range(ims in proptest::collection::vec(arb_image(), 1..5)) {
            prop_assume!(ims.iter().any(|im| !im.gts.is_empty()));
            let names: Vec<String> = (0..ims.len()).map(|i| i.to_string()).collect();
            let s = evaluate_corpus(&ims, &names, &EvalOptions::default()).unwrap();
            for v in [s.wcr, s.accuracy, s.precision, s.recall, s.f1, s.ap] {
                prop_assert!((0.0..=1.0).contains(&v), "metric out of range: {}", v);
            }
            prop_assert!(s.aer >= 0.0);
            prop_assert!(s.mr2 >= 0.0 && s.mr2 <= 1.0 + 1e-12);
            prop_assert_eq!(s.tp + s.fn_, s.num_gts);
            prop_assert_eq!(s.tp + s.fp, s.num_detections);
        }

        #[test]
        fn sweep_is_monotone_in_cumulative_counts(ims in proptest::collection::vec(arb_image(), 1..4)) {
            prop_assume!(ims.iter().any(|im| !im.gts.is_empty()));
            let points = score_sweep(&ims, 0.5, MatchRule::BestScorePerGt).unwrap();
            for w in points.windows(2) {
                prop_assert!(w[1].score < w[0].score);
                prop_assert!(w[1].tp >= w[0].tp && w[1].fp >= w[0].fp);
                prop_assert!(w[1].recall >= w[0].recall);
            }
        }
    }
}
