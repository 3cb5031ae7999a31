//! Brute-force reference implementations the test suite checks the fast
//! paths against.
//!
//! Everything here is written the slow, literal way on raw corner arrays:
//! per-ground-truth claim scans instead of one assignment pass, a full
//! re-match per score threshold instead of the single-sweep shortcut, a
//! quadratic precision envelope, and a mask-based transcription of the
//! guided suppression loop. None of it calls the library's geometry or
//! metric code, so agreement between the two is evidence, not tautology.
//!
//! Floating-point expressions mirror the shapes used by the fast paths
//! (same operations in the same order), which is what lets the suite
//! demand exact equality rather than tolerances in several places.

/// `[x1, y1, x2, y2]` corners.
pub type RawBox = [f64; 4];

/// `(bbox, score)`.
pub type RawDet = (RawBox, f64);

/// One image: detections plus ground truths.
pub type RawImage = (Vec<RawDet>, Vec<RawBox>);

fn area(b: &RawBox) -> f64 {
    (b[2] - b[0]) * (b[3] - b[1])
}

/// Independent IoU transcription.
pub fn box_iou(a: &RawBox, b: &RawBox) -> f64 {
    let w = a[2].min(b[2]) - a[0].max(b[0]);
    let h = a[3].min(b[3]) - a[1].max(b[1]);
    if !(w > 0.0 && h > 0.0) {
        return 0.0;
    }
    let inter = w * h;
    inter / (area(a) + area(b) - inter)
}

/// Independent coverage-of-`b` transcription.
pub fn box_iog(a: &RawBox, b: &RawBox) -> f64 {
    let w = a[2].min(b[2]) - a[0].max(b[0]);
    let h = a[3].min(b[3]) - a[1].max(b[1]);
    if !(w > 0.0 && h > 0.0) {
        return 0.0;
    }
    w * h / area(b)
}

/// Ground truths whose neighbors jointly cover at least `tau` of them.
pub fn oracle_overlap_subset(gts: &[RawBox], tau: f64) -> Vec<bool> {
    let mut mask = Vec::with_capacity(gts.len());
    for i in 0..gts.len() {
        let mut covered = 0.0;
        for j in 0..gts.len() {
            if j != i {
                covered += box_iog(&gts[j], &gts[i]);
            }
        }
        mask.push(covered >= tau);
    }
    mask
}

/// `(tp, fp, fn)` for one image, built per ground truth: walk every
/// detection, keep those whose best ground truth is this one at or above
/// the threshold, and credit the highest-scoring claimant (earliest wins
/// ties).
pub fn oracle_counts(dets: &[RawDet], gts: &[RawBox], iou_thresh: f64) -> (usize, usize, usize) {
    let mut tp = 0;
    for (g, _) in gts.iter().enumerate() {
        let mut winner: Option<usize> = None;
        for (d, (db, score)) in dets.iter().enumerate() {
            let mut best_g = None;
            let mut best_v = f64::NEG_INFINITY;
            for (h, gt) in gts.iter().enumerate() {
                let v = box_iou(db, gt);
                if v >= iou_thresh && v > best_v {
                    best_g = Some(h);
                    best_v = v;
                }
            }
            if best_g == Some(g) {
                let better = match winner {
                    None => true,
                    Some(w) => *score > dets[w].1,
                };
                if better {
                    winner = Some(d);
                }
            }
        }
        if winner.is_some() {
            tp += 1;
        }
    }
    (tp, dets.len() - tp, gts.len() - tp)
}

/// Corpus-level metrics recomputed from per-image brute-force counts.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSummary {
    pub per_image: Vec<(usize, usize, usize)>,
    pub wcr: f64,
    pub aer: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    pub mr2: f64,
}

pub fn oracle_metrics(images: &[RawImage], iou_thresh: f64) -> OracleSummary {
    let per_image: Vec<(usize, usize, usize)> = images
        .iter()
        .map(|(dets, gts)| oracle_counts(dets, gts, iou_thresh))
        .collect();
    let tp: usize = per_image.iter().map(|c| c.0).sum();
    let fp: usize = per_image.iter().map(|c| c.1).sum();
    let fn_: usize = per_image.iter().map(|c| c.2).sum();
    let num_gts: usize = images.iter().map(|(_, gts)| gts.len()).sum();
    let whole = per_image.iter().filter(|c| c.1 == 0 && c.2 == 0).count();
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    OracleSummary {
        wcr: whole as f64 / images.len() as f64,
        aer: (fp + fn_) as f64 / num_gts as f64,
        accuracy: if tp + fp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp + fn_) as f64
        },
        precision,
        recall,
        f1,
        ap: oracle_ap(images, iou_thresh),
        mr2: oracle_mr2(images, iou_thresh),
        per_image,
    }
}

/// Every distinct detection score, high to low.
fn distinct_scores(images: &[RawImage]) -> Vec<f64> {
    let mut scores: Vec<f64> = images
        .iter()
        .flat_map(|(dets, _)| dets.iter().map(|d| d.1))
        .collect();
    scores.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    scores.dedup();
    scores
}

/// `(precision, recall, fppi)` per distinct score threshold, each point
/// produced by re-matching the entire corpus from scratch on the subset of
/// detections at or above that score.
fn literal_sweep(images: &[RawImage], iou_thresh: f64) -> Vec<(f64, f64, f64)> {
    let num_gts: usize = images.iter().map(|(_, gts)| gts.len()).sum();
    let mut points = Vec::new();
    for t in distinct_scores(images) {
        let mut tp = 0;
        let mut fp = 0;
        for (dets, gts) in images {
            let admitted: Vec<RawDet> = dets.iter().filter(|d| d.1 >= t).cloned().collect();
            let (i_tp, i_fp, _) = oracle_counts(&admitted, gts, iou_thresh);
            tp += i_tp;
            fp += i_fp;
        }
        points.push((
            tp as f64 / (tp + fp) as f64,
            tp as f64 / num_gts as f64,
            fp as f64 / images.len() as f64,
        ));
    }
    points
}

/// All-point average precision via a quadratic precision envelope over the
/// literal sweep.
pub fn oracle_ap(images: &[RawImage], iou_thresh: f64) -> f64 {
    let points = literal_sweep(images, iou_thresh);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..points.len() {
        let mut env = 0.0f64;
        for &(p, _, _) in &points[k..] {
            env = env.max(p);
        }
        ap += (points[k].1 - prev_recall) * env;
        prev_recall = points[k].1;
    }
    ap
}

/// Log-average miss rate over the nine standard FPPI targets, from the
/// literal sweep.
pub fn oracle_mr2(images: &[RawImage], iou_thresh: f64) -> f64 {
    let points = literal_sweep(images, iou_thresh);
    let mut log_sum = 0.0;
    for k in 0..9 {
        let target = 10f64.powf(-2.0 + 0.25 * k as f64);
        let mut miss = 1.0f64;
        for &(_, recall, fppi) in &points {
            if fppi <= target {
                miss = miss.min(1.0 - recall);
            }
        }
        log_sum += miss.max(1e-10).ln();
    }
    (log_sum / 9.0).exp()
}

/// Literal guided-suppression transcription: an active mask, a strict-max
/// scan for the next winner (earliest on ties), in-place decay of everyone
/// still active, then the floor and top-k cut on the finished list. Input
/// and output are `(bbox, score, embedding)` triples; output is selection
/// order.
pub fn oracle_eg_nms(
    dets: &[(RawBox, f64, f64)],
    sigma: f64,
    delta: f64,
    score_floor: f64,
    top_k: usize,
) -> Vec<(RawBox, f64, f64)> {
    let mut scores: Vec<f64> = dets.iter().map(|d| d.1).collect();
    let mut active = vec![true; dets.len()];
    let mut out: Vec<(RawBox, f64, f64)> = Vec::new();
    for _ in 0..dets.len() {
        let mut winner = None;
        for (i, &alive) in active.iter().enumerate() {
            if alive && winner.map_or(true, |w: usize| scores[i] > scores[w]) {
                winner = Some(i);
            }
        }
        let w = winner.expect("one live detection per round");
        active[w] = false;
        for i in 0..dets.len() {
            if active[i] {
                let v = box_iou(&dets[w].0, &dets[i].0);
                let d = (dets[w].2 - dets[i].2).abs();
                let s = 1.0 / (1.0 + (-2.0 * (d - delta)).exp());
                scores[i] *= (-v.powf(1.5 + s) / sigma).exp();
            }
        }
        out.push((dets[w].0, scores[w], dets[w].2));
    }
    out.retain(|d| d.1 >= score_floor);
    out.truncate(top_k);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn counts_credit_one_claimant_per_ground_truth() {
        let gts = vec![[0.0, 0.0, 10.0, 10.0], [100.0, 0.0, 110.0, 10.0]];
        let dets = vec![
            ([0.0, 0.0, 10.0, 10.0], 0.6),
            ([0.5, 0.0, 10.5, 10.0], 0.9),
            ([200.0, 0.0, 210.0, 10.0], 0.8),
        ];
        // Both near boxes claim gt 0; the 0.9 one wins, the 0.6 one is a
        // false positive; gt 1 is missed; the far box is spurious.
        assert_eq!(oracle_counts(&dets, &gts, 0.5), (1, 2, 1));
    }

    #[test]
    fn perfect_single_image_corpus() {
        let gts = vec![[0.0, 0.0, 10.0, 10.0], [20.0, 0.0, 30.0, 10.0]];
        let dets: Vec<RawDet> = vec![(gts[0], 0.9), (gts[1], 0.8)];
        let s = oracle_metrics(&[(dets, gts)], 0.5);
        assert_eq!(s.wcr, 1.0);
        assert_eq!(s.aer, 0.0);
        assert_eq!(s.accuracy, 1.0);
        assert_eq!(s.ap, 1.0);
        // Perfect corpus: every target sees zero miss, clamped at the floor.
        assert!(s.mr2 < 1e-9, "{}", s.mr2);
    }

    #[test]
    fn ap_for_one_false_positive_between_two_hits() {
        // Scores: hit 0.9, miss 0.8, hit 0.7 on a 2-gt image. The literal
        // sweep gives precisions 1, 1/2, 2/3 at recalls 1/2, 1/2, 1.
        let gts = vec![[0.0, 0.0, 10.0, 10.0], [20.0, 0.0, 30.0, 10.0]];
        let dets = vec![
            ([0.0, 0.0, 10.0, 10.0], 0.9),
            ([50.0, 0.0, 60.0, 10.0], 0.8),
            ([20.0, 0.0, 30.0, 10.0], 0.7),
        ];
        let ap = oracle_ap(&[(dets, gts)], 0.5);
        assert_relative_eq!(ap, 0.5 * 1.0 + 0.5 * (2.0 / 3.0), epsilon = 1e-15);
    }

    #[test]
    fn guided_suppression_trace_matches_frozen_values() {
        let a = [0.0, 0.0, 2.0, 1.0];
        let b = [1.0, 0.0, 3.0, 1.0];
        let out = oracle_eg_nms(&[(a, 1.0, 0.0), (b, 0.8, 0.0)], 0.5, 0.3, 0.0, 100);
        assert_relative_eq!(out[1].1, 0.6163570169052653, epsilon = 1e-15);
        let out = oracle_eg_nms(&[(a, 1.0, 0.0), (b, 0.8, 2.0)], 0.5, 0.3, 0.0, 100);
        assert_relative_eq!(out[1].1, 0.7004183772544191, epsilon = 1e-15);
    }
}
