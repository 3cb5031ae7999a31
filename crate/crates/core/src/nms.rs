//! Non-maximum suppression variants: classic hard suppression, Gaussian
//! soft decay, and the embedding-guided decay.
//!
//! The embedding-guided form keys the decay exponent on how far apart two
//! detections sit in embedding space. Overlapping boxes with distant
//! embeddings are probably two different objects, so their scores are
//! decayed more gently than overlapping boxes that embed close together:
//!
//! ```text
//! d    = |e_max - e_i|
//! S(d) = 1 / (1 + exp(-2 (d - delta)))
//! s_i <- s_i * exp(-iou(b_max, b_i)^(1.5 + S(d)) / sigma)
//! ```
//!
//! Both soft variants run the decay loop to exhaustion, then apply the
//! score floor and the top-k cut to the finished list.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::iou;
use crate::Detection;

#[derive(Debug, Error, PartialEq)]
pub enum NmsError {
    #[error("detection {index} has no embedding; embedding-guided decay needs one per box")]
    MissingEmbedding { index: usize },
    #[error("detection {index} has a non-finite score or embedding")]
    NonFinite { index: usize },
    #[error("suppression parameter {name} = {value} out of range")]
    BadParameter { name: &'static str, value: f64 },
}

/// Parameters shared by the soft decay variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    /// Gaussian decay width.
    pub sigma: f64,
    /// Embedding distance at which the guided exponent sits halfway.
    pub delta: f64,
    /// Detections ending below this score are dropped after the loop.
    pub score_floor: f64,
    /// At most this many detections survive, highest scores first.
    pub top_k: usize,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            delta: 0.3,
            score_floor: 0.001,
            top_k: 100,
        }
    }
}

impl NmsConfig {
    fn validate(&self) -> Result<(), NmsError> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(NmsError::BadParameter {
                name: "sigma",
                value: self.sigma,
            });
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(NmsError::BadParameter {
                name: "delta",
                value: self.delta,
            });
        }
        if !(self.score_floor.is_finite() && self.score_floor >= 0.0) {
            return Err(NmsError::BadParameter {
                name: "score_floor",
                value: self.score_floor,
            });
        }
        Ok(())
    }
}

fn check_scores(dets: &[Detection]) -> Result<(), NmsError> {
    for (index, d) in dets.iter().enumerate() {
        let finite = d.score.is_finite() && d.embedding.map_or(true, f64::is_finite);
        if !finite {
            return Err(NmsError::NonFinite { index });
        }
    }
    Ok(())
}

/// Sigmoid weight steering the guided exponent: 0.5 at `d == delta`,
/// toward 1 for distant embeddings, toward 0 for close ones.
pub fn sigmoid_weight(d: f64, delta: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * (d - delta)).exp())
}

/// Multiplicative decay applied by the guided variant for one pair:
/// `exp(-iou^(1.5 + S(d)) / sigma)`.
pub fn guided_decay(iou: f64, d: f64, sigma: f64, delta: f64) -> f64 {
    (-iou.powf(1.5 + sigmoid_weight(d, delta)) / sigma).exp()
}

/// Classic suppression: keep boxes in score order, drop any box whose IoU
/// with an already-kept box reaches `iou_thresh`. Score ties keep input
/// order.
pub fn hard_nms(dets: &[Detection], iou_thresh: f64) -> Result<Vec<Detection>, NmsError> {
    if !(iou_thresh.is_finite() && iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(NmsError::BadParameter {
            name: "iou_thresh",
            value: iou_thresh,
        });
    }
    check_scores(dets)?;
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        if kept.iter().all(|k| iou(&k.bbox, &dets[i].bbox) < iou_thresh) {
            kept.push(dets[i].clone());
        }
    }
    Ok(kept)
}

fn finish(mut selected: Vec<Detection>, cfg: &NmsConfig) -> Vec<Detection> {
    selected.retain(|d| d.score >= cfg.score_floor);
    selected.truncate(cfg.top_k);
    selected
}

/// Run the select-and-decay loop to exhaustion. `decay(winner, other)`
/// returns the factor applied to `other`'s score. Emission order is
/// selection order, which is non-increasing in final score; ties pick the
/// earliest remaining detection.
fn decay_loop(
    dets: &[Detection],
    mut decay: impl FnMut(&Detection, &Detection) -> f64,
) -> Vec<Detection> {
    let mut pool: Vec<Detection> = dets.to_vec();
    let mut selected = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            if pool[i].score > pool[best].score {
                best = i;
            }
        }
        let winner = pool.remove(best);
        for other in &mut pool {
            other.score *= decay(&winner, other);
        }
        selected.push(winner);
    }
    selected
}

/// Gaussian soft suppression: every selected box decays the rest by
/// `exp(-iou^2 / sigma)`.
pub fn soft_nms(dets: &[Detection], cfg: &NmsConfig) -> Result<Vec<Detection>, NmsError> {
    cfg.validate()?;
    check_scores(dets)?;
    let selected = decay_loop(dets, |winner, other| {
        let v = iou(&winner.bbox, &other.bbox);
        (-v * v / cfg.sigma).exp()
    });
    Ok(finish(selected, cfg))
}

/// Embedding-guided suppression. Every detection must carry an embedding.
pub fn embedding_guided_nms(
    dets: &[Detection],
    cfg: &NmsConfig,
) -> Result<Vec<Detection>, NmsError> {
    cfg.validate()?;
    check_scores(dets)?;
    if let Some(index) = dets.iter().position(|d| d.embedding.is_none()) {
        return Err(NmsError::MissingEmbedding { index });
    }
    let selected = decay_loop(dets, |winner, other| {
        let d = (winner.embedding.expect("checked") - other.embedding.expect("checked")).abs();
        guided_decay(iou(&winner.bbox, &other.bbox), d, cfg.sigma, cfg.delta)
    });
    Ok(finish(selected, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(b: BBox, score: f64, embedding: f64) -> Detection {
        Detection {
            bbox: b,
            score,
            embedding: Some(embedding),
        }
    }

    fn plain(b: BBox, score: f64) -> Detection {
        Detection {
            bbox: b,
            score,
            embedding: None,
        }
    }

    fn loose() -> NmsConfig {
        NmsConfig {
            score_floor: 0.0,
            ..NmsConfig::default()
        }
    }

    #[test]
    fn hard_nms_drops_duplicates_keeps_distant() {
        let dets = vec![
            plain(bb(0.0, 0.0, 10.0, 10.0), 0.9),
            plain(bb(0.5, 0.0, 10.5, 10.0), 0.8),
            plain(bb(100.0, 0.0, 110.0, 10.0), 0.7),
        ];
        let kept = hard_nms(&dets, 0.5).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].score, 0.9);
        assert_eq!(kept[1].score, 0.7);
    }

    #[test]
    fn hard_nms_threshold_is_inclusive() {
        // Contained box covering exactly half the keeper: IoU = 0.5.
        let dets = vec![
            plain(bb(0.0, 0.0, 10.0, 10.0), 0.9),
            plain(bb(0.0, 0.0, 10.0, 5.0), 0.8),
        ];
        assert_eq!(hard_nms(&dets, 0.5).unwrap().len(), 1);
        // Nudge the threshold above 0.5 and the box survives.
        assert_eq!(hard_nms(&dets, 0.51).unwrap().len(), 2);
    }

    #[test]
    fn soft_nms_decays_identical_box_by_frozen_factor() {
        let dets = vec![
            plain(bb(0.0, 0.0, 10.0, 10.0), 1.0),
            plain(bb(0.0, 0.0, 10.0, 10.0), 0.8),
        ];
        let out = soft_nms(&dets, &loose()).unwrap();
        assert_eq!(out.len(), 2);
        assert_relative_eq!(out[1].score, 0.10826822658929017, epsilon = 1e-15);
        // Disjoint boxes are untouched.
        let dets = vec![
            plain(bb(0.0, 0.0, 10.0, 10.0), 1.0),
            plain(bb(50.0, 0.0, 60.0, 10.0), 0.8),
        ];
        let out = soft_nms(&dets, &loose()).unwrap();
        assert_eq!(out[1].score, 0.8);
    }

    #[test]
    fn guided_decay_worked_trace() {
        // Boxes with IoU exactly 1/3, second score 0.8.
        let a = bb(0.0, 0.0, 2.0, 1.0);
        let b = bb(1.0, 0.0, 3.0, 1.0);
        assert_relative_eq!(iou(&a, &b), 1.0 / 3.0, epsilon = 1e-15);

        // Equal embeddings: d = 0, S = 0.35434369377420455.
        let out = embedding_guided_nms(
            &[det(a, 1.0, 0.0), det(b, 0.8, 0.0)],
            &loose(),
        )
        .unwrap();
        assert_relative_eq!(out[1].score, 0.6163570169052653, epsilon = 1e-12);

        // Distant embeddings: d = 2, S = 0.9677045353015494, gentler decay.
        let out = embedding_guided_nms(
            &[det(a, 1.0, 0.0), det(b, 0.8, 2.0)],
            &loose(),
        )
        .unwrap();
        assert_relative_eq!(out[1].score, 0.7004183772544191, epsilon = 1e-12);
    }

    #[test]
    fn sigmoid_weight_is_half_at_delta() {
        assert_eq!(sigmoid_weight(0.3, 0.3), 0.5);
        assert_relative_eq!(sigmoid_weight(0.0, 0.3), 0.35434369377420455, epsilon = 1e-15);
        assert_relative_eq!(sigmoid_weight(2.0, 0.3), 0.9677045353015494, epsilon = 1e-15);
    }

    #[test]
    fn equal_embeddings_reduce_to_soft_nms_with_shifted_exponent() {
        let dets = vec![
            det(bb(0.0, 0.0, 4.0, 2.0), 0.95, 1.2),
            det(bb(1.0, 0.0, 5.0, 2.0), 0.7, 1.2),
            det(bb(2.0, 0.5, 6.0, 2.5), 0.5, 1.2),
        ];
        let out = embedding_guided_nms(&dets, &loose()).unwrap();
        // Replay the select-and-decay loop with the constant exponent
        // 1.5 + S(0) that equal embeddings reduce to.
        let p = 1.5 + sigmoid_weight(0.0, 0.3);
        let mut scores = [0.95f64, 0.7, 0.5];
        let boxes = [dets[0].bbox, dets[1].bbox, dets[2].bbox];
        let mut active = [true; 3];
        let mut expected = Vec::new();
        for _ in 0..3 {
            let w = (0..3)
                .filter(|&i| active[i])
                .max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap())
                .unwrap();
            active[w] = false;
            for i in 0..3 {
                if active[i] {
                    scores[i] *= (-iou(&boxes[w], &boxes[i]).powf(p) / 0.5).exp();
                }
            }
            expected.push(scores[w]);
        }
        for (o, e) in out.iter().zip(expected) {
            assert_relative_eq!(o.score, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn floor_drops_finished_scores_and_top_k_truncates() {
        // Chain a > b > c in score; a decays b heavily and c lightly, then
        // b decays c again on its own turn.
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(4.0, 0.0, 14.0, 10.0);
        let c = bb(12.0, 0.0, 22.0, 10.0);
        let dets = vec![det(a, 1.0, 0.0), det(b, 0.6, 0.0), det(c, 0.35, 0.0)];
        let out = embedding_guided_nms(&dets, &loose()).unwrap();
        let b_expected = 0.6 * guided_decay(iou(&a, &b), 0.0, 0.5, 0.3);
        let c_expected = 0.35 * guided_decay(iou(&b, &c), 0.0, 0.5, 0.3);
        assert_eq!(out[0].score, 1.0);
        assert_relative_eq!(out[1].score, b_expected, epsilon = 1e-12);
        assert_relative_eq!(out[2].score, c_expected, epsilon = 1e-12);

        // A floor between the final scores keeps exactly the survivors.
        let cfg = NmsConfig {
            score_floor: (b_expected + c_expected) / 2.0,
            ..NmsConfig::default()
        };
        let out = embedding_guided_nms(&dets, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert_relative_eq!(out[1].score, b_expected, epsilon = 1e-12);

        let cfg = NmsConfig {
            top_k: 1,
            score_floor: 0.0,
            ..NmsConfig::default()
        };
        assert_eq!(embedding_guided_nms(&dets, &cfg).unwrap().len(), 1);
    }

    #[test]
    fn missing_embedding_is_reported_with_its_index() {
        let dets = vec![
            det(bb(0.0, 0.0, 1.0, 1.0), 0.9, 0.0),
            plain(bb(2.0, 0.0, 3.0, 1.0), 0.8),
        ];
        assert_eq!(
            embedding_guided_nms(&dets, &loose()).unwrap_err(),
            NmsError::MissingEmbedding { index: 1 }
        );
    }

    #[test]
    fn non_finite_inputs_and_bad_parameters_are_rejected() {
        let dets = vec![plain(bb(0.0, 0.0, 1.0, 1.0), f64::NAN)];
        assert_eq!(
            soft_nms(&dets, &loose()).unwrap_err(),
            NmsError::NonFinite { index: 0 }
        );
        let cfg = NmsConfig {
            sigma: 0.0,
            ..NmsConfig::default()
        };
        assert!(matches!(
            soft_nms(&[], &cfg),
            Err(NmsError::BadParameter { name: "sigma", .. })
        ));
        assert!(matches!(
            hard_nms(&[], 0.0),
            Err(NmsError::BadParameter { name: "iou_thresh", .. })
        ));
    }

    #[test]
    fn empty_input_yields_empty_output() {
        assert_eq!(soft_nms(&[], &loose()).unwrap(), vec![]);
        assert_eq!(embedding_guided_nms(&[], &loose()).unwrap(), vec![]);
        assert_eq!(hard_nms(&[], 0.5).unwrap(), vec![]);
    }

    fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
        proptest::collection::vec(
            ((0u32..8, 0u32..8), 0.05f64..1.0, -2.0f64..2.0).prop_map(|((i, j), s, e)| {
                det(
                    bb(
                        3.0 * i as f64,
                        3.0 * j as f64,
                        3.0 * i as f64 + 5.0,
                        3.0 * j as f64 + 5.0,
                    ),
                    s,
                    e,
                )
            }),
            0..12,
        )
    }

    proptest! {
        #[test]
        fn selection_order_is_score_sorted_and_scores_never_rise(dets in arb_dets()) {
            let out = embedding_guided_nms(&dets, &loose()).unwrap();
            prop_assert_eq!(out.len(), dets.len());
            for w in out.windows(2) {
                prop_assert!(w[1].score <= w[0].score + 1e-15);
            }
            if let Some(top) = dets.iter().map(|d| d.score).fold(None, |m: Option<f64>, s| {
                Some(m.map_or(s, |v| v.max(s)))
            }) {
                // The first winner is never decayed; nothing exceeds it.
                prop_assert_eq!(out[0].score, top);
                for o in &out {
                    prop_assert!(o.score <= top);
                }
            }
        }

        #[test]
        fn larger_embedding_distance_never_decays_more(
            iou_target in 0.05f64..0.95,
            d1 in 0.0f64..3.0,
            d2 in 0.0f64..3.0,
        ) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(
                guided_decay(iou_target, hi, 0.5, 0.3)
                    >= guided_decay(iou_target, lo, 0.5, 0.3)
            );
        }

        #[test]
        fn hard_nms_survivors_are_mutually_below_threshold(dets in arb_dets()) {
            let kept = hard_nms(&dets, 0.5).unwrap();
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    prop_assert!(iou(&kept[i].bbox, &kept[j].bbox) < 0.5);
                }
            }
        }
    }
}
