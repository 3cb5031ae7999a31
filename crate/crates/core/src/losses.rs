//! Training losses for embedding grouping and occlusion-aware box
//! regression, with closed-form gradients for every differentiable path.
//!
//! The pull loss draws embeddings of proposals covering the same object
//! toward their group mean, reweighted so stragglers dominate; the push
//! loss separates the mean embeddings of objects that overlap each other.
//! The repulsion losses penalize a predicted box for covering a neighboring
//! ground truth: the plain variant scores `IoG(B, R)` directly, the
//! truncated normalized variant rescales it so only the part of the overlap
//! attributable to the prediction's own shift is charged, which keeps
//! heavily occluded ground truths from dominating training.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iog, BBox};

/// Truncation point of `smooth_ln`.
pub const SMOOTH_LN_SIGMA: f64 = 0.5;
/// Loss paths clamp ratio inputs to `1 - CLAMP_EPS` so exact coincidence
/// stays finite.
pub const CLAMP_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("no embedding groups given")]
    EmptyGroups,
    #[error("embedding group {index} is empty")]
    EmptyGroup { index: usize },
    #[error("non-finite embedding in group {group}")]
    NonFinite { group: usize },
    #[error("{left} entries on one side, {right} on the other")]
    LengthMismatch { left: usize, right: usize },
    #[error("partner index {partner} invalid for entry {index}")]
    BadPartner { index: usize, partner: usize },
    #[error("no positive proposals: repulsion losses average over them")]
    NoPositives,
    #[error("loss parameter {name} = {value} out of range")]
    BadParameter { name: &'static str, value: f64 },
}

/// Piecewise-smooth log barrier: `-ln(1 - x)` up to `sigma`, continued
/// linearly (with matching slope) above it. Continuously differentiable at
/// the junction. Callers own the domain `x < 1`.
pub fn smooth_ln(x: f64, sigma: f64) -> f64 {
    if x <= sigma {
        // Written as a subtraction so x = 0 yields +0.0, not -0.0.
        0.0 - (1.0 - x).ln()
    } else {
        (x - sigma) / (1.0 - sigma) - (1.0 - sigma).ln()
    }
}

/// Derivative of [`smooth_ln`]: `1 / (1 - x)` below the truncation point,
/// constant `1 / (1 - sigma)` above it.
pub fn smooth_ln_deriv(x: f64, sigma: f64) -> f64 {
    if x <= sigma {
        1.0 / (1.0 - x)
    } else {
        1.0 / (1.0 - sigma)
    }
}

fn check_sigma(sigma: f64) -> Result<(), LossError> {
    if !(sigma.is_finite() && (0.0..1.0).contains(&sigma)) {
        return Err(LossError::BadParameter {
            name: "sigma_s",
            value: sigma,
        });
    }
    Ok(())
}

fn check_nonneg(name: &'static str, value: f64) -> Result<(), LossError> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(LossError::BadParameter { name, value });
    }
    Ok(())
}

/// Embeddings of positive proposals, grouped by the ground truth each
/// proposal covers. Construction rejects empty groups so means are always
/// defined.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedEmbeddings {
    groups: Vec<Vec<f64>>,
}

impl GroupedEmbeddings {
    pub fn new(groups: Vec<Vec<f64>>) -> Result<Self, LossError> {
        if groups.is_empty() {
            return Err(LossError::EmptyGroups);
        }
        for (index, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(LossError::EmptyGroup { index });
            }
            if g.iter().any(|e| !e.is_finite()) {
                return Err(LossError::NonFinite { group: index });
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    /// Total number of embeddings across groups.
    pub fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Per-group arithmetic means.
    pub fn means(&self) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| g.iter().sum::<f64>() / g.len() as f64)
            .collect()
    }
}

/// Focal-style weight applied to one deviation: `(theta + u)^lambda * u^2`.
fn pull_term(u: f64, theta: f64, lambda: f64) -> f64 {
    (theta + u).powf(lambda) * u * u
}

/// Derivative of [`pull_term`] in `u`. Zero deviations contribute zero
/// (the `lambda - 1` power is never evaluated there).
fn pull_term_deriv(u: f64, theta: f64, lambda: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    lambda * (theta + u).powf(lambda - 1.0) * u * u + 2.0 * u * (theta + u).powf(lambda)
}

/// Pull loss: mean over all positive proposals of the weighted squared
/// deviation from the proposal's group mean. The weight
/// `(theta + |e - mean|)^lambda` makes far-out embeddings count extra.
pub fn pull_loss(grouped: &GroupedEmbeddings, theta: f64, lambda: f64) -> Result<f64, LossError> {
    check_nonneg("theta", theta)?;
    check_nonneg("lambda", lambda)?;
    let n = grouped.total() as f64;
    let mut sum = 0.0;
    for (g, mean) in grouped.groups.iter().zip(grouped.means()) {
        for &e in g {
            sum += pull_term((e - mean).abs(), theta, lambda);
        }
    }
    Ok(sum / n)
}

/// Gradient of [`pull_loss`] with respect to every embedding, in the same
/// group layout. Accounts for each embedding's effect on its group mean.
pub fn pull_loss_grad(
    grouped: &GroupedEmbeddings,
    theta: f64,
    lambda: f64,
) -> Result<Vec<Vec<f64>>, LossError> {
    check_nonneg("theta", theta)?;
    check_nonneg("lambda", lambda)?;
    let n = grouped.total() as f64;
    let mut out = Vec::with_capacity(grouped.groups.len());
    for (g, mean) in grouped.groups.iter().zip(grouped.means()) {
        let signed: Vec<f64> = g
            .iter()
            .map(|&e| {
                let dev = e - mean;
                pull_term_deriv(dev.abs(), theta, lambda) * dev.signum()
            })
            .collect();
        let mean_pressure = signed.iter().sum::<f64>() / g.len() as f64;
        out.push(signed.iter().map(|q| (q - mean_pressure) / n).collect());
    }
    Ok(out)
}

/// Push loss over group means. `partners[i]` is the index of the ground
/// truth overlapping `i` the most (`None` for isolated ones, which are
/// skipped entirely). Returns the hinge mean and how many entries it
/// averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushLoss {
    pub value: f64,
    pub considered: usize,
}

fn check_partners(means: &[f64], partners: &[Option<usize>]) -> Result<(), LossError> {
    if means.len() != partners.len() {
        return Err(LossError::LengthMismatch {
            left: means.len(),
            right: partners.len(),
        });
    }
    for (index, p) in partners.iter().enumerate() {
        if let Some(partner) = *p {
            if partner >= means.len() || partner == index {
                return Err(LossError::BadPartner { index, partner });
            }
        }
    }
    Ok(())
}

pub fn push_loss(
    means: &[f64],
    partners: &[Option<usize>],
    delta: f64,
) -> Result<PushLoss, LossError> {
    check_nonneg("push_delta", delta)?;
    check_partners(means, partners)?;
    let mut sum = 0.0;
    let mut considered = 0usize;
    for (i, p) in partners.iter().enumerate() {
        if let Some(r) = *p {
            sum += (delta - (means[i] - means[r]).abs()).max(0.0);
            considered += 1;
        }
    }
    Ok(PushLoss {
        value: if considered == 0 {
            0.0
        } else {
            sum / considered as f64
        },
        considered,
    })
}

/// Gradient of [`push_loss`] with respect to the group means. Only active
/// hinges (separation strictly inside `delta`) contribute.
pub fn push_loss_grad(
    means: &[f64],
    partners: &[Option<usize>],
    delta: f64,
) -> Result<Vec<f64>, LossError> {
    check_nonneg("push_delta", delta)?;
    check_partners(means, partners)?;
    let considered = partners.iter().filter(|p| p.is_some()).count();
    let mut grad = vec![0.0; means.len()];
    if considered == 0 {
        return Ok(grad);
    }
    let scale = 1.0 / considered as f64;
    for (i, p) in partners.iter().enumerate() {
        if let Some(r) = *p {
            let diff = means[i] - means[r];
            if diff.abs() < delta {
                let s = diff.signum();
                grad[i] -= s * scale;
                grad[r] += s * scale;
            }
        }
    }
    Ok(grad)
}

/// One positive proposal for the repulsion losses: its predicted box, the
/// ground truth it is attracted to, and the neighboring ground truth it
/// must keep away from (absent for isolated objects).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositiveProposal {
    pub pred: BBox,
    pub attract: BBox,
    pub repulse: Option<BBox>,
}

fn clamp_ratio(x: f64) -> f64 {
    x.max(0.0).min(1.0 - CLAMP_EPS)
}

/// Plain repulsion term for one proposal: `smooth_ln(IoG(pred, repulse))`,
/// input clamped away from 1.
pub fn repulsion_term(pred: &BBox, repulse: &BBox, sigma: f64) -> f64 {
    smooth_ln(clamp_ratio(iog(pred, repulse)), sigma)
}

/// Truncated normalized term: only overlap beyond what the attracted
/// ground truth already shares with the repulsed one is charged, rescaled
/// to use the full [0, 1) range. Zero whenever the repulsed box is
/// contained in the attracted one.
pub fn truncated_repulsion_term(pred: &BBox, attract: &BBox, repulse: &BBox, sigma: f64) -> f64 {
    let base = iog(attract, repulse);
    if base >= 1.0 {
        return 0.0;
    }
    let raw = (iog(pred, repulse) - base) / (1.0 - base);
    smooth_ln(clamp_ratio(raw), sigma)
}

/// Partial derivatives of `IoG(pred, other)` in the four corner
/// coordinates of `pred`. Zero on clamped edges (where moving the corner
/// does not change the intersection).
fn iog_grad_pred(pred: &BBox, other: &BBox) -> [f64; 4] {
    let wx = pred.x2().min(other.x2()) - pred.x1().max(other.x1());
    let wy = pred.y2().min(other.y2()) - pred.y1().max(other.y1());
    if wx <= 0.0 || wy <= 0.0 {
        return [0.0; 4];
    }
    let inv_area = 1.0 / other.area();
    [
        if pred.x1() > other.x1() { -wy * inv_area } else { 0.0 },
        if pred.y1() > other.y1() { -wx * inv_area } else { 0.0 },
        if pred.x2() < other.x2() { wy * inv_area } else { 0.0 },
        if pred.y2() < other.y2() { wx * inv_area } else { 0.0 },
    ]
}

/// Gradient of [`repulsion_term`] in the predicted box's corners. Zero in
/// the clamped regime (no overlap, or overlap pinned at the top clamp).
pub fn repulsion_grad(pred: &BBox, repulse: &BBox, sigma: f64) -> [f64; 4] {
    let x = iog(pred, repulse);
    if x <= 0.0 || x >= 1.0 - CLAMP_EPS {
        return [0.0; 4];
    }
    let g = smooth_ln_deriv(x, sigma);
    iog_grad_pred(pred, repulse).map(|d| g * d)
}

/// Gradient of [`truncated_repulsion_term`] in the predicted box's
/// corners.
pub fn truncated_repulsion_grad(
    pred: &BBox,
    attract: &BBox,
    repulse: &BBox,
    sigma: f64,
) -> [f64; 4] {
    let base = iog(attract, repulse);
    if base >= 1.0 {
        return [0.0; 4];
    }
    let raw = (iog(pred, repulse) - base) / (1.0 - base);
    if raw <= 0.0 || raw >= 1.0 - CLAMP_EPS {
        return [0.0; 4];
    }
    let g = smooth_ln_deriv(raw, sigma) / (1.0 - base);
    iog_grad_pred(pred, repulse).map(|d| g * d)
}

/// Mean plain repulsion loss over all positive proposals. Proposals with
/// no repulsion target contribute zero but stay in the denominator.
pub fn repulsion_loss(proposals: &[PositiveProposal], sigma: f64) -> Result<f64, LossError> {
    check_sigma(sigma)?;
    if proposals.is_empty() {
        return Err(LossError::NoPositives);
    }
    let sum: f64 = proposals
        .iter()
        .filter_map(|p| p.repulse.as_ref().map(|r| repulsion_term(&p.pred, r, sigma)))
        .sum();
    Ok(sum / proposals.len() as f64)
}

/// Mean truncated normalized repulsion loss over all positive proposals.
pub fn truncated_repulsion_loss(
    proposals: &[PositiveProposal],
    sigma: f64,
) -> Result<f64, LossError> {
    check_sigma(sigma)?;
    if proposals.is_empty() {
        return Err(LossError::NoPositives);
    }
    let sum: f64 = proposals
        .iter()
        .filter_map(|p| {
            p.repulse
                .as_ref()
                .map(|r| truncated_repulsion_term(&p.pred, &p.attract, r, sigma))
        })
        .sum();
    Ok(sum / proposals.len() as f64)
}

/// Build repulsion proposals from predicted boxes: each prediction whose
/// best IoU clears `iou_thresh` becomes a positive attracted to that ground
/// truth, repulsed by the ground truth it overlaps second-most (if any
/// overlap exists). Ties go to the lowest index.
pub fn assign_proposals(preds: &[BBox], gts: &[BBox], iou_thresh: f64) -> Vec<PositiveProposal> {
    use crate::geometry::iou;
    let mut out = Vec::new();
    for pred in preds {
        let mut best: Option<(usize, f64)> = None;
        let mut second: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            let v = iou(pred, gt);
            if best.map_or(true, |(_, bv)| v > bv) {
                second = best;
                best = Some((g, v));
            } else if v > 0.0 && second.map_or(true, |(_, sv)| v > sv) {
                second = Some((g, v));
            }
        }
        if let Some((g, bv)) = best {
            if bv >= iou_thresh {
                out.push(PositiveProposal {
                    pred: *pred,
                    attract: gts[g],
                    repulse: second.filter(|&(_, sv)| sv > 0.0).map(|(r, _)| gts[r]),
                });
            }
        }
    }
    out
}

/// Weights for combining the four training terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            gamma: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub det: f64,
    pub pull: f64,
    pub push: f64,
    pub repulsion: f64,
    pub total: f64,
}

/// `total = det + alpha * pull + beta * push + gamma * repulsion`.
pub fn combine_losses(
    det: f64,
    pull: f64,
    push: f64,
    repulsion: f64,
    weights: &LossWeights,
) -> LossBreakdown {
    LossBreakdown {
        det,
        pull,
        push,
        repulsion,
        total: det + weights.alpha * pull + weights.beta * push + weights.gamma * repulsion,
    }
}

/// One sample of [`shift_curve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftCurvePoint {
    pub shift: f64,
    pub rl: f64,
    pub tnrl: f64,
}

/// Compare the two repulsion variants on the canonical drift experiment:
/// two equal unit-height boxes whose IoU is `overlap`, with the prediction
/// sliding linearly from its own ground truth (shift 0) onto the neighbor
/// (shift 1). The `rl` column reports the plain loss in excess of its
/// floor at shift 0, so both columns start at zero and measure pure drift
/// sensitivity.
pub fn shift_curve(
    overlap: f64,
    steps: usize,
    sigma: f64,
) -> Result<Vec<ShiftCurvePoint>, LossError> {
    check_sigma(sigma)?;
    if !(overlap.is_finite() && overlap > 0.0 && overlap < 1.0) {
        return Err(LossError::BadParameter {
            name: "overlap",
            value: overlap,
        });
    }
    if steps < 2 {
        return Err(LossError::BadParameter {
            name: "steps",
            value: steps as f64,
        });
    }
    // Unit-height boxes of width 1 at horizontal offset d have
    // IoU = (1 - d) / (1 + d); invert for the offset.
    let d = (1.0 - overlap) / (1.0 + overlap);
    let attract = BBox::new(0.0, 0.0, 1.0, 1.0).expect("unit box");
    let repulse = attract.shifted(d, 0.0);
    let floor = repulsion_term(&attract, &repulse, sigma);
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 / (steps - 1) as f64;
        let pred = attract.shifted(t * d, 0.0);
        out.push(ShiftCurvePoint {
            shift: t,
            rl: repulsion_term(&pred, &repulse, sigma) - floor,
            tnrl: truncated_repulsion_term(&pred, &attract, &repulse, sigma),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn smooth_ln_matches_log_below_and_line_above() {
        assert_eq!(smooth_ln(0.0, 0.5), 0.0);
        assert_eq!(smooth_ln(0.4, 0.5), 0.5108256237659907);
        assert_relative_eq!(
            smooth_ln(0.75, 0.5),
            0.5 + std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        // Continuity and slope match at the junction.
        let at = smooth_ln(0.5, 0.5);
        assert_relative_eq!(at, std::f64::consts::LN_2, epsilon = 1e-15);
        let eps = 1e-9;
        assert_relative_eq!(smooth_ln(0.5 + eps, 0.5), at + 2.0 * eps, epsilon = 1e-12);
        assert_eq!(smooth_ln_deriv(0.5, 0.5), 2.0);
        assert_eq!(smooth_ln_deriv(0.9, 0.5), 2.0);
        assert_relative_eq!(smooth_ln_deriv(0.25, 0.5), 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn grouped_embeddings_reject_bad_input() {
        assert_eq!(
            GroupedEmbeddings::new(vec![]).unwrap_err(),
            LossError::EmptyGroups
        );
        assert_eq!(
            GroupedEmbeddings::new(vec![vec![1.0], vec![]]).unwrap_err(),
            LossError::EmptyGroup { index: 1 }
        );
        assert_eq!(
            GroupedEmbeddings::new(vec![vec![f64::NAN]]).unwrap_err(),
            LossError::NonFinite { group: 0 }
        );
    }

    #[test]
    fn pull_loss_worked_example() {
        // One group [1, 2, 3]: deviations 1, 0, 1 weighted by 1.5^2.
        let g = GroupedEmbeddings::new(vec![vec![1.0, 2.0, 3.0]]).unwrap();
        assert_relative_eq!(pull_loss(&g, 0.5, 2.0).unwrap(), 1.5, epsilon = 1e-15);
        // Second group with zero spread only grows the denominator.
        let g = GroupedEmbeddings::new(vec![vec![1.0, 2.0, 3.0], vec![7.0]]).unwrap();
        assert_relative_eq!(pull_loss(&g, 0.5, 2.0).unwrap(), 4.5 / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn pull_loss_is_zero_for_tight_groups() {
        let g = GroupedEmbeddings::new(vec![vec![3.0; 5], vec![-2.0; 3]]).unwrap();
        assert_eq!(pull_loss(&g, 0.5, 2.0).unwrap(), 0.0);
        assert!(pull_loss_grad(&g, 0.5, 2.0)
            .unwrap()
            .iter()
            .flatten()
            .all(|&d| d == 0.0));
    }

    #[test]
    fn pull_rejects_negative_parameters() {
        let g = GroupedEmbeddings::new(vec![vec![1.0]]).unwrap();
        assert!(matches!(
            pull_loss(&g, -0.1, 2.0),
            Err(LossError::BadParameter { name: "theta", .. })
        ));
        assert!(matches!(
            pull_loss(&g, 0.5, -1.0),
            Err(LossError::BadParameter { name: "lambda", .. })
        ));
    }

    #[test]
    fn pull_grad_matches_finite_differences() {
        let groups = vec![vec![0.3, 1.7, -0.4], vec![2.0, 2.5]];
        let g = GroupedEmbeddings::new(groups.clone()).unwrap();
        let grad = pull_loss_grad(&g, 0.5, 2.0).unwrap();
        let h = 1e-6;
        for gi in 0..groups.len() {
            for ei in 0..groups[gi].len() {
                let mut plus = groups.clone();
                plus[gi][ei] += h;
                let mut minus = groups.clone();
                minus[gi][ei] -= h;
                let fd = (pull_loss(&GroupedEmbeddings::new(plus).unwrap(), 0.5, 2.0).unwrap()
                    - pull_loss(&GroupedEmbeddings::new(minus).unwrap(), 0.5, 2.0).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(grad[gi][ei], fd, epsilon = 1e-7, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn push_loss_hinges_on_mean_separation() {
        let means = [0.0, 0.4];
        let partners = [Some(1), Some(0)];
        let p = push_loss(&means, &partners, 1.0).unwrap();
        assert_relative_eq!(p.value, 0.6, epsilon = 1e-15);
        assert_eq!(p.considered, 2);
        // Separation past delta costs nothing.
        let p = push_loss(&[0.0, 1.5], &partners, 1.0).unwrap();
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn push_loss_skips_isolated_entries() {
        let means = [0.0, 0.4, 123.0];
        let partners = [Some(1), Some(0), None];
        let p = push_loss(&means, &partners, 1.0).unwrap();
        assert_relative_eq!(p.value, 0.6, epsilon = 1e-15);
        assert_eq!(p.considered, 2);
        let all_isolated = push_loss(&means, &[None, None, None], 1.0).unwrap();
        assert_eq!(all_isolated, PushLoss { value: 0.0, considered: 0 });
    }

    #[test]
    fn push_loss_validates_partners() {
        assert_eq!(
            push_loss(&[0.0], &[Some(0)], 1.0).unwrap_err(),
            LossError::BadPartner { index: 0, partner: 0 }
        );
        assert_eq!(
            push_loss(&[0.0], &[Some(3)], 1.0).unwrap_err(),
            LossError::BadPartner { index: 0, partner: 3 }
        );
        assert_eq!(
            push_loss(&[0.0, 1.0], &[None], 1.0).unwrap_err(),
            LossError::LengthMismatch { left: 2, right: 1 }
        );
    }

    #[test]
    fn push_grad_matches_finite_differences() {
        let means = vec![0.0, 0.4, 0.9, 5.0];
        let partners = vec![Some(1), Some(0), Some(1), None];
        let grad = push_loss_grad(&means, &partners, 1.0).unwrap();
        let h = 1e-6;
        for i in 0..means.len() {
            let mut plus = means.clone();
            plus[i] += h;
            let mut minus = means.clone();
            minus[i] -= h;
            let fd = (push_loss(&plus, &partners, 1.0).unwrap().value
                - push_loss(&minus, &partners, 1.0).unwrap().value)
                / (2.0 * h);
            assert_relative_eq!(grad[i], fd, epsilon = 1e-9);
        }
    }

    #[test]
    fn repulsion_terms_worked_values() {
        // Prediction covers half the repulsed box.
        let pred = bb(0.0, 0.0, 2.0, 1.0);
        let repulse = bb(1.0, 0.0, 3.0, 1.0);
        assert_relative_eq!(
            repulsion_term(&pred, &repulse, 0.5),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        // The attracted box already covers a quarter of the repulsed one:
        // the normalized ratio is (0.5 - 0.25) / 0.75 = 1/3.
        let attract = bb(-0.5, 0.0, 1.5, 1.0);
        assert_relative_eq!(
            truncated_repulsion_term(&pred, &attract, &repulse, 0.5),
            1.5f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn truncated_term_is_zero_at_home_and_capped_at_the_neighbor() {
        let g = bb(0.0, 0.0, 1.0, 1.0);
        let r = bb(0.4, 0.0, 1.4, 1.0);
        assert_eq!(truncated_repulsion_term(&g, &g, &r, 0.5), 0.0);
        let cap = smooth_ln(1.0 - CLAMP_EPS, 0.5);
        assert_relative_eq!(truncated_repulsion_term(&r, &g, &r, 0.5), cap, epsilon = 1e-12);
    }

    #[test]
    fn truncated_term_ignores_contained_neighbors() {
        let attract = bb(0.0, 0.0, 10.0, 10.0);
        let repulse = bb(2.0, 2.0, 4.0, 4.0);
        // Even a prediction sitting right on the neighbor costs nothing.
        assert_eq!(
            truncated_repulsion_term(&repulse, &attract, &repulse, 0.5),
            0.0
        );
        assert_eq!(
            truncated_repulsion_grad(&repulse, &attract, &repulse, 0.5),
            [0.0; 4]
        );
    }

    #[test]
    fn repulsion_losses_average_over_all_positives() {
        let g0 = bb(0.0, 0.0, 1.0, 1.0);
        let r0 = bb(0.5, 0.0, 1.5, 1.0);
        let isolated = bb(100.0, 0.0, 101.0, 1.0);
        let proposals = vec![
            PositiveProposal { pred: bb(0.25, 0.0, 1.25, 1.0), attract: g0, repulse: Some(r0) },
            PositiveProposal { pred: isolated, attract: isolated, repulse: None },
        ];
        // Only the first proposal accrues loss; the isolated one dilutes.
        let single = repulsion_term(&proposals[0].pred, &r0, 0.5);
        assert_relative_eq!(
            repulsion_loss(&proposals, 0.5).unwrap(),
            single / 2.0,
            epsilon = 1e-15
        );
        assert_eq!(
            repulsion_loss(&[], 0.5).unwrap_err(),
            LossError::NoPositives
        );
    }

    #[test]
    fn repulsion_grads_match_finite_differences() {
        let pred = bb(0.2, 0.1, 1.3, 1.2);
        let attract = bb(0.0, 0.0, 1.0, 1.0);
        let repulse = bb(0.6, 0.0, 1.6, 1.1);
        let h = 1e-6;
        let rg = repulsion_grad(&pred, &repulse, 0.5);
        let tg = truncated_repulsion_grad(&pred, &attract, &repulse, 0.5);
        for coord in 0..4 {
            let mut plus = pred.corners();
            plus[coord] += h;
            let mut minus = pred.corners();
            minus[coord] -= h;
            let bp = BBox::new(plus[0], plus[1], plus[2], plus[3]).unwrap();
            let bm = BBox::new(minus[0], minus[1], minus[2], minus[3]).unwrap();
            let fd_r = (repulsion_term(&bp, &repulse, 0.5) - repulsion_term(&bm, &repulse, 0.5))
                / (2.0 * h);
            let fd_t = (truncated_repulsion_term(&bp, &attract, &repulse, 0.5)
                - truncated_repulsion_term(&bm, &attract, &repulse, 0.5))
                / (2.0 * h);
            assert_relative_eq!(rg[coord], fd_r, epsilon = 1e-8, max_relative = 1e-6);
            assert_relative_eq!(tg[coord], fd_t, epsilon = 1e-8, max_relative = 1e-6);
        }
    }

    #[test]
    fn combine_losses_weights_each_term() {
        let b = combine_losses(1.0, 2.0, 3.0, 4.0, &LossWeights::default());
        assert_relative_eq!(b.total, 1.0 + 0.2 + 0.3 + 2.0, epsilon = 1e-15);
        assert_eq!(b.repulsion, 4.0);
    }

    #[test]
    fn shift_curve_starts_at_zero_and_rises_to_the_cap() {
        let curve = shift_curve(0.5, 11, 0.5).unwrap();
        assert_eq!(curve.len(), 11);
        assert_eq!(curve[0].shift, 0.0);
        assert_eq!(curve[0].rl, 0.0);
        assert_eq!(curve[0].tnrl, 0.0);
        assert_eq!(curve[10].shift, 1.0);
        let cap = smooth_ln(1.0 - CLAMP_EPS, 0.5);
        assert_relative_eq!(curve[10].tnrl, cap, epsilon = 1e-12);
        for w in curve.windows(2) {
            assert!(w[1].rl >= w[0].rl);
            assert!(w[1].tnrl >= w[0].tnrl);
            assert!(w[1].tnrl >= w[1].rl);
        }
    }

    #[test]
    fn shift_curve_rejects_degenerate_setups() {
        assert!(matches!(
            shift_curve(0.0, 5, 0.5),
            Err(LossError::BadParameter { name: "overlap", .. })
        ));
        assert!(matches!(
            shift_curve(1.0, 5, 0.5),
            Err(LossError::BadParameter { name: "overlap", .. })
        ));
        assert!(matches!(
            shift_curve(0.5, 1, 0.5),
            Err(LossError::BadParameter { name: "steps", .. })
        ));
    }

    proptest! {
        #[test]
        fn pull_loss_is_nonnegative_and_zero_only_when_tight(
            values in proptest::collection::vec(-5.0f64..5.0, 1..10)
        ) {
            let spread = values.iter().any(|&v| v != values[0]);
            let g = GroupedEmbeddings::new(vec![values]).unwrap();
            let loss = pull_loss(&g, 0.5, 2.0).unwrap();
            prop_assert!(loss >= 0.0);
            prop_assert_eq!(loss > 0.0, spread);
        }

        #[test]
        fn push_loss_bounded_by_delta(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            delta in 0.1f64..2.0,
        ) {
            let p = push_loss(&[a, b], &[Some(1), Some(0)], delta).unwrap();
            prop_assert!(p.value >= 0.0 && p.value <= delta);
        }

        #[test]
        fn truncated_term_stays_in_bounds(
            bx in -1.0f64..2.0,
            by in -1.0f64..2.0,
            d in 0.05f64..0.95,
        ) {
            let attract = bb(0.0, 0.0, 1.0, 1.0);
            let repulse = attract.shifted(d, 0.0);
            let pred = bb(bx, by, bx + 1.0, by + 1.0);
            let term = truncated_repulsion_term(&pred, &attract, &repulse, 0.5);
            let cap = smooth_ln(1.0 - CLAMP_EPS, 0.5);
            prop_assert!(term >= 0.0 && term <= cap + 1e-12);
        }

        #[test]
        fn shift_curves_keep_tnrl_at_or_above_excess_rl(
            overlap in 0.05f64..0.95,
        ) {
            let curve = shift_curve(overlap, 33, 0.5).unwrap();
            for p in &curve {
                prop_assert!(p.tnrl >= p.rl - 1e-12,
                    "tnrl {} < rl {} at shift {}", p.tnrl, p.rl, p.shift);
            }
        }
    }
}
