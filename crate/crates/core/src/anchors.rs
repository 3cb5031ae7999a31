//! Anchor grid generation, hardness labeling, and stratified negative
//! sampling.
//!
//! Anchors tile the image on a fixed stride, one shape set per cell: every
//! combination of base area and aspect ratio, width `sqrt(area * ratio)`
//! and height `sqrt(area / ratio)`. Labels split anchors into positives,
//! hard negatives, easy negatives, and an ignored band by their best IoU
//! against the ground truths; training batches then draw a fixed quota from
//! each stratum (a quarter positives, three eighths hard, three eighths
//! easy) so scarce hard negatives are never drowned out by easy ones.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox};

#[derive(Debug, Error, PartialEq)]
pub enum AnchorError {
    #[error("anchor grid is empty (width {width}, height {height}, stride {stride})")]
    EmptyGrid {
        width: usize,
        height: usize,
        stride: usize,
    },
    #[error("anchor shape set is empty: need at least one area and one ratio")]
    NoShapes,
    #[error("anchor parameter {name} = {value} must be positive and finite")]
    BadParameter { name: &'static str, value: f64 },
}

/// Grid and shape-set parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
    pub areas: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl AnchorConfig {
    /// The stock configuration: stride 8, base sides 32/64/96/128, aspect
    /// ratios 1/5 through 5. 36 anchors per cell.
    pub fn for_image(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            stride: 8,
            areas: vec![32.0 * 32.0, 64.0 * 64.0, 96.0 * 96.0, 128.0 * 128.0],
            ratios: vec![
                1.0 / 5.0,
                1.0 / 4.0,
                1.0 / 3.0,
                1.0 / 2.0,
                1.0,
                2.0,
                3.0,
                4.0,
                5.0,
            ],
        }
    }

    pub fn shapes_per_cell(&self) -> usize {
        self.areas.len() * self.ratios.len()
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (
            self.width.div_ceil(self.stride),
            self.height.div_ceil(self.stride),
        )
    }

    fn validate(&self) -> Result<(), AnchorError> {
        if self.width == 0 || self.height == 0 || self.stride == 0 {
            return Err(AnchorError::EmptyGrid {
                width: self.width,
                height: self.height,
                stride: self.stride,
            });
        }
        if self.areas.is_empty() || self.ratios.is_empty() {
            return Err(AnchorError::NoShapes);
        }
        for (&v, name) in self
            .areas
            .iter()
            .zip(std::iter::repeat("area"))
            .chain(self.ratios.iter().zip(std::iter::repeat("ratio")))
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(AnchorError::BadParameter { name, value: v });
            }
        }
        Ok(())
    }
}

/// Generate the full anchor list, row-major over grid cells (rows outer,
/// columns inner), then area-major / ratio-minor within a cell. Cell
/// centers sit at `stride * (index + 0.5)`; anchors near the border may
/// extend past the image, which is deliberate.
pub fn generate_anchors(cfg: &AnchorConfig) -> Result<Vec<BBox>, AnchorError> {
    cfg.validate()?;
    let (cols, rows) = cfg.grid_dims();
    let stride = cfg.stride as f64;
    let mut out = Vec::with_capacity(cols * rows * cfg.shapes_per_cell());
    for r in 0..rows {
        let cy = stride * (r as f64 + 0.5);
        for c in 0..cols {
            let cx = stride * (c as f64 + 0.5);
            for &area in &cfg.areas {
                for &ratio in &cfg.ratios {
                    let w = (area * ratio).sqrt();
                    let h = (area / ratio).sqrt();
                    out.push(
                        BBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
                            .expect("positive area and ratio give a valid box"),
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Which negative-band layout to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HardnessScheme {
    /// Hard negatives in [0.3, 0.7), easy below 0.3; nothing ignored.
    V1,
    /// Hard negatives in [0.1, 0.5), easy below 0.1, and an ignored buffer
    /// in [0.5, 0.7) that never enters a batch. Default.
    #[default]
    V2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorLabel {
    Positive,
    Hard,
    Easy,
    Ignore,
}

/// Label every anchor by its best IoU over the ground truths. Positive
/// means best IoU >= 0.7, or being some ground truth's single best anchor
/// (lowest index on ties) with any nonzero overlap; that rescue guarantees
/// every reachable ground truth owns at least one positive.
pub fn label_anchors(anchors: &[BBox], gts: &[BBox], scheme: HardnessScheme) -> Vec<AnchorLabel> {
    let mut max_iou = vec![0.0f64; anchors.len()];
    let mut best_for_gt: Vec<Option<(usize, f64)>> = vec![None; gts.len()];
    for (a, anchor) in anchors.iter().enumerate() {
        for (g, gt) in gts.iter().enumerate() {
            let v = iou(anchor, gt);
            if v > max_iou[a] {
                max_iou[a] = v;
            }
            if v > 0.0 && best_for_gt[g].map_or(true, |(_, bv)| v > bv) {
                best_for_gt[g] = Some((a, v));
            }
        }
    }

    let mut rescued = vec![false; anchors.len()];
    for slot in best_for_gt.into_iter().flatten() {
        rescued[slot.0] = true;
    }

    anchors
        .iter()
        .enumerate()
        .map(|(a, _)| {
            let m = max_iou[a];
            if m >= 0.7 || rescued[a] {
                return AnchorLabel::Positive;
            }
            match scheme {
                HardnessScheme::V1 => {
                    if m >= 0.3 {
                        AnchorLabel::Hard
                    } else {
                        AnchorLabel::Easy
                    }
                }
                HardnessScheme::V2 => {
                    if m >= 0.5 {
                        AnchorLabel::Ignore
                    } else if m >= 0.1 {
                        AnchorLabel::Hard
                    } else {
                        AnchorLabel::Easy
                    }
                }
            }
        })
        .collect()
}

/// Anchor indices gathered per stratum, in anchor order. Ignored anchors
/// are dropped here and can never be sampled.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StratumPools {
    pub positive: Vec<usize>,
    pub hard: Vec<usize>,
    pub easy: Vec<usize>,
}

pub fn stratum_pools(labels: &[AnchorLabel]) -> StratumPools {
    let mut pools = StratumPools::default();
    for (i, label) in labels.iter().enumerate() {
        match label {
            AnchorLabel::Positive => pools.positive.push(i),
            AnchorLabel::Hard => pools.hard.push(i),
            AnchorLabel::Easy => pools.easy.push(i),
            AnchorLabel::Ignore => {}
        }
    }
    pools
}

/// Per-stratum quotas for a batch: a quarter positives and three eighths
/// each of hard and easy negatives, remainders folded into the easy quota
/// so the three always sum to `batch`.
pub fn batch_quotas(batch: usize) -> (usize, usize, usize) {
    let positive = batch / 4;
    let hard = batch * 3 / 8;
    (positive, hard, batch - positive - hard)
}

/// One sampled batch: uniformly drawn anchor indices per stratum, without
/// replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledBatch {
    pub positive: Vec<usize>,
    pub hard: Vec<usize>,
    pub easy: Vec<usize>,
    /// How far short of `batch` the draw fell after every pool was
    /// exhausted. Zero in any normally-sized image.
    pub shortfall: usize,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.positive.len() + self.hard.len() + self.easy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draw a stratified batch. When a stratum cannot fill its quota the
/// deficit spills into easy negatives first, then hard, then positives;
/// anything still missing is reported as `shortfall` rather than padded.
/// Draw order (positives, hard, easy) is fixed so a seeded generator gives
/// bit-identical batches.
pub fn sample_batch<R: Rng>(pools: &StratumPools, batch: usize, rng: &mut R) -> SampledBatch {
    let (want_p, want_h, want_e) = batch_quotas(batch);
    let mut take_p = want_p.min(pools.positive.len());
    let mut take_h = want_h.min(pools.hard.len());
    let mut take_e = want_e.min(pools.easy.len());
    let mut deficit = batch - take_p - take_h - take_e;
    for (take, pool) in [
        (&mut take_e, &pools.easy),
        (&mut take_h, &pools.hard),
        (&mut take_p, &pools.positive),
    ] {
        let extra = deficit.min(pool.len() - *take);
        *take += extra;
        deficit -= extra;
    }

    let draw = |rng: &mut R, pool: &[usize], k: usize| -> Vec<usize> {
        rand::seq::index::sample(rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    };
    SampledBatch {
        positive: draw(rng, &pools.positive, take_p),
        hard: draw(rng, &pools.hard, take_h),
        easy: draw(rng, &pools.easy, take_e),
        shortfall: deficit,
    }
}
