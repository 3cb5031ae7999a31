//! Seeded synthetic scenes for end-to-end validation.
//!
//! Scenes mimic the structure evaluation cares about without any imaging: a
//! known number of slender boxes per image, a controllable fraction of them
//! arranged in heavily overlapping pairs, and detections derived from the
//! ground truth with tunable corruption (misses, duplicates, spurious
//! boxes, coordinate jitter, embedding noise). Every draw comes from one
//! seeded stream, so a config reproduces its scenario bit for bit.
//!
//! Layout guarantees, relied on by tests:
//! - ground truths live in disjoint grid cells except for deliberate
//!   pairs, so nothing overlaps across cells;
//! - pair members cover each other by a fraction in [0.55, 0.75], putting
//!   both inside the overlap subset at the standard threshold 0.5;
//! - with `gt_count` boxes and overlap intensity `i`, exactly
//!   `2 * round(i * gt_count / 2)` of them are pair members, so the
//!   achieved overlapping fraction tracks the requested intensity;
//! - detection embeddings for ground truth `j` center on `1.5 * j`,
//!   keeping distinct groups at least 1.5 apart (clean scenes have zero
//!   push loss at the standard margin 1).

pub mod oracle;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::metrics::{overlap_subset, EvalImage};
use crate::Detection;

/// Shortest long side a generated box can have.
pub const MIN_LONG_SIDE: f64 = 24.0;
/// Longest long side a generated box can have.
pub const MAX_LONG_SIDE: f64 = 128.0;
/// Mutual coverage of a generated pair lands in this range.
pub const PAIR_COVERAGE: (f64, f64) = (0.55, 0.75);
const ASPECT_RANGE: (f64, f64) = (3.0, 5.0);
const CELL_MARGIN_FRAC: f64 = 0.05;
const JITTER_RETRIES: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("scenario parameter {name} = {value} out of range")]
    BadParameter { name: &'static str, value: f64 },
    #[error(
        "cannot place {gt_count} boxes in {width} x {height}: grid cells fall below the minimum box footprint"
    )]
    Infeasible {
        gt_count: usize,
        width: f64,
        height: f64,
    },
}

/// Knobs of the scene generator. Rates are per ground truth (misses,
/// duplicates, spurious detections); standard deviations are absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub num_images: usize,
    pub width: f64,
    pub height: f64,
    pub gt_count: usize,
    /// Requested fraction of ground truths placed in overlapping pairs,
    /// in [0, 1]. Rounded to whole pairs; the achieved value is reported.
    pub overlap_intensity: f64,
    pub jitter_std: f64,
    pub fn_rate: f64,
    pub fp_rate: f64,
    pub duplicate_rate: f64,
    pub embedding_noise_std: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_images: 5,
            width: 1600.0,
            height: 1200.0,
            gt_count: 46,
            overlap_intensity: 0.2,
            jitter_std: 0.0,
            fn_rate: 0.0,
            fp_rate: 0.0,
            duplicate_rate: 0.0,
            embedding_noise_std: 0.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |name, value| Err(SynthError::BadParameter { name, value });
        if !(self.width.is_finite() && self.width > 0.0) {
            return err("width", self.width);
        }
        if !(self.height.is_finite() && self.height > 0.0) {
            return err("height", self.height);
        }
        if self.num_images == 0 {
            return err("num_images", 0.0);
        }
        if self.gt_count == 0 {
            return err("gt_count", 0.0);
        }
        for (name, value) in [
            ("overlap_intensity", self.overlap_intensity),
            ("fn_rate", self.fn_rate),
            ("fp_rate", self.fp_rate),
            ("duplicate_rate", self.duplicate_rate),
        ] {
            if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
                return err(name, value);
            }
        }
        for (name, value) in [
            ("jitter_std", self.jitter_std),
            ("embedding_noise_std", self.embedding_noise_std),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return err(name, value);
            }
        }
        Ok(())
    }
}

/// One generated image: ground truths, detections, and the provenance of
/// each detection (`Some(gt index)` or `None` for spurious ones).
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    pub gts: Vec<BBox>,
    pub dets: Vec<Detection>,
    pub truth: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub images: Vec<SceneImage>,
    /// Fraction of ground truths the requested intensity actually put into
    /// overlapping pairs, measured on the generated boxes.
    pub achieved_overlap_fraction: f64,
}

impl Scenario {
    pub fn to_eval_images(&self) -> Vec<EvalImage> {
        self.images
            .iter()
            .map(|im| EvalImage {
                dets: im.dets.clone(),
                gts: im.gts.clone(),
            })
            .collect()
    }
}

/// Center of the embedding cluster detections of ground truth `j` draw
/// from.
pub fn base_embedding(gt_index: usize) -> f64 {
    1.5 * gt_index as f64
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut images = Vec::with_capacity(cfg.num_images);
    let mut measured = 0.0;
    for _ in 0..cfg.num_images {
        let image = generate_image(cfg, &mut rng)?;
        let mask = overlap_subset(&image.gts, 0.5);
        measured += mask.iter().filter(|&&m| m).count() as f64 / image.gts.len() as f64;
        images.push(image);
    }
    Ok(Scenario {
        achieved_overlap_fraction: measured / cfg.num_images as f64,
        images,
    })
}

struct Cell {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

fn generate_image(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<SceneImage, SynthError> {
    let n = cfg.gt_count;
    let pairs = ((cfg.overlap_intensity * n as f64 / 2.0).round() as usize).min(n / 2);
    let sites = n - pairs;

    let cols = ((sites as f64 * cfg.width / cfg.height).sqrt().ceil() as usize).max(1);
    let rows = sites.div_ceil(cols);
    let cell_w = cfg.width / cols as f64;
    let cell_h = cfg.height / rows as f64;
    let margin = CELL_MARGIN_FRAC * cell_w.min(cell_h);
    let avail_w = cell_w - 2.0 * margin;
    let avail_h = cell_h - 2.0 * margin;
    // A pair needs room for a minimum-length box plus its partner offset.
    let footprint = MIN_LONG_SIDE * (2.0 - PAIR_COVERAGE.0);
    if avail_w < footprint || avail_h < footprint {
        return Err(SynthError::Infeasible {
            gt_count: n,
            width: cfg.width,
            height: cfg.height,
        });
    }

    let mut site_order: Vec<usize> = (0..sites).collect();
    site_order.shuffle(rng);

    let mut gts = Vec::with_capacity(n);
    for (s, &site) in site_order.iter().enumerate() {
        let cell = Cell {
            x: (site % cols) as f64 * cell_w + margin,
            y: (site / cols) as f64 * cell_h + margin,
            w: avail_w,
            h: avail_h,
        };
        if s < pairs {
            let (a, b) = place_pair(&cell, rng);
            gts.push(a);
            gts.push(b);
        } else {
            gts.push(place_isolated(&cell, rng));
        }
    }

    let mut dets = Vec::new();
    let mut truth = Vec::new();
    for (j, gt) in gts.iter().enumerate() {
        let missed = rng.random::<f64>() < cfg.fn_rate;
        let duplicated = rng.random::<f64>() < cfg.duplicate_rate;
        if missed {
            continue;
        }
        dets.push(Detection {
            bbox: jittered(gt, cfg.jitter_std, rng),
            score: rng.random_range(0.7..1.0),
            embedding: Some(base_embedding(j) + noise(cfg.embedding_noise_std, rng)),
        });
        truth.push(Some(j));
        if duplicated {
            dets.push(Detection {
                bbox: jittered(gt, cfg.jitter_std, rng),
                score: rng.random_range(0.3..0.7),
                embedding: Some(base_embedding(j) + noise(cfg.embedding_noise_std, rng)),
            });
            truth.push(Some(j));
        }
    }
    for _ in 0..n {
        if rng.random::<f64>() < cfg.fp_rate {
            dets.push(spurious_detection(cfg, rng));
            truth.push(None);
        }
    }

    Ok(SceneImage { gts, dets, truth })
}

/// A slender box somewhere inside the cell.
fn place_isolated(cell: &Cell, rng: &mut ChaCha8Rng) -> BBox {
    let horizontal = rng.random::<bool>();
    let (along, across) = if horizontal { (cell.w, cell.h) } else { (cell.h, cell.w) };
    let long = rng.random_range(MIN_LONG_SIDE..=MAX_LONG_SIDE.min(along));
    let short = long / rng.random_range(ASPECT_RANGE.0..=ASPECT_RANGE.1);
    let u = rng.random_range(0.0..=along - long);
    let v = rng.random_range(0.0..=across - short);
    oriented(cell, horizontal, u, v, long, short)
}

/// Two equal slender boxes offset along their long axis so each covers the
/// other by a fraction in `PAIR_COVERAGE`.
fn place_pair(cell: &Cell, rng: &mut ChaCha8Rng) -> (BBox, BBox) {
    let horizontal = rng.random::<bool>();
    let (along, across) = if horizontal { (cell.w, cell.h) } else { (cell.h, cell.w) };
    let long = rng.random_range(MIN_LONG_SIDE..=MAX_LONG_SIDE.min(along / (2.0 - PAIR_COVERAGE.0)));
    let short = long / rng.random_range(ASPECT_RANGE.0..=ASPECT_RANGE.1);
    let coverage = rng.random_range(PAIR_COVERAGE.0..=PAIR_COVERAGE.1);
    let offset = (1.0 - coverage) * long;
    let u = rng.random_range(0.0..=along - (long + offset));
    let v = rng.random_range(0.0..=across - short);
    let first = oriented(cell, horizontal, u, v, long, short);
    let second = if horizontal {
        first.shifted(offset, 0.0)
    } else {
        first.shifted(0.0, offset)
    };
    (first, second)
}

fn oriented(cell: &Cell, horizontal: bool, u: f64, v: f64, long: f64, short: f64) -> BBox {
    let (x, y, w, h) = if horizontal {
        (cell.x + u, cell.y + v, long, short)
    } else {
        (cell.x + v, cell.y + u, short, long)
    };
    BBox::new(x, y, x + w, y + h).expect("positive extents")
}

fn spurious_detection(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Detection {
    let horizontal = rng.random::<bool>();
    let (along, across) = if horizontal {
        (cfg.width, cfg.height)
    } else {
        (cfg.height, cfg.width)
    };
    let long = rng.random_range(MIN_LONG_SIDE..=MAX_LONG_SIDE.min(along / 2.0).max(MIN_LONG_SIDE));
    let short = long / rng.random_range(ASPECT_RANGE.0..=ASPECT_RANGE.1);
    let u = rng.random_range(0.0..=along - long);
    let v = rng.random_range(0.0..=across - short);
    let (x, y, w, h) = if horizontal {
        (u, v, long, short)
    } else {
        (v, u, short, long)
    };
    Detection {
        bbox: BBox::new(x, y, x + w, y + h).expect("positive extents"),
        score: rng.random_range(0.05..0.7),
        embedding: Some(rng.random_range(-1.5..base_embedding(cfg.gt_count) + 1.5)),
    }
}

fn noise(std: f64, rng: &mut ChaCha8Rng) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).expect("validated std").sample(rng)
}

/// Additive Gaussian jitter on all four corners, resampled until the box
/// stays valid; falls back to the original after `JITTER_RETRIES`.
fn jittered(b: &BBox, std: f64, rng: &mut ChaCha8Rng) -> BBox {
    if std == 0.0 {
        return *b;
    }
    let normal = Normal::new(0.0, std).expect("validated std");
    for _ in 0..JITTER_RETRIES {
        let c = b.corners();
        let candidate = BBox::new(
            c[0] + normal.sample(rng),
            c[1] + normal.sample(rng),
            c[2] + normal.sample(rng),
            c[3] + normal.sample(rng),
        );
        if let Ok(valid) = candidate {
            return valid;
        }
    }
    *b
}
