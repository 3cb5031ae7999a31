//! Detection-side toolkit for crowded, elongated-object scenes such as
//! chromosome spreads: overlap-aware evaluation metrics, embedding and
//! repulsion losses for training against occlusion, embedding-guided
//! non-maximum suppression, hardness-stratified anchor sampling, and a
//! seeded synthetic-scene generator with brute-force reference
//! implementations for validating all of it.
//!
//! Start from the runnable examples, one per capability:
//!
//! - `evaluate_corpus`: corpus metrics (whole-image correctness, error
//!   ratio, precision/recall/F1, average precision, log-average miss
//!   rate) plus the overlapping-subset sub-report.
//! - `nms_comparison`: hard, soft, and embedding-guided suppression side
//!   by side on a crowded scene.
//! - `template_embeddings`: shape-template masks and the per-box
//!   embedding head, with the pull and push losses on the result.
//! - `repulsion_curves`: how the truncated repulsion loss reshapes the
//!   plain one as a box slides from its own target into a neighbor.
//! - `anchor_sampling`: anchor grids, hardness labeling, and stratified
//!   batch sampling under both hardness schemes.
//! - `synthetic_scenarios`: seeded scene generation swept over crowding
//!   intensity, cross-checked against the brute-force oracles.
//!
//! The `karyodet` binary wraps the same functionality for files:
//! `evaluate`, `nms-run`, `synth-gen`, `sample-anchors`, `loss-eval`,
//! `masks-dump`, and `shift-curve`.

pub mod anchors;
pub mod cli;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod nms;
pub mod synth;
pub mod template;

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;

/// One scored detection. The embedding is the scalar the grouping loss and
/// the guided suppression key on; plain detectors leave it out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<f64>,
}

impl Detection {
    pub fn new(bbox: BBox, score: f64) -> Self {
        Self {
            bbox,
            score,
            embedding: None,
        }
    }

    pub fn with_embedding(bbox: BBox, score: f64, embedding: f64) -> Self {
        Self {
            bbox,
            score,
            embedding: Some(embedding),
        }
    }
}
