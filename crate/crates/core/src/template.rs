//! Fixed template masks and the tiny head that turns a pooled RoI feature
//! map into a scalar embedding.
//!
//! The five masks are 7x7 constant matrices highlighting the shapes slender
//! objects actually take inside their boxes: the two diagonals, a
//! horizontal band, a vertical band, and a ring for strongly bent ones.
//! With `x = row - 3` and `y = col - 3`:
//!
//! ```text
//! diagonal        exp(-(x - y)^2 / 3)
//! anti-diagonal   exp(-(x + y)^2 / 3)
//! horizontal      exp(-y^2 / 3)
//! vertical        exp(-x^2 / 3)
//! circular        exp(-|x^2 + y^2 - 5| / 3)
//! ```
//!
//! The head fuses the 256 input channels with a 1x1 convolution plus ReLU,
//! multiplies the fused 7x7 map by each mask, flattens row-major, concats
//! the five 49-vectors into 245 values, and projects them to one scalar
//! with a fully connected layer. Proposals covering the same object land
//! near each other in that one-dimensional space, which is what the
//! grouping losses and the embedding-guided suppression consume.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MASK_SIZE: usize = 7;
pub const FEATURE_CHANNELS: usize = 256;
pub const CONCAT_LEN: usize = 5 * MASK_SIZE * MASK_SIZE;
/// Flat parameter count: fuse weights, fuse bias, projection weights,
/// projection bias.
pub const PARAM_LEN: usize = FEATURE_CHANNELS + 1 + CONCAT_LEN + 1;

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("expected {expected} values, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
}

/// The five mask shapes, in the order they are concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateKind {
    Diagonal,
    AntiDiagonal,
    Horizontal,
    Vertical,
    Circular,
}

pub const TEMPLATE_KINDS: [TemplateKind; 5] = [
    TemplateKind::Diagonal,
    TemplateKind::AntiDiagonal,
    TemplateKind::Horizontal,
    TemplateKind::Vertical,
    TemplateKind::Circular,
];

pub type Mask = [[f64; MASK_SIZE]; MASK_SIZE];

/// The 7x7 mask for one template shape.
pub fn template_mask(kind: TemplateKind) -> Mask {
    let mut m = [[0.0; MASK_SIZE]; MASK_SIZE];
    for (row, row_vals) in m.iter_mut().enumerate() {
        for (col, v) in row_vals.iter_mut().enumerate() {
            let x = row as f64 - 3.0;
            let y = col as f64 - 3.0;
            let arg = match kind {
                TemplateKind::Diagonal => (x - y) * (x - y),
                TemplateKind::AntiDiagonal => (x + y) * (x + y),
                TemplateKind::Horizontal => y * y,
                TemplateKind::Vertical => x * x,
                TemplateKind::Circular => (x * x + y * y - 5.0).abs(),
            };
            *v = (-arg / 3.0).exp();
        }
    }
    m
}

pub fn all_masks() -> [Mask; 5] {
    TEMPLATE_KINDS.map(template_mask)
}

/// A pooled RoI feature map: `FEATURE_CHANNELS` planes of 7x7 values,
/// channel-major, rows outer within a plane.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiFeatures {
    data: Vec<f64>,
}

impl RoiFeatures {
    pub const LEN: usize = FEATURE_CHANNELS * MASK_SIZE * MASK_SIZE;

    pub fn new(data: Vec<f64>) -> Result<Self, TemplateError> {
        if data.len() != Self::LEN {
            return Err(TemplateError::BadLength {
                expected: Self::LEN,
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TemplateError::NonFinite { index });
        }
        Ok(Self { data })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self, TemplateError> {
        let mut data = Vec::with_capacity(Self::LEN);
        for ch in 0..FEATURE_CHANNELS {
            for row in 0..MASK_SIZE {
                for col in 0..MASK_SIZE {
                    data.push(f(ch, row, col));
                }
            }
        }
        Self::new(data)
    }

    pub fn constant(v: f64) -> Result<Self, TemplateError> {
        Self::new(vec![v; Self::LEN])
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * MASK_SIZE + row) * MASK_SIZE + col]
    }
}

/// Learnable parameters of the embedding head: a 1x1 channel-fusing
/// convolution and the final 245-to-1 projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingHead {
    fuse_weights: Vec<f64>,
    fuse_bias: f64,
    project_weights: Vec<f64>,
    project_bias: f64,
}

impl EmbeddingHead {
    pub fn new(
        fuse_weights: Vec<f64>,
        fuse_bias: f64,
        project_weights: Vec<f64>,
        project_bias: f64,
    ) -> Result<Self, TemplateError> {
        if fuse_weights.len() != FEATURE_CHANNELS {
            return Err(TemplateError::BadLength {
                expected: FEATURE_CHANNELS,
                got: fuse_weights.len(),
            });
        }
        if project_weights.len() != CONCAT_LEN {
            return Err(TemplateError::BadLength {
                expected: CONCAT_LEN,
                got: project_weights.len(),
            });
        }
        let head = Self {
            fuse_weights,
            fuse_bias,
            project_weights,
            project_bias,
        };
        if let Some(index) = head.to_flat().iter().position(|v| !v.is_finite()) {
            return Err(TemplateError::NonFinite { index });
        }
        Ok(head)
    }

    /// He-style initialization: weights drawn from a zero-mean normal with
    /// variance 2 / fan_in, biases zero.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let fuse = Normal::new(0.0, (2.0 / FEATURE_CHANNELS as f64).sqrt()).expect("valid std");
        let project = Normal::new(0.0, (2.0 / CONCAT_LEN as f64).sqrt()).expect("valid std");
        Self {
            fuse_weights: (0..FEATURE_CHANNELS).map(|_| fuse.sample(rng)).collect(),
            fuse_bias: 0.0,
            project_weights: (0..CONCAT_LEN).map(|_| project.sample(rng)).collect(),
            project_bias: 0.0,
        }
    }

    /// Channel fusion: per pixel, the weighted channel sum plus bias,
    /// clamped at zero (ReLU).
    pub fn fuse(&self, features: &RoiFeatures) -> Mask {
        let mut fused = [[0.0; MASK_SIZE]; MASK_SIZE];
        for (row, row_vals) in fused.iter_mut().enumerate() {
            for (col, out) in row_vals.iter_mut().enumerate() {
                let mut acc = self.fuse_bias;
                for (ch, w) in self.fuse_weights.iter().enumerate() {
                    acc += w * features.get(ch, row, col);
                }
                *out = acc.max(0.0);
            }
        }
        fused
    }

    /// The 245-vector fed to the projection: the fused map multiplied by
    /// each mask in declared order, each product flattened row-major.
    pub fn masked_concat(fused: &Mask) -> [f64; CONCAT_LEN] {
        let mut out = [0.0; CONCAT_LEN];
        for (m, kind) in TEMPLATE_KINDS.iter().enumerate() {
            let mask = template_mask(*kind);
            for row in 0..MASK_SIZE {
                for col in 0..MASK_SIZE {
                    out[(m * MASK_SIZE + row) * MASK_SIZE + col] = fused[row][col] * mask[row][col];
                }
            }
        }
        out
    }

    /// Full pipeline: fuse, mask, flatten, project to one scalar.
    pub fn embed(&self, features: &RoiFeatures) -> f64 {
        let concat = Self::masked_concat(&self.fuse(features));
        let mut e = self.project_bias;
        for (w, v) in self.project_weights.iter().zip(concat.iter()) {
            e += w * v;
        }
        e
    }

    /// Flat parameter vector: fuse weights, fuse bias, projection weights,
    /// projection bias. Always `PARAM_LEN` values.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(PARAM_LEN);
        flat.extend_from_slice(&self.fuse_weights);
        flat.push(self.fuse_bias);
        flat.extend_from_slice(&self.project_weights);
        flat.push(self.project_bias);
        flat
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self, TemplateError> {
        if flat.len() != PARAM_LEN {
            return Err(TemplateError::BadLength {
                expected: PARAM_LEN,
                got: flat.len(),
            });
        }
        Self::new(
            flat[..FEATURE_CHANNELS].to_vec(),
            flat[FEATURE_CHANNELS],
            flat[FEATURE_CHANNELS + 1..FEATURE_CHANNELS + 1 + CONCAT_LEN].to_vec(),
            flat[PARAM_LEN - 1],
        )
    }
}

impl TryFrom<Vec<f64>> for EmbeddingHead {
    type Error = TemplateError;

    fn try_from(flat: Vec<f64>) -> Result<Self, Self::Error> {
        Self::from_flat(&flat)
    }
}

impl From<EmbeddingHead> for Vec<f64> {
    fn from(head: EmbeddingHead) -> Vec<f64> {
        head.to_flat()
    }
}
