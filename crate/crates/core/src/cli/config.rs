//! TOML config carrying the reference operating constants.
//!
//! Every knob defaults to the standard value, so an empty file (or no file
//! at all) reproduces the reference setup. `sigma` drives both the soft
//! suppression width and the smooth-log knee; the reference setup uses 0.5
//! for both.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Detection-to-ground-truth assignment threshold.
    pub iou_thresh: f64,
    /// Coverage threshold defining the overlapping ground-truth subset.
    pub tau: f64,
    /// Soft suppression width and smooth-log knee.
    pub sigma: f64,
    /// Embedding-distance midpoint of the guided suppression exponent.
    pub delta: f64,
    /// Push-loss margin between embedding group means.
    pub push_delta: f64,
    /// Pull-loss focal offset.
    pub theta: f64,
    /// Pull-loss focal exponent.
    pub lambda: f64,
    /// Weight of the pull loss in the combined objective.
    pub alpha: f64,
    /// Weight of the push loss in the combined objective.
    pub beta: f64,
    /// Weight of the truncated repulsion loss in the combined objective.
    pub gamma: f64,
    /// Anchor batch size per image.
    pub batch: usize,
    /// Survivor cap applied after soft suppression.
    pub top_k: usize,
    /// Score floor applied after soft suppression.
    pub score_floor: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            iou_thresh: 0.5,
            tau: 0.5,
            sigma: 0.5,
            delta: 0.3,
            push_delta: 1.0,
            theta: 0.5,
            lambda: 2.0,
            alpha: 0.1,
            beta: 0.1,
            gamma: 0.5,
            batch: 512,
            top_k: 100,
            score_floor: 0.001,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| CliError::Schema {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    /// Load `path` when given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_reference_setup() {
        let cfg: Config = toml::from_str("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.iou_thresh, 0.5);
        assert_eq!(cfg.batch, 512);
        assert_eq!(cfg.top_k, 100);
    }

    #[test]
    fn partial_overrides_keep_the_rest() {
        let cfg: Config = toml::from_str("tau = 0.4\nbatch = 256\n").unwrap();
        assert_eq!(cfg.tau, 0.4);
        assert_eq!(cfg.batch, 256);
        assert_eq!(cfg.sigma, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("sigmas = 0.5\n").is_err());
    }
}
