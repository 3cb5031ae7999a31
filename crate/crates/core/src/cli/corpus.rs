//! The on-disk corpus format: one JSON document per detection run or
//! ground-truth set.
//!
//! ```json
//! {
//!   "images": [
//!     {
//!       "image_id": "img-0001",
//!       "width": 1600,
//!       "height": 1200,
//!       "gt_boxes": [[x1, y1, x2, y2], ...],
//!       "detections": [
//!         {"bbox": [x1, y1, x2, y2], "score": 0.93, "embedding": 1.5}
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! `detections` and `embedding` are optional; ground-truth files simply
//! omit detections and pure detection files carry empty `gt_boxes`. Image
//! ids must be unique within a file, boxes must be finite with positive
//! extent, and scores and embeddings must be finite. Violations are
//! reported with the image id and the offending field.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::geometry::BBox;
use crate::metrics::EvalImage;
use crate::Detection;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusFile {
    pub images: Vec<ImageEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub gt_boxes: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<DetectionEntry>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionEntry {
    pub bbox: [f64; 4],
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<f64>,
}

impl From<&Detection> for DetectionEntry {
    fn from(d: &Detection) -> Self {
        Self {
            bbox: d.bbox.corners(),
            score: d.score,
            embedding: d.embedding,
        }
    }
}

/// A parsed and validated corpus: boxes are real `BBox`es, detections are
/// ready for the library calls.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub images: Vec<LoadedImage>,
}

#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub gts: Vec<BBox>,
    pub dets: Vec<Detection>,
}

fn schema(path: &Path, detail: String) -> CliError {
    CliError::Schema {
        path: path.display().to_string(),
        detail,
    }
}

pub fn parse_corpus(path: &Path, file: CorpusFile) -> Result<Corpus, CliError> {
    let mut seen = BTreeSet::new();
    let mut images = Vec::with_capacity(file.images.len());
    for entry in file.images {
        let id = entry.image_id;
        if !seen.insert(id.clone()) {
            return Err(schema(path, format!("duplicate image_id \"{id}\"")));
        }
        if entry.width == 0 || entry.height == 0 {
            return Err(schema(
                path,
                format!("image \"{id}\": width and height must be positive"),
            ));
        }
        let mut gts = Vec::with_capacity(entry.gt_boxes.len());
        for (i, raw) in entry.gt_boxes.iter().enumerate() {
            let b = BBox::try_from(*raw)
                .map_err(|e| schema(path, format!("image \"{id}\" gt_boxes[{i}]: {e}")))?;
            gts.push(b);
        }
        let mut dets = Vec::new();
        for (i, d) in entry.detections.unwrap_or_default().into_iter().enumerate() {
            let bbox = BBox::try_from(d.bbox)
                .map_err(|e| schema(path, format!("image \"{id}\" detections[{i}]: {e}")))?;
            if !d.score.is_finite() {
                return Err(schema(
                    path,
                    format!("image \"{id}\" detections[{i}]: non-finite score"),
                ));
            }
            if let Some(e) = d.embedding {
                if !e.is_finite() {
                    return Err(schema(
                        path,
                        format!("image \"{id}\" detections[{i}]: non-finite embedding"),
                    ));
                }
            }
            dets.push(Detection {
                bbox,
                score: d.score,
                embedding: d.embedding,
            });
        }
        images.push(LoadedImage {
            image_id: id,
            width: entry.width,
            height: entry.height,
            gts,
            dets,
        });
    }
    Ok(Corpus { images })
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let file: CorpusFile =
        serde_json::from_str(&text).map_err(|e| schema(path, e.to_string()))?;
    parse_corpus(path, file)
}

pub fn write_corpus(path: &Path, file: &CorpusFile) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(file).expect("corpus serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Pair ground-truth images with the detection run. The two files must
/// cover exactly the same image ids; detections are taken from `det`,
/// ground truths from `gt`, in `gt` file order.
pub fn align(gt: &Corpus, det: &Corpus) -> Result<(Vec<EvalImage>, Vec<String>), CliError> {
    let gt_ids: BTreeSet<&str> = gt.images.iter().map(|im| im.image_id.as_str()).collect();
    for im in &det.images {
        if !gt_ids.contains(im.image_id.as_str()) {
            return Err(CliError::IdMismatch(format!(
                "detection file has image_id \"{}\" absent from the ground-truth file",
                im.image_id
            )));
        }
    }
    let mut images = Vec::with_capacity(gt.images.len());
    let mut ids = Vec::with_capacity(gt.images.len());
    for gt_im in &gt.images {
        let det_im = det
            .images
            .iter()
            .find(|im| im.image_id == gt_im.image_id)
            .ok_or_else(|| {
                CliError::IdMismatch(format!(
                    "ground-truth image_id \"{}\" missing from the detection file",
                    gt_im.image_id
                ))
            })?;
        images.push(EvalImage {
            dets: det_im.dets.clone(),
            gts: gt_im.gts.clone(),
        });
        ids.push(gt_im.image_id.clone());
    }
    Ok((images, ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Corpus, CliError> {
        let file: CorpusFile = serde_json::from_str(text)
            .map_err(|e| schema(Path::new("test.json"), e.to_string()))?;
        parse_corpus(Path::new("test.json"), file)
    }

    const OK: &str = r#"{"images": [{
        "image_id": "a", "width": 100, "height": 100,
        "gt_boxes": [[0, 0, 10, 10]],
        "detections": [{"bbox": [0, 0, 10, 10], "score": 0.9, "embedding": 1.0}]
    }]}"#;

    #[test]
    fn well_formed_corpus_loads() {
        let c = parse(OK).unwrap();
        assert_eq!(c.images.len(), 1);
        assert_eq!(c.images[0].gts.len(), 1);
        assert_eq!(c.images[0].dets[0].embedding, Some(1.0));
    }

    #[test]
    fn degenerate_box_is_a_schema_error_with_field_path() {
        let bad = OK.replace("[0, 0, 10, 10]],", "[10, 0, 0, 10]],");
        let err = parse(&bad).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("gt_boxes[0]"), "{err}");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let twice = r#"{"images": [
            {"image_id": "a", "width": 10, "height": 10, "gt_boxes": []},
            {"image_id": "a", "width": 10, "height": 10, "gt_boxes": []}
        ]}"#;
        let err = parse(twice).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("duplicate image_id"), "{err}");
    }

    #[test]
    fn alignment_requires_equal_id_sets() {
        let gt = parse(OK).unwrap();
        let other = parse(&OK.replace("\"a\"", "\"b\"")).unwrap();
        assert_eq!(align(&gt, &other).unwrap_err().exit_code(), 3);
        let (images, ids) = align(&gt, &gt).unwrap();
        assert_eq!(images.len(), 1);
        assert_eq!(ids, vec!["a".to_string()]);
    }

    #[test]
    fn missing_detections_field_means_no_detections() {
        let gt_only = r#"{"images": [{
            "image_id": "a", "width": 10, "height": 10, "gt_boxes": [[0, 0, 5, 5]]
        }]}"#;
        let c = parse(gt_only).unwrap();
        assert!(c.images[0].dets.is_empty());
    }
}
