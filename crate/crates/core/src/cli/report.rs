//! Report emission. JSON reports go through `serde_json::Value`, whose
//! object maps are sorted, so output is diff-stable; ratio metrics are
//! rounded to six decimals before serialization.

use serde::Serialize;

use crate::metrics::CorpusSummary;

/// Round a ratio metric to six decimals for emission. Zero is normalized
/// so reports never print `-0.0`.
pub fn round6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Serialize)]
pub struct MetricReport {
    pub images: usize,
    pub gts: usize,
    pub detections: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub wcr: f64,
    pub aer: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    pub mr2: f64,
    pub overlap_subset: OverlapSection,
    pub per_image: Vec<PerImageSection>,
}

#[derive(Debug, Serialize)]
pub struct OverlapSection {
    pub gts: usize,
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

#[derive(Debug, Serialize)]
pub struct PerImageSection {
    pub image_id: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MetricReport {
    pub fn from_summary(s: &CorpusSummary) -> Self {
        Self {
            images: s.num_images,
            gts: s.num_gts,
            detections: s.num_detections,
            tp: s.tp,
            fp: s.fp,
            fn_: s.fn_,
            wcr: round6(s.wcr),
            aer: round6(s.aer),
            accuracy: round6(s.accuracy),
            precision: round6(s.precision),
            recall: round6(s.recall),
            f1: round6(s.f1),
            ap: round6(s.ap),
            mr2: round6(s.mr2),
            overlap_subset: OverlapSection {
                gts: s.overlap.num_gts,
                gt_fraction: round6(s.overlap.gt_fraction),
                tp: s.overlap.tp,
                fp: s.overlap.fp,
                fn_: s.overlap.fn_,
                precision: round6(s.overlap.precision),
                recall: round6(s.overlap.recall),
                accuracy: round6(s.overlap.accuracy),
                f1: round6(s.overlap.f1),
            },
            per_image: s
                .per_image
                .iter()
                .map(|c| PerImageSection {
                    image_id: c.image_id.clone(),
                    tp: c.tp,
                    fp: c.fp,
                    fn_: c.fn_,
                })
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut row = |k: &str, v: String| {
            out.push_str(&format!("{k:<14}{v}\n"));
        };
        row("images", self.images.to_string());
        row("ground truths", self.gts.to_string());
        row("detections", self.detections.to_string());
        row(
            "tp / fp / fn",
            format!("{} / {} / {}", self.tp, self.fp, self.fn_),
        );
        for (k, v) in [
            ("wcr", self.wcr),
            ("aer", self.aer),
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("ap", self.ap),
            ("mr2", self.mr2),
        ] {
            row(k, format!("{v:.6}"));
        }
        let o = &self.overlap_subset;
        out.push_str(&format!(
            "overlap subset: {} gts ({:.6} of all), tp {} fp {} fn {}, \
             precision {:.6} recall {:.6} accuracy {:.6} f1 {:.6}\n",
            o.gts, o.gt_fraction, o.tp, o.fp, o.fn_, o.precision, o.recall, o.accuracy, o.f1
        ));
        out
    }
}

/// Serialize any report through a sorted-key `Value`, pretty-printed with
/// a trailing newline.
pub fn to_sorted_json<T: Serialize>(report: &T) -> String {
    let value = serde_json::to_value(report).expect("report serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_six_decimals() {
        assert_eq!(round6(2.0 / 46.0), 0.043478);
        assert_eq!(round6(1.0), 1.0);
        assert_eq!(round6(0.0), 0.0);
    }

    #[test]
    fn json_keys_come_out_sorted() {
        #[derive(Serialize)]
        struct T {
            zebra: u32,
            apple: u32,
            mango: u32,
        }
        let text = to_sorted_json(&T {
            zebra: 1,
            apple: 2,
            mango: 3,
        });
        let a = text.find("apple").unwrap();
        let m = text.find("mango").unwrap();
        let z = text.find("zebra").unwrap();
        assert!(a < m && m < z);
        assert!(text.ends_with('\n'));
    }
}
