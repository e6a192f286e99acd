//! Ground-truth annotations, detection matching, precision/recall and VOC-style mAP.

mod annotation;
mod matching;
mod metrics;

pub use annotation::{AnnotatedObject, Annotation};
pub use matching::{iou, match_detections, ImageMatches, Match};
pub use metrics::{average_precision, compute_map, compute_pr, MapResult, PrCounts};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// The single label used when classes are collapsed.
pub const DSO_LABEL: &str = "dso";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Collapse every label to [`DSO_LABEL`] before matching.
    pub class_agnostic: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_threshold: 0.5,
            class_agnostic: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub class_agnostic: bool,
    pub images: Vec<ImageMatches>,
    pub counts: PrCounts,
    pub precision: f64,
    pub recall: f64,
    pub per_class_ap: BTreeMap<String, f64>,
    pub map: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<serde_json::Value>,
}

pub fn evaluate(
    preds: &[Annotation],
    truths: &[Annotation],
    config: &EvalConfig,
) -> Result<EvalReport> {
    let (preds, truths): (Vec<Annotation>, Vec<Annotation>) = if config.class_agnostic {
        (
            preds.iter().map(|a| a.relabeled(DSO_LABEL)).collect(),
            truths.iter().map(|a| a.relabeled(DSO_LABEL)).collect(),
        )
    } else {
        (preds.to_vec(), truths.to_vec())
    };
    let pairs = metrics::pair_images(&preds, &truths)?;
    let mut images = Vec::with_capacity(pairs.len());
    let mut counts = PrCounts::default();
    for (pred, truth) in pairs {
        let empty = Annotation::empty(truth.image.clone(), truth.width, truth.height);
        let m = match_detections(pred.unwrap_or(&empty), truth, config.iou_threshold)?;
        counts.add(PrCounts::of(&m));
        images.push(m);
    }
    let (precision, recall) = counts.precision_recall();
    let MapResult { per_class_ap, map } = compute_map(&preds, &truths, config.iou_threshold)?;
    Ok(EvalReport {
        iou_threshold: config.iou_threshold,
        class_agnostic: config.class_agnostic,
        images,
        counts,
        precision,
        recall,
        per_class_ap,
        map,
        stats: None,
    })
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "iou_threshold  {:.2}", self.iou_threshold);
        let _ = writeln!(
            s,
            "tp {}  fp {}  fn {}",
            self.counts.true_positives, self.counts.false_positives, self.counts.false_negatives
        );
        let _ = writeln!(s, "precision      {:.4}", self.precision);
        let _ = writeln!(s, "recall         {:.4}", self.recall);
        let _ = writeln!(s, "{:<14} {:>8}", "class", "AP");
        for (class, ap) in &self.per_class_ap {
            let _ = writeln!(s, "{class:<14} {ap:>8.4}");
        }
        let _ = writeln!(s, "{:<14} {:>8.4}", "mAP", self.map);
        s
    }
}
