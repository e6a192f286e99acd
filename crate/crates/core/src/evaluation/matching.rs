use serde::{Deserialize, Serialize};

use super::Annotation;
use crate::error::{Error, Result};
use crate::geometry::{raster_iou, Polygon};

/// Pixel-count IoU of two polygons; 0 when the union is empty.
pub fn iou(a: &Polygon, b: &Polygon) -> f64 {
    raster_iou(a, b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub prediction: usize,
    pub truth: usize,
    pub iou: f64,
}

/// Outcome of matching the predictions of one image against its truths.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageMatches {
    pub image: String,
    pub matches: Vec<Match>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
    /// Predictions matched to difficult truths; excluded from all counts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ignored: Vec<usize>,
}

impl ImageMatches {
    pub fn true_positives(&self) -> usize {
        self.matches.len()
    }

    /// Whether prediction `i` is a true positive, or `None` when it was ignored.
    pub fn outcome(&self, i: usize) -> Option<bool> {
        if self.matches.iter().any(|m| m.prediction == i) {
            Some(true)
        } else if self.false_positives.contains(&i) {
            Some(false)
        } else {
            None
        }
    }
}

/// Indices of `preds.objects` in descending confidence, ties by index.
pub(crate) fn ranking(preds: &Annotation) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.objects.len()).collect();
    order.sort_by(|&a, &b| {
        preds.objects[b]
            .score()
            .total_cmp(&preds.objects[a].score())
            .then(a.cmp(&b))
    });
    order
}

/// Greedy matching in descending confidence: each prediction takes the unmatched
/// truth of the same label with the highest IoU at or above `iou_threshold`.
pub fn match_detections(
    preds: &Annotation,
    truth: &Annotation,
    iou_threshold: f64,
) -> Result<ImageMatches> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::domain(format!(
            "iou_threshold must be in (0, 1], got {iou_threshold}"
        )));
    }
    let ious: Vec<Vec<f64>> = preds
        .objects
        .iter()
        .map(|p| {
            truth
                .objects
                .iter()
                .map(|t| {
                    if t.label == p.label {
                        iou(&p.polygon, &t.polygon)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(match_with_ious(preds, truth, &ious, iou_threshold))
}

pub(crate) fn match_with_ious(
    preds: &Annotation,
    truth: &Annotation,
    ious: &[Vec<f64>],
    thr: f64,
) -> ImageMatches {
    let mut taken = vec![false; truth.objects.len()];
    let mut out = ImageMatches {
        image: truth.image.clone(),
        ..Default::default()
    };
    for p in ranking(preds) {
        let mut best: Option<(usize, f64)> = None;
        for (t, &v) in ious[p].iter().enumerate() {
            if taken[t] || v < thr || truth.objects[t].label != preds.objects[p].label {
                continue;
            }
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((t, v));
            }
        }
        match best {
            Some((t, v)) => {
                taken[t] = true;
                if truth.objects[t].is_difficult() {
                    out.ignored.push(p);
                } else {
                    out.matches.push(Match {
                        prediction: p,
                        truth: t,
                        iou: v,
                    });
                }
            }
            None => out.false_positives.push(p),
        }
    }
    out.false_negatives = (0..truth.objects.len())
        .filter(|&t| !taken[t] && !truth.objects[t].is_difficult())
        .collect();
    out
}
