use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::matching::{match_detections, ImageMatches};
use super::Annotation;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl PrCounts {
    pub fn of(m: &ImageMatches) -> Self {
        PrCounts {
            true_positives: m.matches.len(),
            false_positives: m.false_positives.len(),
            false_negatives: m.false_negatives.len(),
        }
    }

    pub fn add(&mut self, other: PrCounts) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }

    /// (precision, recall); each is 0 when its denominator is 0.
    pub fn precision_recall(&self) -> (f64, f64) {
        let tp = self.true_positives as f64;
        let pd = self.true_positives + self.false_positives;
        let rd = self.true_positives + self.false_negatives;
        (
            if pd == 0 { 0.0 } else { tp / pd as f64 },
            if rd == 0 { 0.0 } else { tp / rd as f64 },
        )
    }
}

/// Precision and recall of one or more images' matches.
pub fn compute_pr<'a>(matches: impl IntoIterator<Item = &'a ImageMatches>) -> (f64, f64) {
    let mut c = PrCounts::default();
    for m in matches {
        c.add(PrCounts::of(m));
    }
    c.precision_recall()
}

/// Area under the monotone precision envelope, all recall points (VOC 2010+).
/// `hits` is the TP flag of each ranked prediction; `n_truth` the number of truths.
pub fn average_precision(hits: &[bool], n_truth: usize) -> f64 {
    if n_truth == 0 {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(hits.len() + 2);
    let mut precision = Vec::with_capacity(hits.len() + 2);
    recall.push(0.0);
    precision.push(0.0);
    let mut tp = 0usize;
    for (k, &hit) in hits.iter().enumerate() {
        tp += hit as usize;
        recall.push(tp as f64 / n_truth as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    recall.push(1.0);
    precision.push(0.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    for i in 1..recall.len() {
        if recall[i] != recall[i - 1] {
            ap += (recall[i] - recall[i - 1]) * precision[i];
        }
    }
    ap
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub per_class_ap: BTreeMap<String, f64>,
    pub map: f64,
}

/// Pairs predictions with truths by image id. Truth images without predictions
/// get an empty prediction set; predictions for unknown images are an error.
pub(crate) fn pair_images<'a>(
    preds: &'a [Annotation],
    truths: &'a [Annotation],
) -> Result<Vec<(Option<&'a Annotation>, &'a Annotation)>> {
    let mut by_id: BTreeMap<&str, &Annotation> = BTreeMap::new();
    for p in preds {
        if by_id.insert(p.image.as_str(), p).is_some() {
            return Err(Error::domain(format!(
                "duplicate prediction image id {}",
                p.image
            )));
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(truths.len());
    for t in truths {
        if !seen.insert(t.image.as_str()) {
            return Err(Error::domain(format!(
                "duplicate truth image id {}",
                t.image
            )));
        }
        out.push((by_id.get(t.image.as_str()).copied(), t));
    }
    for p in preds {
        if !seen.contains(p.image.as_str()) {
            return Err(Error::domain(format!(
                "predictions for unknown image {}",
                p.image
            )));
        }
    }
    Ok(out)
}

/// VOC-style mAP: per class, rank every prediction across images by confidence,
/// mark TPs with the greedy matcher, integrate the interpolated PR curve; average
/// over classes that appear in the truth.
pub fn compute_map(
    preds: &[Annotation],
    truths: &[Annotation],
    iou_threshold: f64,
) -> Result<MapResult> {
    let pairs = pair_images(preds, truths)?;
    let truth_classes: BTreeSet<String> = truths
        .iter()
        .flat_map(|t| t.objects.iter().map(|o| o.label.clone()))
        .collect();
    let mut per_class_ap = BTreeMap::new();
    for class in &truth_classes {
        // (score, image index, prediction index, hit)
        let mut ranked: Vec<(f64, usize, usize, bool)> = Vec::new();
        let mut n_truth = 0usize;
        for (img, (pred, truth)) in pairs.iter().enumerate() {
            let t = only_class(truth, class);
            n_truth += t.objects.iter().filter(|o| !o.is_difficult()).count();
            let Some(pred) = pred else { continue };
            let p = only_class(pred, class);
            let m = match_detections(&p, &t, iou_threshold)?;
            for (i, o) in p.objects.iter().enumerate() {
                if let Some(hit) = m.outcome(i) {
                    ranked.push((o.score(), img, i, hit));
                }
            }
        }
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let hits: Vec<bool> = ranked.iter().map(|r| r.3).collect();
        per_class_ap.insert(class.clone(), average_precision(&hits, n_truth));
    }
    let map = if per_class_ap.is_empty() {
        0.0
    } else {
        per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64
    };
    Ok(MapResult { per_class_ap, map })
}

fn only_class(a: &Annotation, class: &str) -> Annotation {
    Annotation {
        image: a.image.clone(),
        width: a.width,
        height: a.height,
        objects: a
            .objects
            .iter()
            .filter(|o| o.label == class)
            .cloned()
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::AnnotatedObject;
    use crate::geometry::Polygon;

    #[test]
    fn pr_arithmetic() {
        let c = PrCounts {
            true_positives: 2,
            false_positives: 1,
            false_negatives: 3,
        };
        let (p, r) = c.precision_recall();
        assert!((p - 2.0 / 3.0).abs() < 1e-15 && (r - 0.4).abs() < 1e-15);
        let none = PrCounts {
            true_positives: 0,
            false_positives: 0,
            false_negatives: 5,
        };
        assert_eq!(none.precision_recall(), (0.0, 0.0));
        let all = PrCounts {
            true_positives: 4,
            ..Default::default()
        };
        assert_eq!(all.precision_recall(), (1.0, 1.0));
    }

    #[test]
    fn ap_known_curves() {
        assert_eq!(average_precision(&[true], 1), 1.0);
        assert_eq!(average_precision(&[], 3), 0.0);
        // TP, FP, TP with 2 truths: 0.5 * 1 + 0.5 * 2/3
        assert!((average_precision(&[true, false, true], 2) - (0.5 + 1.0 / 3.0)).abs() < 1e-12);
    }

    fn one(image: &str, rect: [f64; 4], conf: Option<f64>) -> Annotation {
        Annotation {
            image: image.into(),
            width: 50,
            height: 50,
            objects: vec![AnnotatedObject {
                label: "dso".into(),
                polygon: Polygon::rect(rect[0], rect[1], rect[2], rect[3]),
                confidence: conf,
                difficult: None,
            }],
        }
    }

    #[test]
    fn perfect_single_detection() {
        let t = one("a", [1.0, 1.0, 9.0, 9.0], None);
        let p = one("a", [1.0, 1.0, 9.0, 9.0], Some(0.7));
        assert_eq!(compute_map(&[p], &[t.clone()], 0.5).unwrap().map, 1.0);
        assert_eq!(compute_map(&[], &[t], 0.5).unwrap().map, 0.0);
    }

    #[test]
    fn unknown_prediction_image_is_rejected() {
        let t = one("a", [1.0, 1.0, 9.0, 9.0], None);
        let p = one("b", [1.0, 1.0, 9.0, 9.0], Some(0.7));
        assert!(compute_map(&[p], &[t], 0.5).is_err());
    }

    #[test]
    fn prediction_only_class_is_ignored_by_the_mean() {
        let t = one("a", [1.0, 1.0, 9.0, 9.0], None);
        let mut p = one("a", [1.0, 1.0, 9.0, 9.0], Some(0.7));
        let mut extra = p.objects[0].clone();
        extra.label = "comet".into();
        p.objects.push(extra);
        let r = compute_map(&[p], &[t], 0.5).unwrap();
        assert_eq!(r.map, 1.0);
        assert!(!r.per_class_ap.contains_key("comet"));
    }
}
