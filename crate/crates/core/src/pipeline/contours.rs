use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{AnnotatedObject, Annotation, DSO_LABEL};
use crate::geometry::{trace_components, Polygon};
use crate::grid::{connected_components, percentile, Grid, Mask};
use crate::sky_image::SkyImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub polygon: Polygon,
    /// Mean normalized map value inside, in [0, 1].
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSet {
    pub width: usize,
    pub height: usize,
    pub contours: Vec<Contour>,
}

impl ContourSet {
    pub fn empty(width: usize, height: usize) -> Self {
        ContourSet {
            width,
            height,
            contours: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.contours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contours.is_empty()
    }

    /// Prediction annotation with every contour labelled [`DSO_LABEL`].
    pub fn to_annotation(&self, image: &str) -> Annotation {
        Annotation {
            image: image.to_string(),
            width: self.width,
            height: self.height,
            objects: self
                .contours
                .iter()
                .map(|c| AnnotatedObject {
                    label: DSO_LABEL.to_string(),
                    polygon: c.polygon.clone(),
                    confidence: Some(c.confidence),
                    difficult: None,
                })
                .collect(),
        }
    }
}

/// Traces the components of `mask` with at least `min_area` pixels; each contour's
/// confidence is the mean of `score` (min-max normalized over the frame) inside it.
pub fn mask_to_contours(mask: &Mask, score: &Grid<f64>, min_area: usize) -> ContourSet {
    let (w, h) = (mask.width(), mask.height());
    let (lo, hi) = score
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = hi - lo;
    let cc = connected_components(mask);
    let mut sums = vec![0.0; cc.count() + 1];
    for (&l, &v) in cc.labels.as_slice().iter().zip(score.as_slice()) {
        if l > 0 {
            sums[l as usize] += if span > 0.0 { (v - lo) / span } else { 0.0 };
        }
    }
    let contours = trace_components(&cc.labels, &cc.sizes, min_area.max(1))
        .into_iter()
        .map(|(label, polygon)| Contour {
            polygon,
            confidence: (sums[label as usize] / cc.size(label) as f64).clamp(0.0, 1.0),
        })
        .collect();
    ContourSet {
        width: w,
        height: h,
        contours,
    }
}

/// Binarizes at the `pct` percentile of the positive values, opens with a 3×3 square,
/// and traces components of at least `min_area` pixels.
pub fn heatmap_to_contours(heatmap: &Grid<f64>, pct: f64, min_area: usize) -> Result<ContourSet> {
    if !(pct > 0.0 && pct < 100.0) {
        return Err(Error::config(format!(
            "percentile must be in (0, 100), got {pct}"
        )));
    }
    let mut positive: Vec<f64> = heatmap
        .as_slice()
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .collect();
    if positive.is_empty() {
        return Ok(ContourSet::empty(heatmap.width(), heatmap.height()));
    }
    let thr = percentile(&mut positive, pct);
    let mask = heatmap.map(|&v| v > 0.0 && v >= thr).open(1);
    Ok(mask_to_contours(&mask, heatmap, min_area))
}

/// Draws the contours over a copy of `image` in `rgb`.
pub fn draw_contours(image: &SkyImage, contours: &ContourSet, rgb: [f32; 3]) -> SkyImage {
    let mut out = image.clone();
    let sx = image.width() as f64 / contours.width as f64;
    let sy = image.height() as f64 / contours.height as f64;
    for c in &contours.contours {
        let pts = &c.polygon.points;
        for i in 0..pts.len() {
            let a = pts[i];
            let b = pts[(i + 1) % pts.len()];
            let steps = ((b[0] - a[0]).abs().max((b[1] - a[1]).abs()) * 2.0)
                .ceil()
                .max(1.0) as usize;
            for k in 0..=steps {
                let t = k as f64 / steps as f64;
                let x = ((a[0] + t * (b[0] - a[0])) * sx).floor();
                let y = ((a[1] + t * (b[1] - a[1])) * sy).floor();
                let x = (x.max(0.0) as usize).min(image.width() - 1);
                let y = (y.max(0.0) as usize).min(image.height() - 1);
                out.set_pixel(x, y, rgb);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_has_no_contours() {
        let z = Grid::filled(50, 40, 0.0);
        assert!(heatmap_to_contours(&z, 70.0, 50).unwrap().is_empty());
    }

    #[test]
    fn percentile_must_be_open_interval() {
        let z = Grid::filled(5, 5, 1.0);
        assert!(heatmap_to_contours(&z, 0.0, 1).is_err());
        assert!(heatmap_to_contours(&z, 100.0, 1).is_err());
    }

    #[test]
    fn disc_area_is_preserved() {
        let r: f64 = 20.0;
        let disc = Grid::from_fn(100, 100, |x, y| {
            let (dx, dy) = (x as f64 + 0.5 - 50.0, y as f64 + 0.5 - 50.0);
            if dx * dx + dy * dy <= r * r {
                1.0
            } else {
                0.0
            }
        });
        let pixels = disc.as_slice().iter().filter(|&&v| v > 0.0).count() as f64;
        for p in [10.0, 50.0, 90.0] {
            let cs = heatmap_to_contours(&disc, p, 50).unwrap();
            assert_eq!(cs.len(), 1);
            let c = &cs.contours[0];
            assert!((c.polygon.area() - pixels).abs() <= 0.05 * pixels);
            assert!(c.polygon.is_simple() && c.polygon.within_bounds(100, 100));
            assert_eq!(c.confidence, 1.0);
        }
    }

    #[test]
    fn separated_blobs_are_separate_polygons() {
        let g = Grid::from_fn(120, 60, |x, y| {
            let d1 = ((x as f64 - 30.0).powi(2) + (y as f64 - 30.0).powi(2)).sqrt();
            let d2 = ((x as f64 - 90.0).powi(2) + (y as f64 - 30.0).powi(2)).sqrt();
            if d1 < 15.0 {
                2.0 - d1 / 15.0
            } else if d2 < 15.0 {
                1.5 - d2 / 30.0
            } else {
                0.0
            }
        });
        let cs = heatmap_to_contours(&g, 5.0, 50).unwrap();
        assert_eq!(cs.len(), 2);
        assert!(cs.contours[0].confidence > cs.contours[1].confidence);
    }

    #[test]
    fn specks_are_opened_away() {
        let mut g = Grid::filled(60, 60, 0.0);
        g.set(10, 10, 5.0);
        g.set(40, 40, 5.0);
        assert!(heatmap_to_contours(&g, 50.0, 1).unwrap().is_empty());
    }

    #[test]
    fn annotation_carries_confidence() {
        let cs = ContourSet {
            width: 10,
            height: 10,
            contours: vec![Contour {
                polygon: Polygon::rect(1.0, 1.0, 4.0, 4.0),
                confidence: 0.25,
            }],
        };
        let a = cs.to_annotation("f");
        assert_eq!(a.objects[0].confidence, Some(0.25));
        assert_eq!(a.objects[0].label, DSO_LABEL);
    }
}
