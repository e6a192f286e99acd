//! Integrated gradients and XRAI-style greedy region attribution.

mod ig;
mod segment;

pub use ig::{averaged_ig, integrated_gradients, AttributionMap, Baseline};
pub use segment::{felzenszwalb, segment_multiscale, Segment, SegmentSet};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::ModelParams;
use crate::sky_image::{save_gray16_normalized, NormalizationSidecar, SkyImage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct XraiConfig {
    pub ig_steps: usize,
    pub baselines: Vec<Baseline>,
    /// FH scale parameters, one segmentation each.
    pub scales: Vec<f64>,
    pub area_floor: usize,
    /// Gaussian pre-smoothing of the luminance before segmenting; 0 disables it.
    pub sigma: f64,
}

impl Default for XraiConfig {
    fn default() -> Self {
        XraiConfig {
            ig_steps: 64,
            baselines: vec![Baseline::Black],
            scales: vec![20.0, 50.0, 100.0],
            area_floor: 20,
            sigma: 1.5,
        }
    }
}

impl XraiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ig_steps == 0 {
            return Err(Error::config("ig_steps must be >= 1"));
        }
        if self.baselines.is_empty() {
            return Err(Error::config("at least one baseline is required"));
        }
        if self.scales.is_empty() {
            return Err(Error::config("at least one segmentation scale is required"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::config("sigma must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMeta {
    pub baselines: Vec<Baseline>,
    pub ig_steps: usize,
    pub scales: Vec<f64>,
    /// Set when the segment pool was degenerate and the raw IG map was used.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub scores: Grid<f64>,
    pub meta: HeatmapMeta,
}

impl Heatmap {
    pub fn width(&self) -> usize {
        self.scores.width()
    }

    pub fn height(&self) -> usize {
        self.scores.height()
    }

    /// 16-bit min-max normalized PNG at `path` plus the constants as JSON at `sidecar`.
    pub fn save(&self, path: &Path, sidecar: &Path) -> Result<NormalizationSidecar> {
        let norm = save_gray16_normalized(&self.scores, path)?;
        let json = serde_json::to_string_pretty(&norm).expect("sidecar serializes");
        std::fs::write(sidecar, json + "\n").map_err(|e| Error::io(sidecar, e))?;
        Ok(norm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Index into the segment pool.
    pub segment: usize,
    /// Positive attribution per newly covered pixel.
    pub density: f64,
    /// Heatmap value given to the newly covered pixels.
    pub score: f64,
    pub pixels_added: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyOutcome {
    pub scores: Grid<f64>,
    pub order: Vec<Selection>,
    /// Selection step that covered each pixel.
    pub step_of: Grid<u32>,
}

/// Greedy region selection: repeatedly take the pool segment with the highest mean
/// positive attribution over its still-uncovered pixels (ties: smaller id, then
/// lower scale) until every pixel is covered. Pixels are scored with the running
/// minimum of the selected densities, so scores never increase along the order.
pub fn greedy_regions(attribution: &Grid<f64>, segments: &SegmentSet) -> Result<GreedyOutcome> {
    let (w, h) = (attribution.width(), attribution.height());
    if (w, h) != (segments.width(), segments.height()) {
        return Err(Error::domain("segmentation and attribution sizes differ"));
    }
    let n_scales = segments.labelings.len();
    let pos: Vec<f64> = attribution.as_slice().iter().map(|&v| v.max(0.0)).collect();
    // pool index of each (scale, id)
    let mut offset = vec![0usize; n_scales + 1];
    for s in &segments.pool {
        offset[s.scale_index + 1] += 1;
    }
    for i in 0..n_scales {
        offset[i + 1] += offset[i];
    }
    let pool_index = |scale: usize, id: u32| offset[scale] + id as usize;
    for (i, s) in segments.pool.iter().enumerate() {
        if pool_index(s.scale_index, s.id) != i {
            return Err(Error::domain("segment pool is not ordered by (scale, id)"));
        }
    }
    let mut sum: Vec<f64> = segments
        .pool
        .iter()
        .map(|s| s.pixels.iter().map(|&p| pos[p as usize]).sum())
        .collect();
    let mut count: Vec<usize> = segments.pool.iter().map(|s| s.pixels.len()).collect();
    let mut covered = vec![false; w * h];
    let mut step_of = vec![u32::MAX; w * h];
    let mut scores = vec![0.0; w * h];
    let mut order = Vec::new();
    let mut remaining = w * h;
    let mut floor = f64::INFINITY;
    while remaining > 0 {
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in segments.pool.iter().enumerate() {
            if count[i] == 0 {
                continue;
            }
            let d = sum[i] / count[i] as f64;
            let better = match best {
                None => true,
                Some((b, bd)) => {
                    let bs = &segments.pool[b];
                    d > bd || (d == bd && (s.id, s.scale_index) < (bs.id, bs.scale_index))
                }
            };
            if better {
                best = Some((i, d));
            }
        }
        let (b, density) = best.expect("uncovered pixels belong to some segment");
        floor = floor.min(density);
        let step = order.len() as u32;
        let mut added = 0;
        for &p in &segments.pool[b].pixels {
            let p = p as usize;
            if covered[p] {
                continue;
            }
            covered[p] = true;
            step_of[p] = step;
            scores[p] = floor;
            added += 1;
            let (x, y) = (p % w, p / w);
            for (si, lab) in segments.labelings.iter().enumerate() {
                let j = pool_index(si, *lab.get(x, y));
                sum[j] -= pos[p];
                count[j] -= 1;
            }
        }
        remaining -= added;
        order.push(Selection {
            segment: b,
            density,
            score: floor,
            pixels_added: added,
        });
    }
    Ok(GreedyOutcome {
        scores: Grid::from_vec(w, h, scores),
        order,
        step_of: Grid::from_vec(w, h, step_of),
    })
}

/// Full XRAI output, for callers that need more than the heatmap.
#[derive(Clone, Debug)]
pub struct XraiOutput {
    pub heatmap: Heatmap,
    pub attribution: AttributionMap,
    /// Empty when the fallback was taken.
    pub order: Vec<Selection>,
}

pub fn xrai_attribution(
    params: &ModelParams,
    patch: &SkyImage,
    config: &XraiConfig,
) -> Result<Heatmap> {
    Ok(xrai_detailed(params, patch, config)?.heatmap)
}

pub fn xrai_detailed(
    params: &ModelParams,
    patch: &SkyImage,
    config: &XraiConfig,
) -> Result<XraiOutput> {
    config.validate()?;
    let attribution = averaged_ig(params, patch, &config.baselines, config.ig_steps)?;
    let segments = segment_multiscale(patch, &config.scales, config.area_floor, config.sigma)?;
    let mut meta = HeatmapMeta {
        baselines: config.baselines.clone(),
        ig_steps: config.ig_steps,
        scales: config.scales.clone(),
        fallback: false,
    };
    if segments
        .pool
        .iter()
        .all(|s| s.pixels.len() < config.area_floor)
    {
        meta.fallback = true;
        return Ok(XraiOutput {
            heatmap: Heatmap {
                scores: attribution.scores.clone(),
                meta,
            },
            attribution,
            order: Vec::new(),
        });
    }
    let g = greedy_regions(&attribution.scores, &segments)?;
    Ok(XraiOutput {
        heatmap: Heatmap {
            scores: g.scores,
            meta,
        },
        attribution,
        order: g.order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    fn linear(side: usize, seed: u64) -> ModelParams {
        ModelParams::new(Architecture::linear([3, side, side]), seed).unwrap()
    }

    fn ramp(side: usize) -> SkyImage {
        SkyImage::from_raw(
            side,
            side,
            (0..side * side * 3)
                .map(|i| ((i * 31) % 97) as f32 / 97.0)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn linear_model_attribution_is_weight_times_delta() {
        let side = 12;
        let m = linear(side, 3);
        let x = ramp(side);
        let w = &m.tensors()[0].data;
        let plane = side * side;
        for steps in [1, 5, 64] {
            for b in [Baseline::Black, Baseline::White] {
                let a = integrated_gradients(&m, &x, &b.image(side, side), steps).unwrap();
                for i in 0..plane {
                    let px = x.pixel(i % side, i / side);
                    let expect: f64 = (0..3)
                        .map(|c| w[c * plane + i] * (px[c] as f64 - b.value() as f64))
                        .sum();
                    assert!((a.scores.as_slice()[i] - expect).abs() < 1e-12);
                }
                let delta = a.logit_input - a.logit_baselines[0];
                assert!((a.total() - delta).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identical_baseline_gives_zero() {
        let m = linear(8, 1);
        let x = Baseline::White.image(8, 8);
        let a = integrated_gradients(&m, &x, &x, 7).unwrap();
        assert!(a.scores.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_and_zero_steps_are_rejected() {
        let m = linear(8, 1);
        assert!(integrated_gradients(&m, &ramp(8), &SkyImage::new(7, 8), 4).is_err());
        assert!(integrated_gradients(&m, &ramp(8), &ramp(8), 0).is_err());
        assert!(integrated_gradients(&m, &ramp(9), &ramp(9), 4).is_err());
    }

    #[test]
    fn scaled_model_scales_attribution() {
        let m = linear(8, 2);
        let mut m3 = m.clone();
        m3.scale_output(3.0);
        let x = ramp(8);
        let a = averaged_ig(&m, &x, &[Baseline::Black, Baseline::White], 8).unwrap();
        let b = averaged_ig(&m3, &x, &[Baseline::Black, Baseline::White], 8).unwrap();
        for (p, q) in a.scores.as_slice().iter().zip(b.scores.as_slice()) {
            assert!((3.0 * p - q).abs() <= 1e-12 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn constant_model_heatmap_is_zero() {
        let mut m = linear(16, 4);
        m.scale_output(0.0);
        let h = xrai_attribution(&m, &ramp(16), &XraiConfig::default()).unwrap();
        assert!(h.scores.as_slice().iter().all(|&v| v == 0.0));
        assert!(!h.meta.fallback);
    }

    #[test]
    fn tiny_patch_falls_back_to_ig() {
        let m = linear(4, 4);
        let out = xrai_detailed(&m, &ramp(4), &XraiConfig::default()).unwrap();
        assert!(out.heatmap.meta.fallback);
        assert_eq!(out.heatmap.scores, out.attribution.scores);
    }

    #[test]
    fn greedy_prefers_the_dense_half() {
        let mut img = SkyImage::filled(20, 10, [0.1; 3]);
        for y in 0..10 {
            for x in 10..20 {
                img.set_pixel(x, y, [0.7; 3]);
            }
        }
        let segs = segment_multiscale(&img, &[50.0], 5, 0.0).unwrap();
        let attr = Grid::from_fn(20, 10, |x, _| if x >= 10 { 1.0 } else { -1.0 });
        let g = greedy_regions(&attr, &segs).unwrap();
        assert_eq!(g.order.len(), 2);
        assert_eq!(g.order[0].density, 1.0);
        assert_eq!(*g.scores.get(15, 5), 1.0);
        assert_eq!(*g.scores.get(2, 5), 0.0);
    }

    #[test]
    fn invalid_config_is_rejected() {
        for c in [
            XraiConfig {
                ig_steps: 0,
                ..Default::default()
            },
            XraiConfig {
                baselines: vec![],
                ..Default::default()
            },
            XraiConfig {
                scales: vec![],
                ..Default::default()
            },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
