//! Full-frame detection: tile, classify, attribute the selected patches, stitch,
//! and contour; plus the starless thresholding baseline.

mod contours;
mod stars;
mod tiling;

pub use contours::{draw_contours, heatmap_to_contours, mask_to_contours, Contour, ContourSet};
pub use stars::{
    baseline_contours, baseline_from_starless, mesh_background, noise_sigma, remove_stars,
    remove_stars_with, star_mask, BaselineConfig, StarRemovalConfig,
};
pub use tiling::{stitch, tile, PatchGrid, Slot};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{image_to_input, sigmoid, ModelParams};
use crate::sky_image::{resize_grid, SkyImage};
use crate::synthgen::PATCH_SIZE;
use crate::xrai::{xrai_attribution, Heatmap, HeatmapMeta, XraiConfig};

const FORWARD_BATCH: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    /// Slots with P(dso_present) below this are not attributed.
    pub threshold: f64,
    pub overlap: usize,
    /// Percentile of positive heatmap values used to binarize.
    /// Values are per-slot normalized, so sky sits at zero and only object pixels count.
    pub percentile: f64,
    pub min_area: usize,
    /// Resize factor applied before tiling; the heatmap is mapped back afterwards.
    pub scale: f64,
    /// Worker threads for classification and attribution.
    pub jobs: usize,
    pub xrai: XraiConfig,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            threshold: 0.5,
            overlap: 0,
            percentile: 30.0,
            min_area: 50,
            scale: 1.0,
            jobs: 1,
            xrai: XraiConfig::default(),
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            )));
        }
        if self.overlap >= PATCH_SIZE {
            return Err(Error::config(format!(
                "overlap must be in [0, {}]",
                PATCH_SIZE - 1
            )));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(Error::config(format!(
                "percentile must be in (0, 100), got {}",
                self.percentile
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::config(format!(
                "scale must be > 0, got {}",
                self.scale
            )));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs must be >= 1"));
        }
        self.xrai.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub width: usize,
    pub height: usize,
    /// Size the image was resampled to before tiling.
    pub processed_width: usize,
    pub processed_height: usize,
    pub slot_count: usize,
    pub selected_count: usize,
    pub forward_calls: usize,
    pub attribution_calls: usize,
    pub contour_count: usize,
    pub wall_time_s: f64,
    /// P(dso_present) per slot, row-major.
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotSelection {
    /// Selected slot indices, ascending.
    pub selected: Vec<usize>,
    /// Probability of every slot.
    pub probabilities: Vec<f64>,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
}

/// Classifies every slot; keeps those with probability ≥ `threshold`.
pub fn select_patches(
    grid: &PatchGrid,
    image: &SkyImage,
    params: &ModelParams,
    threshold: f64,
) -> Result<SlotSelection> {
    select_patches_jobs(grid, image, params, threshold, 1)
}

fn select_patches_jobs(
    grid: &PatchGrid,
    image: &SkyImage,
    params: &ModelParams,
    threshold: f64,
    jobs: usize,
) -> Result<SlotSelection> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::config(format!(
            "threshold must be in [0, 1], got {threshold}"
        )));
    }
    let idx: Vec<usize> = (0..grid.len()).collect();
    let batches: Vec<&[usize]> = idx.chunks(FORWARD_BATCH).collect();
    let run = |b: &&[usize]| -> Result<Vec<f64>> {
        let x: Vec<f64> = b
            .iter()
            .flat_map(|&s| image_to_input(&grid.patch(image, s)))
            .collect();
        Ok(params
            .logits_batch(&x, b.len())?
            .into_iter()
            .map(sigmoid)
            .collect())
    };
    let per_batch: Vec<Result<Vec<f64>>> = if jobs > 1 {
        pool(jobs)?.install(|| batches.par_iter().map(run).collect())
    } else {
        batches.iter().map(run).collect()
    };
    let mut probabilities = Vec::with_capacity(grid.len());
    for b in per_batch {
        probabilities.extend(b?);
    }
    let selected = probabilities
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(i, _)| i)
        .collect();
    Ok(SlotSelection {
        selected,
        probabilities,
    })
}

/// Pre-scale target: the nearest whole number of patches to `extent · factor`.
pub fn prescale_extent(extent: usize, factor: f64) -> usize {
    if factor == 1.0 {
        return extent;
    }
    ((extent as f64 * factor / PATCH_SIZE as f64).round() as usize).max(1) * PATCH_SIZE
}

/// Rescales one slot's heatmap to [0, 1] above its median: the slot's background
/// segment maps to zero and the strongest region to one. Constant maps become zero.
pub fn normalize_slot(scores: &mut Grid<f64>) {
    let mut sorted = scores.as_slice().to_vec();
    if sorted.is_empty() {
        return;
    }
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let span = sorted[sorted.len() - 1] - median;
    for v in scores.as_mut_slice() {
        *v = if span > 0.0 {
            ((*v - median) / span).max(0.0)
        } else {
            0.0
        };
    }
}

/// End-to-end detection of one frame.
pub fn detect(
    image: &SkyImage,
    params: &ModelParams,
    config: &DetectConfig,
) -> Result<(Heatmap, ContourSet, RunStats)> {
    config.validate()?;
    let start = Instant::now();
    let (w, h) = (image.width(), image.height());
    let (pw, ph) = (
        prescale_extent(w, config.scale),
        prescale_extent(h, config.scale),
    );
    let work = if (pw, ph) == (w, h) {
        image.clone()
    } else {
        image.resize_bilinear(pw, ph)
    };
    let grid = tile(&work, config.overlap)?;
    let sel = select_patches_jobs(&grid, &work, params, config.threshold, config.jobs)?;
    let attribute = |&s: &usize| xrai_attribution(params, &grid.patch(&work, s), &config.xrai);
    let maps: Vec<Result<Heatmap>> = if config.jobs > 1 {
        pool(config.jobs)?.install(|| sel.selected.par_iter().map(attribute).collect())
    } else {
        sel.selected.iter().map(attribute).collect()
    };
    let mut maps: Vec<Heatmap> = maps.into_iter().collect::<Result<_>>()?;
    maps.iter_mut().for_each(|m| normalize_slot(&mut m.scores));
    let fallback = maps.iter().any(|m| m.meta.fallback);
    let pairs: Vec<(usize, &Grid<f64>)> = sel
        .selected
        .iter()
        .copied()
        .zip(maps.iter().map(|m| &m.scores))
        .collect();
    let mut full = stitch(&pairs, &grid)?;
    if (pw, ph) != (w, h) {
        full = resize_grid(&full, w, h);
    }
    let contours = heatmap_to_contours(&full, config.percentile, config.min_area)?;
    let stats = RunStats {
        width: w,
        height: h,
        processed_width: pw,
        processed_height: ph,
        slot_count: grid.len(),
        selected_count: sel.selected.len(),
        forward_calls: grid.len(),
        attribution_calls: maps.len(),
        contour_count: contours.len(),
        wall_time_s: start.elapsed().as_secs_f64(),
        probabilities: sel.probabilities,
    };
    let heatmap = Heatmap {
        scores: full,
        meta: HeatmapMeta {
            baselines: config.xrai.baselines.clone(),
            ig_steps: config.xrai.ig_steps,
            scales: config.xrai.scales.clone(),
            fallback,
        },
    };
    Ok((heatmap, contours, stats))
}
