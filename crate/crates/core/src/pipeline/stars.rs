//! Classical starless baseline: morphological star suppression, a mesh background,
//! and k·σ thresholding.

use serde::{Deserialize, Serialize};

use super::contours::{mask_to_contours, ContourSet};
use crate::error::{Error, Result};
use crate::grid::{connected_components, median, Grid, Mask};
use crate::sky_image::SkyImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StarRemovalConfig {
    /// Top-hat residual threshold in units of the noise sigma.
    pub k_sigma: f64,
    /// Radius of the square opening (5×5 at 2).
    pub opening_radius: usize,
    /// Detections whose bounding box exceeds this many pixels on a side are kept as extended.
    pub star_scale_max: usize,
    /// Dilation of each star mask before in-painting.
    pub grow: usize,
    /// Width of the ring around each star used for the replacement median.
    pub ring: usize,
}

impl Default for StarRemovalConfig {
    fn default() -> Self {
        StarRemovalConfig {
            k_sigma: 5.0,
            opening_radius: 2,
            star_scale_max: 15,
            grow: 2,
            ring: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub stars: StarRemovalConfig,
    /// Background mesh cell size in pixels.
    pub mesh: usize,
    pub k_sigma: f64,
    pub min_area: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            stars: StarRemovalConfig::default(),
            mesh: 128,
            k_sigma: 3.0,
            min_area: 50,
        }
    }
}

/// Noise sigma from the MAD of horizontal neighbour differences.
pub fn noise_sigma(g: &Grid<f64>) -> f64 {
    let (w, h) = (g.width(), g.height());
    if w < 2 {
        return 0.0;
    }
    let mut d: Vec<f64> = (0..h)
        .flat_map(|y| (0..w - 1).map(move |x| (y, x)))
        .map(|(y, x)| (g.get(x + 1, y) - g.get(x, y)).abs())
        .collect();
    1.4826 * median(&mut d) / std::f64::consts::SQRT_2
}

fn rank_filter(g: &Grid<f64>, r: usize, take_min: bool) -> Grid<f64> {
    let pick = |a: f64, b: f64| if take_min { a.min(b) } else { a.max(b) };
    let (w, h) = (g.width(), g.height());
    let horiz = Grid::from_fn(w, h, |x, y| {
        let (lo, hi) = (x.saturating_sub(r), (x + r).min(w - 1));
        (lo..=hi)
            .map(|i| *g.get(i, y))
            .reduce(pick)
            .expect("non-empty window")
    });
    Grid::from_fn(w, h, |x, y| {
        let (lo, hi) = (y.saturating_sub(r), (y + r).min(h - 1));
        (lo..=hi)
            .map(|j| *horiz.get(x, j))
            .reduce(pick)
            .expect("non-empty window")
    })
}

/// Pixels belonging to compact bright sources: white top-hat above k·σ, small components only.
pub fn star_mask(image: &SkyImage, config: &StarRemovalConfig) -> Mask {
    let lum = image.luminance();
    let sigma = noise_sigma(&lum);
    let opened = rank_filter(
        &rank_filter(&lum, config.opening_radius, true),
        config.opening_radius,
        false,
    );
    let thr = config.k_sigma * sigma.max(1e-12);
    let cand = Grid::from_fn(lum.width(), lum.height(), |x, y| {
        lum.get(x, y) - opened.get(x, y) > thr
    });
    let cc = connected_components(&cand);
    let mut bbox = vec![(usize::MAX, usize::MAX, 0usize, 0usize); cc.count() + 1];
    for y in 0..lum.height() {
        for x in 0..lum.width() {
            let l = *cc.labels.get(x, y) as usize;
            if l > 0 {
                let b = &mut bbox[l];
                *b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
            }
        }
    }
    let compact: Vec<bool> = bbox
        .iter()
        .map(|b| {
            b.0 != usize::MAX
                && b.2 - b.0 < config.star_scale_max
                && b.3 - b.1 < config.star_scale_max
        })
        .collect();
    cc.labels.map(|&l| l > 0 && compact[l as usize])
}

/// Replaces compact sources with the median of a surrounding ring, per channel.
pub fn remove_stars(image: &SkyImage) -> SkyImage {
    remove_stars_with(image, &StarRemovalConfig::default())
}

pub fn remove_stars_with(image: &SkyImage, config: &StarRemovalConfig) -> SkyImage {
    let (w, h) = (image.width(), image.height());
    let mask = star_mask(image, config).dilate(config.grow);
    let cc = connected_components(&mask);
    if cc.count() == 0 {
        return image.clone();
    }
    let mut bbox = vec![(usize::MAX, usize::MAX, 0usize, 0usize); cc.count() + 1];
    for y in 0..h {
        for x in 0..w {
            let l = *cc.labels.get(x, y) as usize;
            if l > 0 {
                let b = &mut bbox[l];
                *b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
            }
        }
    }
    let mut out = image.clone();
    let ring = config.ring.max(1);
    for (label, &(x0, y0, x1, y1)) in bbox.iter().enumerate().skip(1) {
        let (rx0, ry0) = (x0.saturating_sub(ring), y0.saturating_sub(ring));
        let (rx1, ry1) = ((x1 + ring).min(w - 1), (y1 + ring).min(h - 1));
        let mut samples: [Vec<f64>; 3] = Default::default();
        for y in ry0..=ry1 {
            for x in rx0..=rx1 {
                if !*mask.get(x, y) {
                    let p = image.pixel(x, y);
                    for c in 0..3 {
                        samples[c].push(p[c] as f64);
                    }
                }
            }
        }
        if samples[0].is_empty() {
            continue;
        }
        let fill = [
            median(&mut samples[0]) as f32,
            median(&mut samples[1]) as f32,
            median(&mut samples[2]) as f32,
        ];
        for y in y0..=y1 {
            for x in x0..=x1 {
                if *cc.labels.get(x, y) as usize == label {
                    out.set_pixel(x, y, fill);
                }
            }
        }
    }
    out
}

fn clipped_median(values: &mut Vec<f64>) -> f64 {
    let mut m = median(values);
    for _ in 0..3 {
        let mut dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
        let s = 1.4826 * median(&mut dev);
        if s <= 0.0 {
            break;
        }
        let before = values.len();
        values.retain(|v| (v - m).abs() <= 3.0 * s);
        if values.is_empty() {
            break;
        }
        m = median(values);
        if values.len() == before {
            break;
        }
    }
    m
}

/// Sigma-clipped median of each mesh cell, bilinearly interpolated between cell centres.
pub fn mesh_background(g: &Grid<f64>, cell: usize) -> Grid<f64> {
    let (w, h) = (g.width(), g.height());
    let cell = cell.max(1);
    let (nx, ny) = (w.div_ceil(cell), h.div_ceil(cell));
    let mut mesh = Grid::filled(nx, ny, 0.0);
    let mut centres_x = vec![0.0; nx];
    let mut centres_y = vec![0.0; ny];
    for cy in 0..ny {
        for cx in 0..nx {
            let (x0, y0) = (cx * cell, cy * cell);
            let (x1, y1) = ((x0 + cell).min(w), (y0 + cell).min(h));
            let mut v: Vec<f64> = (y0..y1)
                .flat_map(|y| (x0..x1).map(move |x| (x, y)))
                .map(|(x, y)| *g.get(x, y))
                .collect();
            mesh.set(cx, cy, clipped_median(&mut v));
            centres_x[cx] = (x0 + x1) as f64 / 2.0;
            centres_y[cy] = (y0 + y1) as f64 / 2.0;
        }
    }
    let locate = |p: f64, c: &[f64]| -> (usize, usize, f64) {
        if c.len() == 1 || p <= c[0] {
            return (0, 0, 0.0);
        }
        if p >= c[c.len() - 1] {
            return (c.len() - 1, c.len() - 1, 0.0);
        }
        let i = c.partition_point(|&v| v <= p) - 1;
        (i, i + 1, (p - c[i]) / (c[i + 1] - c[i]))
    };
    Grid::from_fn(w, h, |x, y| {
        let (x0, x1, fx) = locate(x as f64 + 0.5, &centres_x);
        let (y0, y1, fy) = locate(y as f64 + 0.5, &centres_y);
        let top = mesh.get(x0, y0) * (1.0 - fx) + mesh.get(x1, y0) * fx;
        let bot = mesh.get(x0, y1) * (1.0 - fx) + mesh.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    })
}

/// The starless baseline on `image`: remove stars, then contour the residual.
pub fn baseline_contours(image: &SkyImage, config: &BaselineConfig) -> Result<ContourSet> {
    let starless = remove_stars_with(image, &config.stars);
    baseline_from_starless(&starless, config)
}

/// Background-subtracts and thresholds an already starless image (the drop-in point
/// for an external star remover's output).
pub fn baseline_from_starless(starless: &SkyImage, config: &BaselineConfig) -> Result<ContourSet> {
    if !(config.k_sigma.is_finite() && config.k_sigma > 0.0) {
        return Err(Error::config("baseline k_sigma must be > 0"));
    }
    let lum = starless.luminance();
    let bg = mesh_background(&lum, config.mesh);
    let resid = Grid::from_fn(lum.width(), lum.height(), |x, y| {
        lum.get(x, y) - bg.get(x, y)
    });
    let sigma = noise_sigma(&resid);
    let thr = config.k_sigma * sigma;
    let mask = resid.map(|&v| v > thr && v > 0.0).open(1);
    Ok(mask_to_contours(
        &mask,
        &resid.map(|&v| v.max(0.0)),
        config.min_area,
    ))
}
