use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dso::DsoModel;
use super::noise::add_read_noise;
use super::{DsoKind, DsoSpec, InstrumentProfile, ShapeParams};
use crate::error::Result;
use crate::evaluation::{AnnotatedObject, Annotation};
use crate::geometry::trace_components;
use crate::grid::{connected_components, Mask};
use crate::seed::{derive_seed, rng_for};
use crate::sky_image::SkyImage;

/// A point source; `peak` is the PSF amplitude before color tinting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Star {
    pub x: f64,
    pub y: f64,
    pub peak: f64,
    pub color: [f64; 3],
}

const HALO_FRACTION: f64 = 0.03;
const HALO_WIDTH: f64 = 3.5;

/// Adds a Gaussian PSF star (with a faint wide halo) to the frame window at (`x0`, `y0`).
pub(crate) fn add_star(img: &mut SkyImage, x0: usize, y0: usize, star: &Star, sigma: f64) {
    if star.peak <= 0.0 {
        return;
    }
    let halo_sigma = sigma * HALO_WIDTH;
    let reach = (halo_sigma * (2.0 * (star.peak * HALO_FRACTION / 2e-5).max(1.0).ln()).sqrt())
        .max(sigma * (2.0 * (star.peak / 2e-5).max(1.0).ln()).sqrt());
    let (lx, ly) = (star.x - x0 as f64, star.y - y0 as f64);
    let px0 = (lx - reach).floor().max(0.0) as usize;
    let py0 = (ly - reach).floor().max(0.0) as usize;
    let px1 = ((lx + reach).ceil() + 1.0).clamp(0.0, img.width() as f64) as usize;
    let py1 = ((ly + reach).ceil() + 1.0).clamp(0.0, img.height() as f64) as usize;
    let inv_core = 1.0 / (2.0 * sigma * sigma);
    let inv_halo = 1.0 / (2.0 * halo_sigma * halo_sigma);
    for py in py0..py1 {
        let dy = py as f64 + 0.5 - ly;
        for px in px0..px1 {
            let dx = px as f64 + 0.5 - lx;
            let d2 = dx * dx + dy * dy;
            let v = star.peak * ((-d2 * inv_core).exp() + HALO_FRACTION * (-d2 * inv_halo).exp());
            if v > 1e-6 {
                let c = star.color;
                img.add_pixel(
                    px,
                    py,
                    [(v * c[0]) as f32, (v * c[1]) as f32, (v * c[2]) as f32],
                );
            }
        }
    }
}

/// Analytic description of a frame: sky background, field stars and deep-sky objects.
#[derive(Clone, Debug)]
pub struct SceneModel {
    profile: InstrumentProfile,
    seed: u64,
    sky: [f64; 3],
    gradient_dir: [f64; 2],
    stars: Vec<Star>,
    dsos: Vec<DsoModel>,
}

impl SceneModel {
    pub fn new(
        profile: &InstrumentProfile,
        star_count: usize,
        specs: &[DsoSpec],
        seed: u64,
    ) -> Result<Self> {
        profile.validate()?;
        for spec in specs {
            spec.validate(profile.width, profile.height)?;
        }
        let mut rng = rng_for(seed, "sky", 0);
        let warm: f64 = rng.random();
        let tint = [1.0, 0.9 + 0.06 * warm, 0.78 + 0.12 * warm];
        let sky = tint.map(|t| t * profile.sky_level);
        let theta = rng.random::<f64>() * 2.0 * PI;
        let stars = place_stars(profile, star_count, derive_seed(seed, "stars", 0));
        let dsos = specs
            .iter()
            .enumerate()
            .map(|(i, s)| DsoModel::new(s, profile.psf_sigma(), derive_seed(seed, "dso", i as u64)))
            .collect();
        Ok(SceneModel {
            profile: profile.clone(),
            seed,
            sky,
            gradient_dir: [theta.cos(), theta.sin()],
            stars,
            dsos,
        })
    }

    pub fn profile(&self) -> &InstrumentProfile {
        &self.profile
    }

    pub fn stars(&self) -> &[Star] {
        &self.stars
    }

    pub fn dsos(&self) -> &[DsoModel] {
        &self.dsos
    }

    /// Noise-free sky (pedestal + gradient) at frame pixel (`px`, `py`).
    pub fn sky_at(&self, px: usize, py: usize) -> [f64; 3] {
        let (w, h) = (self.profile.width as f64, self.profile.height as f64);
        let diag = (w * w + h * h).sqrt();
        let t = ((px as f64 + 0.5 - w / 2.0) * self.gradient_dir[0]
            + (py as f64 + 0.5 - h / 2.0) * self.gradient_dir[1])
            / diag
            + 0.5;
        let g = self.profile.sky_gradient_max * t.clamp(0.0, 1.0);
        let l = self.profile.sky_level.max(1e-12);
        [0, 1, 2].map(|c| self.sky[c] + g * self.sky[c] / l)
    }

    /// Noise-free, unclipped window of the sky alone.
    pub fn sky_window(&self, x0: usize, y0: usize, w: usize, h: usize) -> SkyImage {
        let mut img = SkyImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let s = self.sky_at(x0 + x, y0 + y);
                img.set_pixel(x, y, [s[0] as f32, s[1] as f32, s[2] as f32]);
            }
        }
        img
    }

    /// Sky + stars + objects, before noise and clipping.
    pub fn render_window_noiseless(&self, x0: usize, y0: usize, w: usize, h: usize) -> SkyImage {
        let mut img = self.sky_window(x0, y0, w, h);
        let sigma = self.profile.psf_sigma();
        for star in &self.stars {
            add_star(&mut img, x0, y0, star, sigma);
        }
        for dso in &self.dsos {
            dso.render_into(&mut img, x0, y0);
        }
        img
    }

    /// Final window: noise-free render plus read noise, clipped to [0, 1].
    pub fn render_window(&self, x0: usize, y0: usize, w: usize, h: usize) -> SkyImage {
        let mut img = self.render_window_noiseless(x0, y0, w, h);
        add_read_noise(
            &mut img,
            x0,
            y0,
            self.profile.read_noise_sigma,
            derive_seed(self.seed, "noise", 0),
        );
        img.clip_unit();
        img.provenance.seed = Some(self.seed);
        img.provenance.instrument = Some(self.profile.name.clone());
        img
    }

    pub fn render(&self) -> SkyImage {
        self.render_window(0, 0, self.profile.width, self.profile.height)
    }

    /// Union of all object masks over a window.
    pub fn truth_mask_window(&self, x0: usize, y0: usize, w: usize, h: usize) -> Mask {
        let mut mask = Mask::filled(w, h, false);
        for dso in &self.dsos {
            dso.mask_into(&mut mask, x0, y0);
        }
        mask
    }

    pub fn object_masks(&self) -> Vec<Mask> {
        let (w, h) = (self.profile.width, self.profile.height);
        self.dsos
            .iter()
            .map(|d| {
                let mut m = Mask::filled(w, h, false);
                d.mask_into(&mut m, 0, 0);
                m
            })
            .collect()
    }

    /// One polygon per connected component of the union mask, labeled with the
    /// kind that contributes most of its pixels.
    pub fn annotation(&self, image_id: &str) -> Annotation {
        let (w, h) = (self.profile.width, self.profile.height);
        let masks = self.object_masks();
        let mut union = Mask::filled(w, h, false);
        for m in &masks {
            union.union_with(m);
        }
        let cc = connected_components(&union);
        let mut votes = vec![[0usize; 3]; cc.count()];
        for (m, dso) in masks.iter().zip(&self.dsos) {
            let k = match dso.spec().kind() {
                DsoKind::Galaxy => 0,
                DsoKind::Nebula => 1,
                DsoKind::GlobularCluster => 2,
            };
            for (i, &set) in m.as_slice().iter().enumerate() {
                if set {
                    votes[cc.labels.as_slice()[i] as usize - 1][k] += 1;
                }
            }
        }
        let objects = trace_components(&cc.labels, &cc.sizes, 1)
            .into_iter()
            .map(|(label, polygon)| {
                let v = votes[label as usize - 1];
                let kind = [DsoKind::Galaxy, DsoKind::Nebula, DsoKind::GlobularCluster][(0..3)
                    .max_by_key(|&i| (v[i], std::cmp::Reverse(i)))
                    .unwrap()];
                AnnotatedObject {
                    label: kind.label().to_string(),
                    polygon,
                    confidence: None,
                    difficult: None,
                }
            })
            .collect();
        Annotation {
            image: image_id.to_string(),
            width: w,
            height: h,
            objects,
        }
    }
}

/// Uniformly placed field stars kept at least 6 FWHM apart, power-law peaks.
fn place_stars(profile: &InstrumentProfile, count: usize, seed: u64) -> Vec<Star> {
    let mut rng = rng_for(seed, "place", 0);
    let min_sep = 6.0 * profile.psf_fwhm;
    let cell = min_sep;
    let (w, h) = (profile.width as f64, profile.height as f64);
    let gw = (w / cell).ceil() as usize + 1;
    let gh = (h / cell).ceil() as usize + 1;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); gw * gh];
    let mut stars: Vec<Star> = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while stars.len() < count && attempts < count * 50 + 100 {
        attempts += 1;
        let x = rng.random::<f64>() * w;
        let y = rng.random::<f64>() * h;
        let (cx, cy) = ((x / cell) as usize, (y / cell) as usize);
        let mut ok = true;
        'outer: for ny in cy.saturating_sub(1)..=(cy + 1).min(gh - 1) {
            for nx in cx.saturating_sub(1)..=(cx + 1).min(gw - 1) {
                for &j in &buckets[ny * gw + nx] {
                    let s: &Star = &stars[j];
                    if (s.x - x).powi(2) + (s.y - y).powi(2) < min_sep * min_sep {
                        ok = false;
                        break 'outer;
                    }
                }
            }
        }
        if !ok {
            continue;
        }
        let u: f64 = rng.random::<f64>().max(1e-9);
        let peak = (0.02 * u.powf(-1.0 / 1.2)).min(2.0);
        let t: f64 = rng.random();
        // blue-white to orange
        let color = [0.8 + 0.2 * t, 0.9 + 0.05 * t, 1.0 - 0.25 * t];
        buckets[cy * gw + cx].push(stars.len());
        stars.push(Star { x, y, peak, color });
    }
    stars
}

/// Star-only frame of the given profile.
pub fn render_starfield(
    profile: &InstrumentProfile,
    star_count: usize,
    seed: u64,
) -> Result<SkyImage> {
    Ok(SceneModel::new(profile, star_count, &[], seed)?.render())
}

/// Full frame with field stars at the profile's density plus the given objects,
/// and the matching ground-truth annotation.
pub fn render_scene(
    profile: &InstrumentProfile,
    specs: &[DsoSpec],
    seed: u64,
) -> Result<(SkyImage, Annotation)> {
    let stars =
        (profile.star_density * (profile.width * profile.height) as f64 / 1e6).round() as usize;
    let scene = SceneModel::new(profile, stars, specs, seed)?;
    let ann = scene.annotation(&format!("scene-{seed}"));
    Ok((scene.render(), ann))
}

/// One evaluation scene: the rendered frame, its truth, and the objects drawn.
#[derive(Clone, Debug)]
pub struct SuiteScene {
    pub image: SkyImage,
    pub truth: Annotation,
    pub specs: Vec<DsoSpec>,
}

/// `n` frames of `profile`, each with a random object count from `objects`; scene `i`
/// is a pure function of (`seed`, `i`).
pub fn scene_suite(
    profile: &InstrumentProfile,
    n: usize,
    objects: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> Result<Vec<SuiteScene>> {
    profile.validate()?;
    (0..n as u64)
        .map(|i| {
            let sseed = derive_seed(seed, "scene", i);
            let mut rng = rng_for(sseed, "layout", 0);
            let k = rng.random_range(objects.clone());
            let specs = sample_dso_specs(&mut rng, profile.width, profile.height, k);
            let stars = (profile.star_density * (profile.width * profile.height) as f64 / 1e6)
                .round() as usize;
            let scene = SceneModel::new(profile, stars, &specs, sseed)?;
            Ok(SuiteScene {
                image: scene.render(),
                truth: scene.annotation(&format!("scene_{i:03}")),
                specs,
            })
        })
        .collect()
}

/// Draws `count` random, mutually separated objects for a `width`×`height` frame.
pub fn sample_dso_specs<R: Rng>(
    rng: &mut R,
    width: usize,
    height: usize,
    count: usize,
) -> Vec<DsoSpec> {
    let mut out: Vec<(DsoSpec, f64)> = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < 200 * count.max(1) {
        attempts += 1;
        let spec = sample_one(rng, width, height);
        let reach = extent_radius(&spec);
        let clear = out.iter().all(|(o, r)| {
            let d = ((o.center[0] - spec.center[0]).powi(2)
                + (o.center[1] - spec.center[1]).powi(2))
            .sqrt();
            d > 1.3 * (r + reach)
        });
        if clear {
            out.push((spec, reach));
        }
    }
    out.into_iter().map(|(s, _)| s).collect()
}

fn extent_radius(spec: &DsoSpec) -> f64 {
    match spec.shape {
        ShapeParams::Galaxy { .. } => spec.scale,
        ShapeParams::Nebula { ellipticity, .. } => spec.scale / (1.0 - ellipticity).sqrt(),
        ShapeParams::Cluster { .. } => spec.scale * 1.3,
    }
}

fn sample_one<R: Rng>(rng: &mut R, width: usize, height: usize) -> DsoSpec {
    let kind = rng.random_range(0..3);
    let angle = rng.random::<f64>() * PI;
    let mut spec = match kind {
        0 => {
            let mut s = DsoSpec::galaxy(
                [0.0, 0.0],
                rng.random_range(16.0..48.0),
                rng.random_range(0.06..0.45),
            );
            s.shape = ShapeParams::Galaxy {
                sersic_index: rng.random_range(0.5..2.5),
                ellipticity: rng.random_range(0.0..0.5),
                angle,
            };
            let j: f64 = rng.random();
            s.color = [1.0, 0.88 + 0.08 * j, 0.7 + 0.15 * j];
            s
        }
        1 => {
            let scale = rng.random_range(28.0..80.0);
            let mut s = DsoSpec::nebula([0.0, 0.0], scale, rng.random_range(0.05..0.3));
            s.shape = ShapeParams::Nebula {
                smoothing_radius: scale / rng.random_range(2.0..3.5),
                octaves: rng.random_range(3..5),
                ellipticity: rng.random_range(0.0..0.5),
                angle,
            };
            s.color = match rng.random_range(0..3) {
                0 => [1.0, 0.42, 0.52],
                1 => [0.45, 0.9, 1.0],
                _ => [0.6, 0.7, 1.0],
            };
            s
        }
        _ => {
            let mut s = DsoSpec::cluster(
                [0.0, 0.0],
                rng.random_range(14.0..32.0),
                rng.random_range(0.12..0.45),
            );
            s.shape = ShapeParams::Cluster {
                star_count: rng.random_range(150..450),
                concentration: rng.random_range(1.2..2.5),
            };
            s
        }
    };
    let margin = 0.5 * spec.scale;
    spec.center = [
        rng.random_range(margin..(width as f64 - margin).max(margin + 1.0)),
        rng.random_range(margin..(height as f64 - margin).max(margin + 1.0)),
    ];
    spec
}
