use std::f64::consts::{LN_10, PI};

use rand::Rng;

use super::noise::OctaveNoise;
use super::scene::{add_star, Star};
use super::{DsoSpec, InstrumentProfile, ShapeParams, MASK_THRESHOLD};
use crate::error::Result;
use crate::grid::Mask;
use crate::seed::{derive_seed, rng_for};
use crate::sky_image::SkyImage;

/// A deep-sky object ready to be rasterized into any window of its frame.
#[derive(Clone, Debug)]
pub struct DsoModel {
    spec: DsoSpec,
    psf_sigma: f64,
    color: [f64; 3],
    /// Inclusive-exclusive frame pixel bounds of the overlay support.
    bounds: [i64; 4],
    shape: Shape,
}

#[derive(Clone, Debug)]
enum Shape {
    Galaxy {
        inv_n: f64,
        cos: f64,
        sin: f64,
        axis_ratio: f64,
        extent: f64,
    },
    Nebula {
        noise: OctaveNoise,
        cos: f64,
        sin: f64,
        semi_major: f64,
        semi_minor: f64,
        peak: f64,
    },
    Cluster {
        core_radius: f64,
        concentration: f64,
        members: Vec<Star>,
    },
}

const NEBULA_EXTENT: f64 = 1.45;
const CLUSTER_GLOW: f64 = 0.5;

impl DsoModel {
    pub fn new(spec: &DsoSpec, psf_sigma: f64, seed: u64) -> Self {
        let [cx, cy] = spec.center;
        let s = spec.scale;
        let cmax = spec.color.iter().copied().fold(0.0, f64::max);
        let color = if cmax > 0.0 {
            [
                spec.color[0] / cmax,
                spec.color[1] / cmax,
                spec.color[2] / cmax,
            ]
        } else {
            [1.0; 3]
        };
        let (shape, radius) = match spec.shape {
            ShapeParams::Galaxy {
                sersic_index,
                ellipticity,
                angle,
            } => {
                let extent = s * 3f64.powf(sersic_index).min(4.0);
                (
                    Shape::Galaxy {
                        inv_n: 1.0 / sersic_index,
                        cos: angle.cos(),
                        sin: angle.sin(),
                        axis_ratio: 1.0 - ellipticity,
                        extent,
                    },
                    extent,
                )
            }
            ShapeParams::Nebula {
                smoothing_radius,
                octaves,
                ellipticity,
                angle,
            } => {
                let q = (1.0 - ellipticity).sqrt();
                let semi_major = s / q;
                let semi_minor = s * q;
                let noise = OctaveNoise::new(
                    derive_seed(seed, "nebula", 0),
                    smoothing_radius * 2.0,
                    octaves,
                );
                let mut shape = Shape::Nebula {
                    noise,
                    cos: angle.cos(),
                    sin: angle.sin(),
                    semi_major,
                    semi_minor,
                    peak: 1.0,
                };
                let radius = semi_major * NEBULA_EXTENT;
                // peak of the unnormalized field over the pixel centers of the support
                let mut peak = 0.0f64;
                let (x0, y0, x1, y1) = support(cx, cy, radius);
                for py in y0..y1 {
                    for px in x0..x1 {
                        peak = peak.max(nebula_raw(&shape, spec, px as f64 + 0.5, py as f64 + 0.5));
                    }
                }
                if let Shape::Nebula { peak: p, .. } = &mut shape {
                    *p = peak.max(f64::MIN_POSITIVE);
                }
                (shape, radius)
            }
            ShapeParams::Cluster {
                star_count,
                concentration,
            } => {
                let core_radius = s / (10f64.powf(1.0 / concentration) - 1.0).sqrt();
                let profile = |r: f64| (1.0 + (r / core_radius).powi(2)).powf(-concentration);
                let mut rng = rng_for(seed, "cluster", 0);
                let mut members = Vec::with_capacity(star_count as usize);
                let rmax = 2.0 * s;
                while members.len() < star_count as usize {
                    let r = rmax * rng.random::<f64>().sqrt();
                    if rng.random::<f64>() > profile(r) {
                        continue;
                    }
                    let phi = rng.random::<f64>() * 2.0 * PI;
                    let u: f64 = rng.random();
                    members.push(Star {
                        x: cx + r * phi.cos(),
                        y: cy + r * phi.sin(),
                        peak: spec.brightness * (0.2 + 0.8 * u * u),
                        color: [1.0, 0.93 + 0.05 * u, 0.82 + 0.1 * u],
                    });
                }
                (
                    Shape::Cluster {
                        core_radius,
                        concentration,
                        members,
                    },
                    rmax + 4.0 * psf_sigma,
                )
            }
        };
        let (x0, y0, x1, y1) = support(cx, cy, radius);
        DsoModel {
            spec: spec.clone(),
            psf_sigma,
            color,
            bounds: [x0, y0, x1, y1],
            shape,
        }
    }

    pub fn spec(&self) -> &DsoSpec {
        &self.spec
    }

    /// Frame pixel bounds `[x0, y0, x1, y1)` of everything the object renders.
    pub fn bounds(&self) -> [i64; 4] {
        self.bounds
    }

    /// Smooth (unresolved) intensity at a continuous position.
    fn smooth(&self, x: f64, y: f64) -> f64 {
        let b = self.spec.brightness;
        let [cx, cy] = self.spec.center;
        match &self.shape {
            Shape::Galaxy {
                inv_n,
                cos,
                sin,
                axis_ratio,
                extent,
            } => {
                let (dx, dy) = (x - cx, y - cy);
                let u = dx * cos + dy * sin;
                let v = (-dx * sin + dy * cos) / axis_ratio;
                let r = (u * u + v * v).sqrt();
                b * (-LN_10 * (r / self.spec.scale).powf(*inv_n)).exp() * taper(r / extent)
            }
            Shape::Nebula { peak, .. } => b * nebula_raw(&self.shape, &self.spec, x, y) / peak,
            Shape::Cluster { .. } => CLUSTER_GLOW * b * self.envelope(x, y),
        }
    }

    /// Cluster density envelope normalized to 1 at the center.
    fn envelope(&self, x: f64, y: f64) -> f64 {
        match &self.shape {
            Shape::Cluster {
                core_radius,
                concentration,
                ..
            } => {
                let [cx, cy] = self.spec.center;
                let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                if r > 2.0 * self.spec.scale {
                    0.0
                } else {
                    (1.0 + (r / core_radius).powi(2)).powf(-concentration)
                }
            }
            _ => 0.0,
        }
    }

    /// Truth-mask membership of frame pixel (`px`, `py`).
    pub fn in_mask(&self, px: i64, py: i64) -> bool {
        if self.spec.brightness <= 0.0 {
            return false;
        }
        let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
        match self.shape {
            // clusters are traced from their density envelope; resolved members are point-like
            Shape::Cluster { .. } => self.envelope(x, y) >= MASK_THRESHOLD,
            _ => self.smooth(x, y) >= MASK_THRESHOLD * self.spec.brightness,
        }
    }

    /// Adds the overlay into `img`, the frame window whose origin is (`x0`, `y0`).
    pub fn render_into(&self, img: &mut SkyImage, x0: usize, y0: usize) {
        if self.spec.brightness <= 0.0 {
            return;
        }
        let Some((lx0, ly0, lx1, ly1)) = self.window_overlap(img.width(), img.height(), x0, y0)
        else {
            return;
        };
        for py in ly0..ly1 {
            for px in lx0..lx1 {
                let v = self.smooth((px + x0) as f64 + 0.5, (py + y0) as f64 + 0.5);
                if v != 0.0 {
                    let c = self.color;
                    img.add_pixel(
                        px,
                        py,
                        [(v * c[0]) as f32, (v * c[1]) as f32, (v * c[2]) as f32],
                    );
                }
            }
        }
        if let Shape::Cluster { members, .. } = &self.shape {
            for star in members {
                add_star(img, x0, y0, star, self.psf_sigma);
            }
        }
    }

    /// Sets mask pixels of the window at (`x0`, `y0`) covered by the object.
    pub fn mask_into(&self, mask: &mut Mask, x0: usize, y0: usize) {
        let Some((lx0, ly0, lx1, ly1)) = self.window_overlap(mask.width(), mask.height(), x0, y0)
        else {
            return;
        };
        for py in ly0..ly1 {
            for px in lx0..lx1 {
                if self.in_mask((px + x0) as i64, (py + y0) as i64) {
                    mask.set(px, py, true);
                }
            }
        }
    }

    fn window_overlap(
        &self,
        w: usize,
        h: usize,
        x0: usize,
        y0: usize,
    ) -> Option<(usize, usize, usize, usize)> {
        let [bx0, by0, bx1, by1] = self.bounds;
        let lx0 = (bx0 - x0 as i64).max(0);
        let ly0 = (by0 - y0 as i64).max(0);
        let lx1 = (bx1 - x0 as i64).min(w as i64);
        let ly1 = (by1 - y0 as i64).min(h as i64);
        if lx0 >= lx1 || ly0 >= ly1 {
            None
        } else {
            Some((lx0 as usize, ly0 as usize, lx1 as usize, ly1 as usize))
        }
    }
}

fn support(cx: f64, cy: f64, radius: f64) -> (i64, i64, i64, i64) {
    (
        (cx - radius).floor() as i64,
        (cy - radius).floor() as i64,
        (cx + radius).ceil() as i64 + 1,
        (cy + radius).ceil() as i64 + 1,
    )
}

/// 1 inside 70% of the extent, smooth roll-off to 0 at the extent.
fn taper(t: f64) -> f64 {
    if t <= 0.7 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let u = (1.0 - t) / 0.3;
        u * u * (3.0 - 2.0 * u)
    }
}

fn nebula_raw(shape: &Shape, spec: &DsoSpec, x: f64, y: f64) -> f64 {
    let Shape::Nebula {
        noise,
        cos,
        sin,
        semi_major,
        semi_minor,
        ..
    } = shape
    else {
        return 0.0;
    };
    let [cx, cy] = spec.center;
    let (dx, dy) = (x - cx, y - cy);
    let u = (dx * cos + dy * sin) / semi_major;
    let v = (-dx * sin + dy * cos) / semi_minor;
    let r2 = u * u + v * v;
    if r2 > NEBULA_EXTENT * NEBULA_EXTENT {
        return 0.0;
    }
    let envelope = (-LN_10 * r2 * r2).exp();
    envelope * (0.45 + 0.55 * noise.sample(x, y))
}

/// Full-frame additive overlay of one object and its binary truth mask.
pub fn render_dso(
    spec: &DsoSpec,
    profile: &InstrumentProfile,
    seed: u64,
) -> Result<(SkyImage, Mask)> {
    profile.validate()?;
    spec.validate(profile.width, profile.height)?;
    let model = DsoModel::new(spec, profile.psf_sigma(), seed);
    let mut img = SkyImage::new(profile.width, profile.height);
    img.provenance.seed = Some(seed);
    img.provenance.instrument = Some(profile.name.clone());
    model.render_into(&mut img, 0, 0);
    let mut mask = Mask::filled(profile.width, profile.height, false);
    model.mask_into(&mut mask, 0, 0);
    Ok((img, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::ShapeParams;

    fn profile() -> InstrumentProfile {
        InstrumentProfile::with_size(400, 300)
    }

    #[test]
    fn zero_brightness_is_null_source() {
        let spec = DsoSpec::galaxy([200.0, 150.0], 30.0, 0.0);
        let (img, mask) = render_dso(&spec, &profile(), 1).unwrap();
        assert!(img.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn center_outside_frame_is_domain_error() {
        let spec = DsoSpec::nebula([400.0, 10.0], 30.0, 0.2);
        assert!(matches!(
            render_dso(&spec, &profile(), 1),
            Err(crate::Error::Domain(_))
        ));
    }

    #[test]
    fn round_galaxy_mask_is_a_disc() {
        let (cx, cy, s) = (200.3, 149.6, 27.0);
        let mut spec = DsoSpec::galaxy([cx, cy], s, 0.4);
        spec.shape = ShapeParams::Galaxy {
            sersic_index: 2.0,
            ellipticity: 0.0,
            angle: 0.7,
        };
        let (_, mask) = render_dso(&spec, &profile(), 1).unwrap();
        for y in 0..300 {
            for x in 0..400 {
                let r = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                if r < s - 1.0 {
                    assert!(*mask.get(x, y), "inside pixel {x},{y} missing");
                }
                if r > s + 1.0 {
                    assert!(!*mask.get(x, y), "outside pixel {x},{y} set");
                }
            }
        }
    }

    #[test]
    fn nebula_mask_area_tracks_scale() {
        for seed in 0..5 {
            let s = 40.0;
            let spec = DsoSpec::nebula([200.0, 150.0], s, 0.3);
            let (img, mask) = render_dso(&spec, &profile(), seed).unwrap();
            // pixel-count oracle straight from the overlay
            let peak = (0..300)
                .flat_map(|y| (0..400).map(move |x| (x, y)))
                .map(|(x, y)| img.pixel(x, y)[0] as f64)
                .fold(0.0, f64::max);
            let counted = (0..300)
                .flat_map(|y| (0..400).map(move |x| (x, y)))
                .filter(|&(x, y)| img.pixel(x, y)[0] as f64 >= MASK_THRESHOLD * peak * (1.0 - 1e-6))
                .count();
            let disc = PI * s * s;
            assert!(
                (counted as f64 - disc).abs() <= 0.2 * disc,
                "seed {seed}: {counted} vs {disc}"
            );
            assert!((mask.count() as f64 - counted as f64).abs() <= 0.01 * disc);
        }
    }

    #[test]
    fn cluster_is_bright_inside_its_mask() {
        let spec = DsoSpec::cluster([200.0, 150.0], 20.0, 0.4);
        let (img, mask) = render_dso(&spec, &profile(), 4).unwrap();
        let area = mask.count() as f64;
        assert!((area - PI * 400.0).abs() < 0.05 * PI * 400.0);
        let lum = img.luminance();
        let inside: f64 = (0..300 * 400)
            .filter(|&i| mask.as_slice()[i])
            .map(|i| lum.as_slice()[i])
            .sum();
        let total: f64 = lum.as_slice().iter().sum();
        assert!(inside > 0.5 * total);
    }
}
