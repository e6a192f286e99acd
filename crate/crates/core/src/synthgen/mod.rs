//! Procedural sky images with ground truth: stars, sky background, read noise and
//! deep-sky objects (galaxies, nebulae, globular clusters), plus the balanced
//! patch dataset used to train the classifier.
//!
//! Scenes are described analytically ([`SceneModel`]) and rasterized on demand into
//! any window, so a 224×224 crop of a 2-megapixel frame costs only the crop.

mod dataset;
mod dso;
mod noise;
mod scene;

pub use dataset::{
    build_dataset, build_dataset_with, DatasetOptions, DatasetSplit, Label, LabeledPatch,
    PatchOrigin, PatchPixels, Split, MIN_VISIBLE_FRACTION, PATCH_SIZE,
};
pub use dso::{render_dso, DsoModel};
pub use scene::{
    render_scene, render_starfield, sample_dso_specs, scene_suite, SceneModel, Star, SuiteScene,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Overlay pixels at or above this fraction of the object's peak belong to its truth mask.
pub const MASK_THRESHOLD: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstrumentProfile {
    pub name: String,
    pub width: usize,
    pub height: usize,
    /// Gaussian PSF full width at half maximum, pixels.
    pub psf_fwhm: f64,
    pub read_noise_sigma: f64,
    /// Sky gradient amplitude across the frame diagonal.
    pub sky_gradient_max: f64,
    /// Uniform sky pedestal (light pollution) before tinting.
    pub sky_level: f64,
    /// Field stars per megapixel used when a scene does not specify a star count.
    pub star_density: f64,
}

impl InstrumentProfile {
    /// 80 mm f/5 refractor with an IMX178 sensor.
    pub fn stellina() -> Self {
        InstrumentProfile {
            name: "stellina".into(),
            width: 3096,
            height: 2080,
            psf_fwhm: 2.2,
            read_noise_sigma: 0.010,
            sky_gradient_max: 0.04,
            sky_level: 0.06,
            star_density: 220.0,
        }
    }

    /// 50 mm f/4 quadruplet with an IMX462 sensor.
    pub fn vespera() -> Self {
        InstrumentProfile {
            name: "vespera".into(),
            width: 1920,
            height: 1080,
            psf_fwhm: 2.5,
            read_noise_sigma: 0.010,
            sky_gradient_max: 0.04,
            sky_level: 0.06,
            star_density: 250.0,
        }
    }

    /// The Vespera optics with a custom frame size.
    pub fn with_size(width: usize, height: usize) -> Self {
        InstrumentProfile {
            name: format!("vespera-{width}x{height}"),
            width,
            height,
            ..Self::vespera()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "stellina" => Some(Self::stellina()),
            "vespera" => Some(Self::vespera()),
            _ => None,
        }
    }

    pub fn without_noise(mut self) -> Self {
        self.read_noise_sigma = 0.0;
        self
    }

    pub fn without_gradient(mut self) -> Self {
        self.sky_gradient_max = 0.0;
        self
    }

    pub fn psf_sigma(&self) -> f64 {
        self.psf_fwhm / (8.0 * std::f64::consts::LN_2).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 224 || self.height < 224 {
            return Err(Error::config(format!(
                "profile {} is {}x{}; full frames must be at least 224x224",
                self.name, self.width, self.height
            )));
        }
        if !(self.psf_fwhm > 0.0) {
            return Err(Error::config("psf_fwhm must be positive"));
        }
        for (name, v) in [
            ("read_noise_sigma", self.read_noise_sigma),
            ("sky_gradient_max", self.sky_gradient_max),
            ("sky_level", self.sky_level),
            ("star_density", self.star_density),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

impl Default for InstrumentProfile {
    fn default() -> Self {
        Self::vespera()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DsoKind {
    Galaxy,
    Nebula,
    GlobularCluster,
}

impl DsoKind {
    pub fn label(&self) -> &'static str {
        match self {
            DsoKind::Galaxy => "galaxy",
            DsoKind::Nebula => "nebula",
            DsoKind::GlobularCluster => "cluster",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeParams {
    /// Sérsic profile; `scale` is the semi-major axis of the 10% isophote.
    Galaxy {
        sersic_index: f64,
        ellipticity: f64,
        angle: f64,
    },
    /// Smoothed multi-octave noise under a soft elliptical envelope; `scale` is the
    /// geometric-mean radius of the envelope.
    Nebula {
        smoothing_radius: f64,
        octaves: u32,
        ellipticity: f64,
        angle: f64,
    },
    /// Resolved member stars plus unresolved glow following a
    /// `(1 + (r/rc)^2)^-concentration` profile; `scale` is the radius of its 10% isophote.
    Cluster { star_count: u32, concentration: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsoSpec {
    pub center: [f64; 2],
    pub scale: f64,
    pub brightness: f64,
    /// Linear RGB tint; the brightest channel carries `brightness`.
    pub color: [f64; 3],
    pub shape: ShapeParams,
}

impl DsoSpec {
    pub fn kind(&self) -> DsoKind {
        match self.shape {
            ShapeParams::Galaxy { .. } => DsoKind::Galaxy,
            ShapeParams::Nebula { .. } => DsoKind::Nebula,
            ShapeParams::Cluster { .. } => DsoKind::GlobularCluster,
        }
    }

    pub fn galaxy(center: [f64; 2], scale: f64, brightness: f64) -> Self {
        DsoSpec {
            center,
            scale,
            brightness,
            color: [1.0, 0.92, 0.78],
            shape: ShapeParams::Galaxy {
                sersic_index: 1.0,
                ellipticity: 0.0,
                angle: 0.0,
            },
        }
    }

    pub fn nebula(center: [f64; 2], scale: f64, brightness: f64) -> Self {
        DsoSpec {
            center,
            scale,
            brightness,
            color: [1.0, 0.45, 0.55],
            shape: ShapeParams::Nebula {
                smoothing_radius: (scale / 2.5).max(6.0),
                octaves: 3,
                ellipticity: 0.0,
                angle: 0.0,
            },
        }
    }

    pub fn cluster(center: [f64; 2], scale: f64, brightness: f64) -> Self {
        DsoSpec {
            center,
            scale,
            brightness,
            color: [1.0, 0.95, 0.85],
            shape: ShapeParams::Cluster {
                star_count: 300,
                concentration: 1.5,
            },
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let [cx, cy] = self.center;
        if !(cx >= 0.0 && cy >= 0.0 && cx < width as f64 && cy < height as f64) {
            return Err(Error::domain(format!(
                "object center ({cx}, {cy}) outside the {width}x{height} frame"
            )));
        }
        if !(self.scale > 0.0) {
            return Err(Error::domain("object scale must be positive"));
        }
        if !(0.0..=1.0).contains(&self.brightness) {
            return Err(Error::domain("object brightness must be in [0, 1]"));
        }
        match self.shape {
            ShapeParams::Galaxy {
                sersic_index,
                ellipticity,
                ..
            } => {
                if !(sersic_index > 0.0) || !(0.0..1.0).contains(&ellipticity) {
                    return Err(Error::domain(
                        "galaxy needs sersic_index > 0 and ellipticity in [0, 1)",
                    ));
                }
            }
            ShapeParams::Nebula {
                smoothing_radius,
                octaves,
                ellipticity,
                ..
            } => {
                if !(smoothing_radius > 0.0) || octaves == 0 || !(0.0..1.0).contains(&ellipticity) {
                    return Err(Error::domain(
                        "nebula needs smoothing_radius > 0, octaves >= 1, ellipticity in [0, 1)",
                    ));
                }
            }
            ShapeParams::Cluster { concentration, .. } => {
                if !(concentration > 0.0) {
                    return Err(Error::domain("cluster concentration must be positive"));
                }
            }
        }
        Ok(())
    }
}
