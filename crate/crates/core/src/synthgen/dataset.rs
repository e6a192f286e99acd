use std::collections::BTreeSet;
use std::path::Path;

use image::{ImageBuffer, Rgb};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scene::{sample_dso_specs, SceneModel};
use super::InstrumentProfile;
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::seed::{derive_seed, rng_for};
use crate::sky_image::{quantize_u16, SkyImage};

pub const PATCH_SIZE: usize = 224;

/// A patch is labeled present when the truth mask covers at least this fraction of it.
pub const MIN_VISIBLE_FRACTION: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    DsoPresent,
    DsoAbsent,
}

impl Label {
    pub fn from_mask(mask: Option<&Mask>) -> Label {
        let covered = mask.map_or(0, |m| m.count());
        if covered as f64 >= MIN_VISIBLE_FRACTION * (PATCH_SIZE * PATCH_SIZE) as f64 {
            Label::DsoPresent
        } else {
            Label::DsoAbsent
        }
    }

    pub fn is_present(self) -> bool {
        self == Label::DsoPresent
    }
}

/// 16-bit quantized 224×224 RGB patch, interleaved. Matches the on-disk PNG exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchPixels(Vec<u16>);

impl PatchPixels {
    pub fn from_image(img: &SkyImage) -> Result<Self> {
        if img.width() != PATCH_SIZE || img.height() != PATCH_SIZE {
            return Err(Error::domain(format!(
                "patch must be {PATCH_SIZE}x{PATCH_SIZE}, got {}x{}",
                img.width(),
                img.height()
            )));
        }
        Ok(PatchPixels(
            img.as_slice()
                .iter()
                .map(|&v| quantize_u16(v as f64))
                .collect(),
        ))
    }

    pub fn from_raw(data: Vec<u16>) -> Result<Self> {
        if data.len() != PATCH_SIZE * PATCH_SIZE * 3 {
            return Err(Error::domain("patch buffer must hold 224x224x3 samples"));
        }
        Ok(PatchPixels(data))
    }

    pub fn raw(&self) -> &[u16] {
        &self.0
    }

    pub fn to_image(&self) -> SkyImage {
        SkyImage::from_raw(
            PATCH_SIZE,
            PATCH_SIZE,
            self.0.iter().map(|&v| v as f32 / 65535.0).collect(),
        )
        .expect("patch size is fixed")
    }

    /// Writes the patch as a 16-bit RGB PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
            ImageBuffer::from_raw(PATCH_SIZE as u32, PATCH_SIZE as u32, self.0.clone())
                .expect("patch size is fixed");
        buf.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads a 224×224 PNG; 16-bit files round-trip exactly.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        if (img.width() as usize, img.height() as usize) != (PATCH_SIZE, PATCH_SIZE) {
            return Err(Error::format(
                path,
                format!(
                    "patch must be {PATCH_SIZE}x{PATCH_SIZE}, got {}x{}",
                    img.width(),
                    img.height()
                ),
            ));
        }
        Ok(PatchPixels(img.into_rgb16().into_raw()))
    }

    /// Planar CHW intensities, the classifier's input layout.
    pub fn write_chw(&self, out: &mut [f64]) {
        let plane = PATCH_SIZE * PATCH_SIZE;
        assert_eq!(out.len(), 3 * plane);
        for (i, px) in self.0.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + i] = px[c] as f64 / 65535.0;
            }
        }
    }
}

/// Where a patch was cut from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchOrigin {
    pub frame: u64,
    pub x: usize,
    pub y: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPatch {
    pub pixels: PatchPixels,
    pub label: Label,
    /// Object coverage of the patch; `None` when no object pixel falls inside.
    pub truth_mask: Option<Mask>,
    pub origin: PatchOrigin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<LabeledPatch>,
    pub val: Vec<LabeledPatch>,
    pub test: Vec<LabeledPatch>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn split(&self, which: Split) -> &[LabeledPatch] {
        match which {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Split, &LabeledPatch)> {
        self.train
            .iter()
            .map(|p| (Split::Train, p))
            .chain(self.val.iter().map(|p| (Split::Val, p)))
            .chain(self.test.iter().map(|p| (Split::Test, p)))
    }
}

/// Knobs for the frames patches are cut from.
#[derive(Clone, Debug)]
pub struct DatasetOptions {
    /// Objects per frame for frames that contain any.
    pub objects_per_frame: std::ops::RangeInclusive<usize>,
    /// Crops taken around each object.
    pub crops_per_object: usize,
    /// Crops taken from each star-only frame.
    pub crops_per_empty_frame: usize,
    /// Share of the absent class cut from object frames away from the objects.
    pub near_miss_fraction: f64,
    /// Star density range (per megapixel) across frames.
    pub star_density: std::ops::Range<f64>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            objects_per_frame: 1..=3,
            crops_per_object: 3,
            crops_per_empty_frame: 12,
            near_miss_fraction: 0.3,
            star_density: 80.0..700.0,
        }
    }
}

/// Balanced, 80/10/10-split patch dataset cut from synthetic frames of `profile`.
pub fn build_dataset(
    n_patches: usize,
    profile: &InstrumentProfile,
    seed: u64,
) -> Result<DatasetSplit> {
    build_dataset_with(n_patches, profile, seed, &DatasetOptions::default())
}

pub fn build_dataset_with(
    n_patches: usize,
    profile: &InstrumentProfile,
    seed: u64,
    opts: &DatasetOptions,
) -> Result<DatasetSplit> {
    if n_patches < 10 {
        return Err(Error::config(format!(
            "need at least 10 patches to balance and split, got {n_patches}"
        )));
    }
    profile.validate()?;
    let n_present = n_patches / 2;
    let n_absent = n_patches - n_present;
    let n_near = ((n_absent as f64) * opts.near_miss_fraction).round() as usize;

    let mut present = Vec::with_capacity(n_present);
    let mut absent = Vec::with_capacity(n_absent);
    let (w, h) = (profile.width, profile.height);
    let mut frame = 0u64;

    // object frames: crops around objects, plus near-miss crops that end up absent
    let mut near = 0usize;
    let mut seen = BTreeSet::new();
    while present.len() < n_present || near < n_near {
        if frame > 20 * n_patches as u64 + 100 {
            return Err(Error::config(
                "could not cut enough patches from the generated frames",
            ));
        }
        let fseed = derive_seed(seed, "frame", frame);
        let mut rng = rng_for(fseed, "layout", 0);
        let k = rng.random_range(opts.objects_per_frame.clone());
        let specs = sample_dso_specs(&mut rng, w, h, k);
        let stars = star_count(&mut rng, profile, opts);
        let scene = SceneModel::new(profile, stars, &specs, fseed)?;
        for spec in &specs {
            for _ in 0..opts.crops_per_object {
                if present.len() >= n_present {
                    break;
                }
                let ox = rng.random_range(16.0..(PATCH_SIZE as f64 - 16.0));
                let oy = rng.random_range(16.0..(PATCH_SIZE as f64 - 16.0));
                let x = clamp_origin(spec.center[0] - ox, w);
                let y = clamp_origin(spec.center[1] - oy, h);
                if !seen.insert((frame, x, y)) {
                    continue;
                }
                let patch = cut(&scene, frame, x, y)?;
                if patch.label.is_present() {
                    present.push(patch);
                }
            }
        }
        for _ in 0..2 {
            if near >= n_near {
                break;
            }
            let x = rng.random_range(0..=w - PATCH_SIZE);
            let y = rng.random_range(0..=h - PATCH_SIZE);
            if !seen.insert((frame, x, y)) {
                continue;
            }
            let patch = cut(&scene, frame, x, y)?;
            if !patch.label.is_present() {
                absent.push(patch);
                near += 1;
            }
        }
        frame += 1;
    }

    // star-only frames
    while absent.len() < n_absent {
        let fseed = derive_seed(seed, "frame", frame);
        let mut rng = rng_for(fseed, "layout", 0);
        let stars = star_count(&mut rng, profile, opts);
        let scene = SceneModel::new(profile, stars, &[], fseed)?;
        for _ in 0..opts.crops_per_empty_frame {
            if absent.len() >= n_absent {
                break;
            }
            let x = rng.random_range(0..=w - PATCH_SIZE);
            let y = rng.random_range(0..=h - PATCH_SIZE);
            absent.push(cut(&scene, frame, x, y)?);
        }
        frame += 1;
    }

    let mut rng = rng_for(seed, "split", 0);
    present.shuffle(&mut rng);
    absent.shuffle(&mut rng);

    let n_val = (n_patches as f64 * 0.1).round() as usize;
    let n_test = n_val;
    let sizes = [n_patches - n_val - n_test, n_val, n_test];
    // val and test take the smaller half of odd sizes alternately; train takes the rest
    let val_p = sizes[1] / 2;
    let test_p = sizes[2] - sizes[2] / 2;
    let mut take_p = [n_present - val_p - test_p, val_p, test_p];
    let mut take_a = [sizes[0] - take_p[0], sizes[1] - val_p, sizes[2] - test_p];
    if take_a[0] > n_absent - take_a[1] - take_a[2] {
        // n_present/n_absent rounding can leave train one short on a side
        take_a[0] = n_absent - take_a[1] - take_a[2];
        take_p[0] = sizes[0] - take_a[0];
    }
    let mut p_iter = present.into_iter();
    let mut a_iter = absent.into_iter();
    let mut parts: Vec<Vec<LabeledPatch>> = Vec::new();
    for s in 0..3 {
        let mut part: Vec<LabeledPatch> = p_iter.by_ref().take(take_p[s]).collect();
        part.extend(a_iter.by_ref().take(take_a[s]));
        part.shuffle(&mut rng);
        parts.push(part);
    }
    let test = parts.pop().unwrap();
    let val = parts.pop().unwrap();
    let train = parts.pop().unwrap();
    Ok(DatasetSplit {
        train,
        val,
        test,
        seed,
    })
}

fn star_count<R: Rng>(rng: &mut R, profile: &InstrumentProfile, opts: &DatasetOptions) -> usize {
    let density = rng.random_range(opts.star_density.clone());
    (density * (profile.width * profile.height) as f64 / 1e6).round() as usize
}

fn clamp_origin(v: f64, extent: usize) -> usize {
    v.round().clamp(0.0, (extent - PATCH_SIZE) as f64) as usize
}

fn cut(scene: &SceneModel, frame: u64, x: usize, y: usize) -> Result<LabeledPatch> {
    let img = scene.render_window(x, y, PATCH_SIZE, PATCH_SIZE);
    let mask = scene.truth_mask_window(x, y, PATCH_SIZE, PATCH_SIZE);
    let truth_mask = if mask.count() > 0 { Some(mask) } else { None };
    Ok(LabeledPatch {
        pixels: PatchPixels::from_image(&img)?,
        label: Label::from_mask(truth_mask.as_ref()),
        truth_mask,
        origin: PatchOrigin { frame, x, y },
    })
}
