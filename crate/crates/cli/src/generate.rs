use std::path::Path;

use serde::{Deserialize, Serialize};

use dsolocate::synthgen::{build_dataset, scene_suite, InstrumentProfile, Label, Split};
use dsolocate::{Error, Result};

use crate::config::{GenerateConfig, RunConfig};
use crate::{create_dir, relative, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub present: usize,
    pub absent: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestPatch {
    /// Relative to the manifest's directory.
    pub path: String,
    pub label: Label,
    pub split: Split,
    pub frame: u64,
    pub x: usize,
    pub y: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestScene {
    pub image: String,
    pub annotation: String,
    pub objects: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub dataset_seed: u64,
    pub scene_seed: u64,
    pub profile: InstrumentProfile,
    pub config: GenerateConfig,
    pub counts: SplitCounts,
    pub patches: Vec<ManifestPatch>,
    pub scenes: Vec<ManifestScene>,
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes `patches/{split}/NNNNN.png`, `scenes/`, and `manifest.json` under `config.out`.
pub fn cmd_generate(config: &RunConfig) -> Result<Manifest> {
    config.validate()?;
    let g = &config.generate;
    let profile = g.profile.resolve()?;
    let out = &config.out;
    let split = build_dataset(g.n, &profile, config.dataset_seed())?;

    let mut patches = Vec::with_capacity(split.len());
    for which in [Split::Train, Split::Val, Split::Test] {
        let dir = out.join("patches").join(split_name(which));
        create_dir(&dir)?;
        for (i, p) in split.split(which).iter().enumerate() {
            let path = dir.join(format!("{i:05}.png"));
            p.pixels.save_png(&path)?;
            patches.push(ManifestPatch {
                path: relative(&path, out),
                label: p.label,
                split: which,
                frame: p.origin.frame,
                x: p.origin.x,
                y: p.origin.y,
            });
        }
    }

    let scene_profile = InstrumentProfile {
        name: format!("{}-{}x{}", profile.name, g.scene_width, g.scene_height),
        width: g.scene_width,
        height: g.scene_height,
        ..profile.clone()
    };
    let mut scenes = Vec::new();
    if g.scenes > 0 {
        let dir = out.join("scenes");
        create_dir(&dir)?;
        for s in scene_suite(
            &scene_profile,
            g.scenes,
            g.objects_min..=g.objects_max,
            config.scene_seed(),
        )? {
            let img = dir.join(format!("{}.png", s.truth.image));
            let ann = dir.join(format!("{}.json", s.truth.image));
            s.image.save_png16(&img)?;
            s.truth.save(&ann)?;
            scenes.push(ManifestScene {
                image: relative(&img, out),
                annotation: relative(&ann, out),
                objects: s.truth.objects.len(),
            });
        }
    }

    let present = patches.iter().filter(|p| p.label.is_present()).count();
    let manifest = Manifest {
        seed: config.seed,
        dataset_seed: config.dataset_seed(),
        scene_seed: config.scene_seed(),
        profile,
        config: g.clone(),
        counts: SplitCounts {
            train: split.train.len(),
            val: split.val.len(),
            test: split.test.len(),
            present,
            absent: patches.len() - present,
        },
        patches,
        scenes,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub(crate) fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}
