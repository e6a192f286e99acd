//! Run configuration: defaults, overlaid by an optional JSON file, overlaid by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dsolocate::evaluation::EvalConfig;
use dsolocate::model::TrainingConfig;
use dsolocate::pipeline::{BaselineConfig, DetectConfig};
use dsolocate::seed::derive_seed;
use dsolocate::synthgen::InstrumentProfile;
use dsolocate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Classifier patches, split 80/10/10.
    pub n: usize,
    /// Instrument preset, or a full profile object.
    pub profile: ProfileChoice,
    /// Full evaluation scenes written next to the patches.
    pub scenes: usize,
    pub scene_width: usize,
    pub scene_height: usize,
    pub objects_min: usize,
    pub objects_max: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            n: 5000,
            profile: ProfileChoice::Preset("vespera".into()),
            scenes: 10,
            scene_width: 1120,
            scene_height: 1120,
            objects_min: 1,
            objects_max: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileChoice {
    Preset(String),
    Custom(InstrumentProfile),
}

impl ProfileChoice {
    pub fn resolve(&self) -> Result<InstrumentProfile> {
        match self {
            ProfileChoice::Preset(name) => InstrumentProfile::preset(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown instrument profile {name:?} (stellina, vespera)"
                ))
            }),
            ProfileChoice::Custom(p) => {
                p.validate()?;
                Ok(p.clone())
            }
        }
    }
}

/// Files a command reads. Unused entries are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub images: Vec<PathBuf>,
    /// Pre-computed starless frame for the baseline.
    pub starless: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub truths: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every stage draws its own stream from it.
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub paths: Paths,
    /// detect: run the thresholding baseline instead of the classifier.
    pub baseline_mode: bool,
    pub generate: GenerateConfig,
    pub train: TrainingConfig,
    pub detect: DetectConfig,
    pub baseline: BaselineConfig,
    pub evaluate: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: 1,
            out: PathBuf::from("out"),
            paths: Paths::default(),
            baseline_mode: false,
            generate: GenerateConfig::default(),
            train: TrainingConfig::default(),
            detect: DetectConfig::default(),
            baseline: BaselineConfig::default(),
            evaluate: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults overlaid by the JSON file at `path`.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn dataset_seed(&self) -> u64 {
        derive_seed(self.seed, "dataset", 0)
    }

    pub fn scene_seed(&self) -> u64 {
        derive_seed(self.seed, "scenes", 0)
    }

    /// The training config with its seed drawn from the root seed.
    pub fn effective_training(&self) -> TrainingConfig {
        TrainingConfig {
            seed: derive_seed(self.seed, "train", 0),
            ..self.train.clone()
        }
    }

    pub fn effective_detect(&self) -> DetectConfig {
        DetectConfig {
            jobs: self.jobs,
            ..self.detect.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        let g = &self.generate;
        if g.objects_min > g.objects_max {
            return Err(Error::Config(
                "generate.objects_min exceeds objects_max".into(),
            ));
        }
        if g.scenes > 0 && (g.scene_width < 224 || g.scene_height < 224) {
            return Err(Error::Config("scenes must be at least 224x224".into()));
        }
        g.profile.resolve()?;
        self.train.validate()?;
        self.effective_detect().validate()?;
        if !(self.evaluate.iou_threshold > 0.0 && self.evaluate.iou_threshold <= 1.0) {
            return Err(Error::Config(
                "evaluate.iou_threshold must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Fails with an I/O error naming `what` when `path` is absent or missing on disk.
pub fn require_file<'a>(path: Option<&'a PathBuf>, what: &str) -> Result<&'a Path> {
    let path = path.ok_or_else(|| Error::Config(format!("missing required path: {what}")))?;
    if !path.is_file() {
        return Err(Error::Io {
            path: path.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found")),
        });
    }
    Ok(path)
}
