use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use dsolocate::model::{
    digest, evaluate_classifier, save_checkpoint, train_with_progress, ClassifierReport,
    ModelParams, TrainingHistory,
};
use dsolocate::synthgen::{DatasetSplit, LabeledPatch, PatchOrigin, PatchPixels, Split};
use dsolocate::{Error, Result};

use crate::config::{require_file, RunConfig};
use crate::generate::load_manifest;
use crate::{create_dir, write_json};

pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Clone, Debug, Serialize)]
pub struct TrainOutput {
    pub seed: u64,
    pub training_seed: u64,
    pub manifest: String,
    pub config: dsolocate::model::TrainingConfig,
    pub digest: String,
    pub history: TrainingHistory,
    pub val: Option<ClassifierReport>,
    pub test: Option<ClassifierReport>,
    #[serde(skip)]
    pub params: ModelParams,
}

/// The hyperparameters a training run will use.
pub fn training_echo(config: &RunConfig) -> Value {
    let t = config.effective_training();
    json!({
        "seed": config.seed,
        "training_seed": t.seed,
        "optimizer": t.optimizer,
        "learning_rate": t.learning_rate,
        "epochs": t.epochs,
        "batch_size": t.batch_size,
        "early_stop": t.early_stop,
        "augment": t.augment,
    })
}

/// Reads every patch listed in the manifest at `path`.
pub fn load_split(path: &Path) -> Result<DatasetSplit> {
    let manifest = load_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        seed: manifest.dataset_seed,
    };
    for entry in &manifest.patches {
        let patch = LabeledPatch {
            pixels: PatchPixels::load_png(&base.join(&entry.path))?,
            label: entry.label,
            truth_mask: None,
            origin: PatchOrigin {
                frame: entry.frame,
                x: entry.x,
                y: entry.y,
            },
        };
        match entry.split {
            Split::Train => split.train.push(patch),
            Split::Val => split.val.push(patch),
            Split::Test => split.test.push(patch),
        }
    }
    Ok(split)
}

/// Trains on the manifest's patches; writes `model.ckpt`, `history.json` and
/// `progress.jsonl` under `config.out`.
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutput> {
    config.validate()?;
    let manifest = require_file(config.paths.manifest.as_ref(), "manifest")?;
    create_dir(&config.out)?;
    let split = load_split(manifest)?;
    let tcfg = config.effective_training();

    let progress_path = config.out.join("progress.jsonl");
    let mut progress = std::fs::File::create(&progress_path).map_err(|source| Error::Io {
        path: progress_path.clone(),
        source,
    })?;
    let mut write_err = None;
    let (params, history) = train_with_progress(&split, &tcfg, |rec| {
        log::info!(
            "epoch {} loss {:.5} val {:?}",
            rec.epoch,
            rec.loss,
            rec.val_accuracy
        );
        let line = json!({"epoch": rec.epoch, "loss": rec.loss, "val_accuracy": rec.val_accuracy});
        if let Err(e) = writeln!(progress, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(source) = write_err {
        return Err(Error::Io {
            path: progress_path,
            source,
        });
    }

    save_checkpoint(&params, &config.out.join(CHECKPOINT_FILE))?;
    let report = |p: &[LabeledPatch]| {
        if p.is_empty() {
            Ok(None)
        } else {
            evaluate_classifier(&params, p).map(Some)
        }
    };
    let val = report(&split.val)?;
    let test = report(&split.test)?;
    let out = TrainOutput {
        seed: config.seed,
        training_seed: tcfg.seed,
        manifest: manifest.display().to_string(),
        config: tcfg,
        digest: digest(&params),
        history,
        val,
        test,
        params,
    };
    write_json(&config.out.join("history.json"), &out)?;
    Ok(out)
}
