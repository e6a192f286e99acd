use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{sigmoid, Architecture, ModelParams};
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::synthgen::{DatasetSplit, Label, LabeledPatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub early_stop: Option<usize>,
    /// Random horizontal/vertical flips of training patches.
    pub augment: bool,
    pub architecture: Architecture,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 0.001,
            epochs: 50,
            batch_size: 16,
            seed: 0,
            early_stop: None,
            augment: true,
            architecture: Architecture::desk_scale(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.early_stop == Some(0) {
            return Err(Error::config("early_stop patience must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    /// `None` when the validation split is empty.
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &ModelParams, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.data.len()])
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &[Vec<f64>]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (k, t) in params.tensors_mut().iter_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, p) in t.data.iter_mut().enumerate() {
                let g = grads[k][i];
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g;
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g * g;
                *p -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Copies patch pixels (CHW, optionally flipped) into `out`.
fn load_patch(p: &LabeledPatch, flip_x: bool, flip_y: bool, side: usize, out: &mut [f64]) {
    p.pixels.write_chw(out);
    if !(flip_x || flip_y) {
        return;
    }
    for plane in out.chunks_exact_mut(side * side) {
        if flip_y {
            for y in 0..side / 2 {
                let (a, b) = plane.split_at_mut((side - 1 - y) * side);
                a[y * side..(y + 1) * side].swap_with_slice(&mut b[..side]);
            }
        }
        if flip_x {
            for row in plane.chunks_exact_mut(side) {
                row.reverse();
            }
        }
    }
}

fn target(label: Label) -> f64 {
    if label.is_present() {
        1.0
    } else {
        0.0
    }
}

pub fn train(
    split: &DatasetSplit,
    config: &TrainingConfig,
) -> Result<(ModelParams, TrainingHistory)> {
    train_with_progress(split, config, |_| {})
}

/// As [`train`], calling `progress` after every epoch.
pub fn train_with_progress(
    split: &DatasetSplit,
    config: &TrainingConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(ModelParams, TrainingHistory)> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::domain("training split is empty"));
    }
    let [c, h, w] = config.architecture.input_shape;
    if c != 3 || h != w || h != crate::synthgen::PATCH_SIZE {
        return Err(Error::config(
            "training requires a 3x224x224 input architecture",
        ));
    }
    let mut params = ModelParams::new(config.architecture.clone(), config.seed)?;
    params.training = Some(config.clone());
    let mut adam = Adam::new(&params, config.learning_rate);
    let len = params.input_len();
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0usize;
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut x = vec![0.0; config.batch_size * len];
    for epoch in 1..=config.epochs {
        let mut rng = rng_for(config.seed, "epoch", epoch as u64);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let n = batch.len();
            let mut t = Vec::with_capacity(n);
            for (j, &idx) in batch.iter().enumerate() {
                let p = &split.train[idx];
                let (fx, fy) = if config.augment {
                    (rng.random(), rng.random())
                } else {
                    (false, false)
                };
                load_patch(p, fx, fy, h, &mut x[j * len..(j + 1) * len]);
                t.push(target(p.label));
            }
            let (loss, grads, z) = params.loss_and_grads(&x[..n * len], &t);
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    reason: format!("loss became {loss}"),
                });
            }
            loss_sum += loss * n as f64;
            correct += z
                .iter()
                .zip(&t)
                .filter(|(&z, &t)| (sigmoid(z) >= 0.5) == (t == 1.0))
                .count();
            adam.step(&mut params, &grads);
        }
        let val_accuracy = if split.val.is_empty() {
            None
        } else {
            Some(evaluate_accuracy(&params, &split.val)?)
        };
        let record = EpochRecord {
            epoch,
            loss: loss_sum / split.train.len() as f64,
            train_accuracy: correct as f64 / split.train.len() as f64,
            val_accuracy,
        };
        progress(&record);
        history.epochs.push(record);
        let Some(patience) = config.early_stop.filter(|_| val_accuracy.is_some()) else {
            continue;
        };
        let score = val_accuracy.unwrap_or_default();
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, params.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= patience {
            history.stopped_early = true;
            break;
        }
    }
    if config.early_stop.is_some() && !split.val.is_empty() {
        if let Some((_, b)) = best {
            params = b;
        }
    } else {
        history.best_epoch = history.epochs.len();
    }
    Ok((params, history))
}

/// Probability of `DsoPresent` for every patch, batched.
pub fn predict(params: &ModelParams, patches: &[LabeledPatch]) -> Result<Vec<f64>> {
    const BATCH: usize = 16;
    let len = params.input_len();
    let side = params.architecture().input_shape[1];
    let mut out = Vec::with_capacity(patches.len());
    let mut x = vec![0.0; BATCH * len];
    for chunk in patches.chunks(BATCH) {
        for (j, p) in chunk.iter().enumerate() {
            if p.pixels.raw().len() != len {
                return Err(Error::domain("patch does not match the model input shape"));
            }
            load_patch(p, false, false, side, &mut x[j * len..(j + 1) * len]);
        }
        out.extend(
            params
                .logits_batch(&x[..chunk.len() * len], chunk.len())?
                .into_iter()
                .map(sigmoid),
        );
    }
    Ok(out)
}

/// Fraction of patches whose thresholded prediction (p ≥ 0.5 → present) matches the label.
pub fn evaluate_accuracy(params: &ModelParams, patches: &[LabeledPatch]) -> Result<f64> {
    Ok(evaluate_classifier(params, patches)?.accuracy)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub accuracy: f64,
    pub present: ClassMetrics,
    pub absent: ClassMetrics,
    /// [[true present, false absent], [false present, true absent]]
    pub confusion: [[usize; 2]; 2],
}

pub fn classifier_report(predictions: &[f64], labels: &[Label]) -> Result<ClassifierReport> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::domain(
            "need a non-empty list of predictions, one per label",
        ));
    }
    let mut cm = [[0usize; 2]; 2];
    for (&p, &l) in predictions.iter().zip(labels) {
        let row = if l.is_present() { 0 } else { 1 };
        let col = if p >= 0.5 { 0 } else { 1 };
        cm[row][col] += 1;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(ClassifierReport {
        accuracy: ratio(cm[0][0] + cm[1][1], predictions.len()),
        present: ClassMetrics {
            precision: ratio(cm[0][0], cm[0][0] + cm[1][0]),
            recall: ratio(cm[0][0], cm[0][0] + cm[0][1]),
        },
        absent: ClassMetrics {
            precision: ratio(cm[1][1], cm[1][1] + cm[0][1]),
            recall: ratio(cm[1][1], cm[1][1] + cm[1][0]),
        },
        confusion: cm,
    })
}

pub fn evaluate_classifier(
    params: &ModelParams,
    patches: &[LabeledPatch],
) -> Result<ClassifierReport> {
    if patches.is_empty() {
        return Err(Error::domain("cannot evaluate on an empty patch list"));
    }
    let p = predict(params, patches)?;
    let labels: Vec<Label> = patches.iter().map(|p| p.label).collect();
    classifier_report(&p, &labels)
}
