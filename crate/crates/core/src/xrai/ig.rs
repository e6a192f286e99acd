use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{image_to_input, ModelParams};
use crate::sky_image::SkyImage;

/// Steps evaluated per backward pass.
const STEP_BATCH: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Black,
    White,
}

impl Baseline {
    pub fn value(self) -> f32 {
        match self {
            Baseline::Black => 0.0,
            Baseline::White => 1.0,
        }
    }

    pub fn image(self, width: usize, height: usize) -> SkyImage {
        SkyImage::filled(width, height, [self.value(); 3])
    }
}

/// Per-pixel signed attribution (channels summed) with the logits at both path ends.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributionMap {
    pub scores: Grid<f64>,
    pub steps: usize,
    /// Baselines averaged into `scores`; empty for a custom baseline image.
    pub baselines: Vec<Baseline>,
    pub logit_input: f64,
    /// Logit at each baseline, in `baselines` order (one entry for a custom baseline).
    pub logit_baselines: Vec<f64>,
}

impl AttributionMap {
    pub fn total(&self) -> f64 {
        self.scores.as_slice().iter().sum()
    }
}

/// Midpoint-Riemann integrated gradients of the logit along the straight path
/// from `baseline` to `patch`.
pub fn integrated_gradients(
    params: &ModelParams,
    patch: &SkyImage,
    baseline: &SkyImage,
    steps: usize,
) -> Result<AttributionMap> {
    if steps == 0 {
        return Err(Error::config("ig_steps must be >= 1"));
    }
    if (patch.width(), patch.height()) != (baseline.width(), baseline.height()) {
        return Err(Error::domain(format!(
            "baseline is {}x{} but the patch is {}x{}",
            baseline.width(),
            baseline.height(),
            patch.width(),
            patch.height()
        )));
    }
    let x = image_to_input(patch);
    let b = image_to_input(baseline);
    let len = x.len();
    if len != params.input_len() {
        return Err(Error::domain(format!(
            "patch has {len} values, the model expects {}",
            params.input_len()
        )));
    }
    let diff: Vec<f64> = x.iter().zip(&b).map(|(x, b)| x - b).collect();
    let mut acc = vec![0.0; len];
    let mut batch = vec![0.0; STEP_BATCH.min(steps) * len];
    let mut k = 0;
    while k < steps {
        let n = STEP_BATCH.min(steps - k);
        for j in 0..n {
            let alpha = ((k + j) as f64 + 0.5) / steps as f64;
            for (o, (b, d)) in batch[j * len..(j + 1) * len]
                .iter_mut()
                .zip(b.iter().zip(&diff))
            {
                *o = b + alpha * d;
            }
        }
        let (_, g) = params.logit_gradients_batch(&batch[..n * len], n)?;
        for gi in g.chunks_exact(len) {
            acc.iter_mut().zip(gi).for_each(|(a, g)| *a += g);
        }
        k += n;
    }
    let plane = patch.width() * patch.height();
    let inv = 1.0 / steps as f64;
    let scores: Vec<f64> = (0..plane)
        .map(|i| {
            (0..3)
                .map(|c| diff[c * plane + i] * acc[c * plane + i] * inv)
                .sum()
        })
        .collect();
    let ends = params.logits_batch(&[x, b].concat(), 2)?;
    Ok(AttributionMap {
        scores: Grid::from_vec(patch.width(), patch.height(), scores),
        steps,
        baselines: Vec::new(),
        logit_input: ends[0],
        logit_baselines: vec![ends[1]],
    })
}

/// IG against each baseline, averaged pixelwise.
pub fn averaged_ig(
    params: &ModelParams,
    patch: &SkyImage,
    baselines: &[Baseline],
    steps: usize,
) -> Result<AttributionMap> {
    if baselines.is_empty() {
        return Err(Error::config("at least one baseline is required"));
    }
    let mut maps = Vec::with_capacity(baselines.len());
    for &b in baselines {
        maps.push(integrated_gradients(
            params,
            patch,
            &b.image(patch.width(), patch.height()),
            steps,
        )?);
    }
    let n = maps.len() as f64;
    let mut scores = maps[0].scores.clone();
    for m in &maps[1..] {
        scores
            .as_mut_slice()
            .iter_mut()
            .zip(m.scores.as_slice())
            .for_each(|(a, b)| *a += b);
    }
    scores.as_mut_slice().iter_mut().for_each(|v| *v /= n);
    Ok(AttributionMap {
        scores,
        steps,
        baselines: baselines.to_vec(),
        logit_input: maps[0].logit_input,
        logit_baselines: maps.iter().map(|m| m.logit_baselines[0]).collect(),
    })
}
