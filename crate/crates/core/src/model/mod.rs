//! Binary patch classifier: a small residual CNN trained with Adam on BCE.

mod checkpoint;
mod network;
mod ops;
mod train;

pub use checkpoint::{
    digest, from_bytes, load_checkpoint, save_checkpoint, to_bytes, MAGIC, VERSION,
};
pub use network::{sigmoid, Architecture, LayerSpec, ModelParams, Tensor};
pub use train::{
    classifier_report, evaluate_accuracy, evaluate_classifier, predict, train, train_with_progress,
    ClassMetrics, ClassifierReport, EpochRecord, Optimizer, TrainingConfig, TrainingHistory,
};

use crate::sky_image::SkyImage;

/// Planar CHW f64 copy of an interleaved RGB image, the network's input layout.
pub fn image_to_input(img: &SkyImage) -> Vec<f64> {
    let plane = img.width() * img.height();
    let mut out = vec![0.0; 3 * plane];
    for (i, px) in img.as_slice().chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px[c] as f64;
        }
    }
    out
}
