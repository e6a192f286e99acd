//! Deep-sky object localization: synthetic sky generation, a patch classifier,
//! XRAI region attribution, tiled detection, and detection metrics.

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod grid;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod sky_image;
pub mod synthgen;
pub mod xrai;

pub use error::{Error, Result};
