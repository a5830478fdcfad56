//! Conditional neural field for single objects: joint radiance, density, and
//! per-part semantics predicted from a few posed images.
//!
//! The crate covers the full desk-scale pipeline: a procedural multi-part
//! scene generator with an exact ray-traced oracle, a tape-based reverse-mode
//! autodiff engine, the pixel-aligned conditional field, differentiable volume
//! rendering of color and semantics, joint training, 3D point segmentation,
//! and marching-cubes reconstruction with semantic background suppression.

pub mod autodiff;
pub mod camera;
pub mod dataset;
pub mod encoder;
pub mod field;
pub mod io;
pub mod metrics;
pub mod num;
pub mod render;
pub mod scene;
pub mod segrecon;
pub mod trainer;

pub use num::{Dtype, Real};
