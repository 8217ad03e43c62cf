//! Text/graphics separation for camera-captured business cards.
//!
//! The pipeline eliminates background blocks, grows connected components,
//! labels them with a rule cascade, and deskews and binarizes each text
//! region. [`synthgen`] produces annotated cards and [`eval`] scores
//! predictions against them.

pub mod background;
pub mod binarize;
pub mod classify;
pub mod cli;
pub mod error;
pub mod eval;
pub mod image;
pub mod imageio;
pub mod pipeline;
pub mod regions;
pub mod skew;
pub mod synthgen;

pub use error::{Error, Result};
pub use image::{GrayImage, Rect};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput, StageTimings};
