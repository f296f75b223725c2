//! Multimodal image matching that tolerates nonlinear intensity distortion,
//! scale change and arbitrary rotation.
//!
//! The pipeline builds a scale space, filters every layer with a log-Gabor bank,
//! detects FAST corners on a phase-congruency moment map, describes each corner
//! with histograms of rotation-normalized orientation index maps, matches
//! descriptors by nearest neighbour with sample-consensus outlier removal, and
//! finally rematches leftover features by phase correlation of amplitude templates.

pub mod config;
pub mod description;
pub mod detection;
pub mod error;
pub mod eval;
pub mod fft;
pub mod image;
pub mod io;
pub mod log_gabor;
pub mod matching;
pub mod phase_congruency;
pub mod pipeline;
pub mod pyramid;
pub mod sweep;
pub mod synth;
pub mod template;

pub use error::{Error, Result};
pub use config::PipelineConfig;
pub use image::{load_image, GrayImage};
pub use matching::{Match, SimilarityTransform, Stage};
pub use pipeline::{match_pipeline, register_and_fuse, PipelineOutput};
