//! Deep-clustering-guided unsupervised domain adaptation engine.
//!
//! Trains a feature extractor, task classifier and domain discriminator
//! end to end on labeled source plus unlabeled target data: adversarial
//! feature alignment through a gradient reverse layer, combined with
//! deep embedded clustering of the target samples (Student's-t
//! assignments against learnable class centroids, sharpened auxiliary
//! targets, pseudo-label mixing). Single-threaded, f64 throughout, and
//! deterministic for a fixed seed.

pub mod clustering;
pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod model_io;
pub mod nn;
pub mod optim;
pub mod pca;
pub mod trainer;

pub use error::{Error, Result};
