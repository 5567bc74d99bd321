//! Incomplete two-view clustering by dual-network representation learning.
//!
//! The library trains per-view autoencoders jointly with an online/target
//! network pair (the target trailing by exponential moving average), cross-view
//! latent predictors used both as a training signal and to impute missing
//! views, and softmax cluster heads tied together by a mutual-information
//! objective. After training, every sample gets a common representation by
//! concatenating its (possibly imputed) view latents, which is clustered with
//! k-means and scored with ACC/NMI/ARI.
//!
//! Modules follow the pipeline order: [`numerics`] (dense matrices and
//! reverse-mode differentiation), [`data`] (datasets, masking, synthesis,
//! file I/O), [`networks`] (MLPs and the model bundle), [`losses`],
//! [`trainer`], [`evaluate`], and [`experiment`] (config-driven runs and
//! sweep harnesses).
//!
//! The `parallel` feature (on by default) enables rayon-backed execution for
//! large matrix products, k-means restarts, and concurrent sweep runs.
//! Sequential fallbacks are always compiled; results are bit-identical with
//! the feature on or off.

pub mod data;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod losses;
pub mod networks;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
