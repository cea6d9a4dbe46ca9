//! Cross-domain imitation learning with joint latent/action optimal transport.
//!
//! The crate trains a shared encoder and policy head on two embodiments at
//! once (a data-rich *source* and a data-poor *target*) and aligns their
//! latent distributions with an entropic optimal-transport loss whose ground
//! cost is discounted on behaviourally matched pairs, where behaviour
//! similarity is measured by dynamic time warping between action chunks.
//!
//! Modules, bottom up:
//! - [`numkit`]: matrices, seeded RNG streams, reverse-mode tape, AdamW.
//! - [`geometry`]: poses, action chunks, resampling, per-embodiment z-scores.
//! - [`dtw`]: dynamic time warping and pseudo-pair assignment.
//! - [`transport`]: Sinkhorn, exact small-N OT, shaped joint-OT loss, MMD, W2.
//! - [`model`]: stems, shared trunk, policy head and the total objective.
//! - [`pushmini`]: the two-domain 2D pushing benchmark and its experts.
//! - [`trainer`]: the co-training loop, configs, checkpoints, sweeps.
//! - [`analysis`]: latent-space diagnostics (W2, KNN pairing, PCA).

pub mod analysis;
pub mod dtw;
pub mod error;
pub mod geometry;
pub mod model;
pub mod numkit;
pub mod pushmini;
pub mod trainer;
pub mod transport;

pub use error::{Error, Result};
