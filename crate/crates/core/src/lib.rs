//! Noisy-label classification with learned per-sample importance.
//!
//! A small feed-forward backbone produces features; a sigmoid attention
//! head turns each feature vector into an importance weight `alpha` in
//! `(0, 1)` that scales the sample's logits inside the cross-entropy. A
//! hinge on the gap between the mean weight of the top-ranked and
//! bottom-ranked parts of each batch keeps the weights informative, and
//! bottom-ranked samples whose prediction confidently disagrees with their
//! label are relabeled.
//!
//! Module map:
//!
//! - [`tensor`], [`backbone`], [`optim`], [`gradcheck`], [`checkpoint`]:
//!   numerics, hand-derived backprop and its finite-difference oracle.
//! - [`loss`]: attention weighting, weighted cross-entropy, rank split and
//!   hinge, relabeling.
//! - [`data`]: synthetic blobs, label-noise injection, dataset files.
//! - [`train`]: the training loop, evaluation, paired comparisons and
//!   ablation sweeps.
//! - [`parallel`]: fan-out over independent runs and evaluation chunks.

pub mod backbone;
mod binio;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod parallel;
pub mod tensor;
pub mod train;

pub use error::{Result, ScnError};
pub use parallel::Execution;
pub use tensor::Tensor2D;
