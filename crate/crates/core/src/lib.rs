//! Click-driven interactive segmentation toolkit.
//!
//! The pieces fit together as a small MDP: a rule-based click oracle reads the
//! difference between a predicted mask and the ground truth and places the next
//! corrective click, a segmenter turns click history into a new mask, and a
//! multi-turn environment wraps the loop in a tagged-text protocol so scripted
//! or remote policies can drive it. On top sit a five-component reward model,
//! group-relative advantage arithmetic with a toy trainable policy, and a data
//! pipeline that renders synthetic corpora and builds cold-start trajectory
//! datasets with reflective (self-correction / inconsistency) variants.
//!
//! Numeric core code is generic over [`Scalar`] (`f32` or `f64`); [`Real`] is
//! the concrete alias used by the pipeline and wire layers.

pub mod action;
pub mod click;
pub mod codec;
pub mod config;
pub mod datagen;
pub mod edt;
pub mod env;
pub mod grpo;
pub mod image;
pub mod jsonl;
pub mod mask;
pub mod metrics;
pub mod oracle;
pub mod policy;
pub mod records;
pub mod rewards;
pub mod scalar;
pub mod seed;
pub mod segment;
pub mod store;
pub mod templates;
pub mod traj;

pub use scalar::Scalar;

/// Concrete scalar used everywhere a single type must be named (wire formats,
/// configs, the CLI). The math itself stays generic.
pub type Real = f64;
