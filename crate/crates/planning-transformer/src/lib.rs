//! Offline reinforcement learning as sequence modeling with dual-timescale
//! planning tokens.
//!
//! A single causal transformer carries two output heads: an action head that
//! predicts the next action, and a planning head that predicts a short
//! sequence of sparse future snapshots ("planning tokens"). Plans are
//! generated autoregressively at inference time and prepended to the model's
//! own input, so the low-level policy is conditioned on the model's own
//! prediction of its long-horizon future.
//!
//! The crate is self-contained: a small autodiff tensor engine
//! ([`tensor`]), the model ([`model`]), plan construction ([`plan`]),
//! sequence assembly ([`sequence`]), trajectory datasets ([`data`]),
//! synthetic environments ([`envs`]), the training/evaluation pipeline
//! ([`pipeline`]), and SVG visualization ([`viz`]). See the `examples/`
//! directory for one runnable program per capability.

pub mod config;
pub mod data;
pub mod envs;
pub mod model;
pub mod pipeline;
pub mod plan;
pub mod runcfg;
pub mod sequence;
pub mod tensor;
pub mod viz;

pub use config::PtConfig;
pub use tensor::{Float, Tensor, TensorError};
