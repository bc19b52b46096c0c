//! Guarded query routing.
//!
//! A router assigns short text queries to one of a fixed set of domains, or
//! rejects them as out of distribution instead of forcing a match. This
//! crate provides the full pipeline:
//!
//! - [`corpus`]: labeled datasets, benchmark manifests, stratified splits,
//!   and a synthetic three-domain benchmark generator.
//! - [`text`]: tokenization, vocabulary construction, TF-IDF vectors, and
//!   hashed character n-gram features.
//! - [`models`]: two trainable classifiers behind one [`models::Router`]
//!   trait (a pooled-embedding MLP and a linear one-vs-rest model), the
//!   shared accept/reject gate, and a binary artifact format.
//! - [`llm`]: a zero-shot router that delegates to a chat-completion API,
//!   plus a replayable stub client for offline tests.
//! - [`eval`]: routing accuracy metrics, the GQR score, a latency
//!   benchmark, and report emission (text table and CSV).
//!
//! Math is generic over [`Scalar`] (`f32` or `f64`); the aliases below pin
//! the `f32` configuration used for training and serving.

pub mod corpus;
pub mod eval;
pub mod llm;
pub mod models;
pub mod scalar;
pub mod text;

pub use scalar::Scalar;

/// Pooled-embedding MLP router over `f32`, the serving configuration.
pub type MlpModelF32 = models::mlp::MlpModel<f32>;

/// Linear one-vs-rest router over `f32`, the serving configuration.
pub type LinearModelF32 = models::linear::LinearModel<f32>;

/// Either trained router kind over `f32`, as loaded from an artifact file.
pub type GuardedModelF32 = models::artifact::GuardedModel<f32>;
