//! Guarded classifiers.
//!
//! Two trainable routers share one decision rule: score every domain,
//! accept the argmax only when its confidence clears a threshold, and
//! reject otherwise. [`mlp`] implements the IDF-weighted bag-of-words
//! MLP; [`linear`] the hashed-subword one-vs-rest logistic model;
//! [`artifact`] the on-disk format both serialize to.

pub mod artifact;
pub mod linear;
pub mod mlp;

use indexmap::IndexMap;
use thiserror::Error;

/// Routing verdict for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Domain(String),
    Reject,
}

impl Outcome {
    /// Stable wire label: the domain name, or `"reject"`.
    pub fn label(&self) -> &str {
        match self {
            Outcome::Domain(d) => d,
            Outcome::Reject => "reject",
        }
    }

    pub fn is_reject(&self) -> bool {
        matches!(self, Outcome::Reject)
    }
}

/// Decision plus the per-domain confidences behind it. `scores` holds
/// exactly one entry per configured domain, in domain order. A winning
/// domain always carries the maximal score. `calibrated` is false when
/// the scores are placeholders rather than model probabilities (the
/// delegating LLM backend).
#[derive(Debug, Clone, PartialEq)]
pub struct RouteDecision {
    pub outcome: Outcome,
    pub scores: IndexMap<String, f64>,
    pub calibrated: bool,
}

/// Shared accept/reject rule: accept the highest-scoring domain iff its
/// score reaches `threshold`, otherwise reject. Ties break toward the
/// earlier domain in `domains` order.
pub fn gate(domains: &[String], scores: &[f64], threshold: f64) -> RouteDecision {
    assert_eq!(domains.len(), scores.len(), "one score per domain");
    assert!(!domains.is_empty(), "gate needs at least one domain");
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        debug_assert!(s.is_finite(), "non-finite score for {:?}", domains[i]);
        if s > scores[best] {
            best = i;
        }
    }
    let outcome = if scores[best] >= threshold {
        Outcome::Domain(domains[best].clone())
    } else {
        Outcome::Reject
    };
    let scores = domains.iter().cloned().zip(scores.iter().copied()).collect();
    RouteDecision { outcome, scores, calibrated: true }
}

/// Routing failure. Local models are infallible; the error paths exist
/// for delegating backends. The evaluation harness scores any error as
/// a rejection.
#[derive(Debug, Error)]
pub enum RouteError {
    #[error("backend transport failure: {0}")]
    Transport(String),
    #[error("backend returned an unparseable verdict: {completion:?}")]
    UnparseableVerdict { completion: String },
}

/// A query router: any guarded classifier, local or delegating.
/// Implementations are immutable and safe to share across threads.
pub trait Router: Send + Sync {
    fn domains(&self) -> &[String];

    fn route(&self, text: &str) -> Result<RouteDecision, RouteError>;

    /// Routes a batch. The default routes queries one by one; backends
    /// with real batch amortization override this, and the latency
    /// benchmark drives it directly.
    fn route_batch(&self, texts: &[&str]) -> Vec<Result<RouteDecision, RouteError>> {
        texts.iter().map(|t| self.route(t)).collect()
    }
}

/// Optimization settings shared by both trainable models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, learning_rate: 1e-3, batch_size: 16, seed: 42 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(
                "learning rate must be positive and finite".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training split is empty")]
    EmptyTrain,
    #[error("validation split is empty")]
    EmptyValid,
    #[error("training label {label:?} is not a configured domain")]
    UnknownLabel { label: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Text(#[from] crate::text::TextError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    Invalid(String),
}

pub(crate) fn validate_domains(domains: &[String]) -> Result<(), ModelError> {
    if domains.len() < 2 {
        return Err(ModelError::Invalid(format!(
            "need at least 2 domains, got {}",
            domains.len()
        )));
    }
    for (i, d) in domains.iter().enumerate() {
        if d.trim().is_empty() {
            return Err(ModelError::Invalid("empty domain name".into()));
        }
        if domains[..i].contains(d) {
            return Err(ModelError::Invalid(format!("duplicate domain name {d:?}")));
        }
    }
    Ok(())
}

pub(crate) fn validate_threshold(t: f64) -> Result<(), ModelError> {
    if !(t > 0.0 && t < 1.0) {
        return Err(ModelError::Invalid(format!("threshold {t} outside (0, 1)")));
    }
    Ok(())
}
