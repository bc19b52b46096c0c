//! Hashed-subword one-vs-rest linear router.
//!
//! One binary logistic classifier per domain over averaged hashed
//! character n-gram features: a document's feature value for bucket b is
//! count(b) / total emissions, so scores are length-invariant. A class
//! votes for a query when its sigmoid reaches 0.5; the highest-scoring
//! voter wins, and a query no class votes for is rejected. This is the
//! shared gate at threshold 0.5. Subword hashing keeps scoring robust to
//! out-of-vocabulary words; text with no trained feature at all is scored
//! from the per-class biases, which training pushes negative.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::LabeledExample;
use crate::scalar::{sigmoid, Scalar};
use crate::text::hash::hash_ngrams;

use super::{
    gate, validate_domains, validate_threshold, ModelError, RouteDecision, RouteError, Router,
    TrainConfig, TrainError,
};

/// The one-vs-rest vote threshold: a class "returns 1" iff its sigmoid
/// score reaches this value.
pub const OVR_THRESHOLD: f64 = 0.5;

/// Feature-hashing configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearOptions {
    pub bucket_count: u32,
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self { bucket_count: 1 << 21, n_min: 3, n_max: 6 }
    }
}

impl LinearOptions {
    fn validate(&self) -> Result<(), TrainError> {
        if !self.bucket_count.is_power_of_two() {
            return Err(TrainError::InvalidConfig(format!(
                "bucket count {} is not a power of two",
                self.bucket_count
            )));
        }
        if self.n_min == 0 || self.n_min > self.n_max {
            return Err(TrainError::InvalidConfig(format!(
                "invalid n-gram range [{}, {}]",
                self.n_min, self.n_max
            )));
        }
        Ok(())
    }
}

/// Trained one-vs-rest model: k weight vectors over B buckets plus one
/// bias each. Immutable at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<S> {
    bucket_count: u32,
    n_min: usize,
    n_max: usize,
    /// k×B, row-major by class.
    weights: Vec<S>,
    /// k.
    bias: Vec<S>,
    threshold: f64,
    domains: Vec<String>,
}

impl<S: Scalar> LinearModel<S> {
    /// Assembles a model from raw parts, revalidating shape coherence
    /// and finiteness. The decision threshold starts at the one-vs-rest
    /// value 0.5.
    pub fn from_parts(
        options: LinearOptions,
        weights: Vec<S>,
        bias: Vec<S>,
        domains: Vec<String>,
    ) -> Result<Self, ModelError> {
        validate_domains(&domains)?;
        options.validate().map_err(|e| ModelError::Invalid(e.to_string()))?;
        let k = domains.len();
        let b = options.bucket_count as usize;
        if weights.len() != k * b {
            return Err(ModelError::Invalid(format!(
                "weights have {} values, expected {}",
                weights.len(),
                k * b
            )));
        }
        if bias.len() != k {
            return Err(ModelError::Invalid(format!(
                "bias has {} values, expected {k}",
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|w| !w.is_finite()) {
            return Err(ModelError::Invalid("non-finite weight".into()));
        }
        Ok(Self {
            bucket_count: options.bucket_count,
            n_min: options.n_min,
            n_max: options.n_max,
            weights,
            bias,
            threshold: OVR_THRESHOLD,
            domains,
        })
    }

    pub fn options(&self) -> LinearOptions {
        LinearOptions { bucket_count: self.bucket_count, n_min: self.n_min, n_max: self.n_max }
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn bias(&self) -> &[S] {
        &self.bias
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Re-parameterizes the gate (serve-time override). Training always
    /// produces the one-vs-rest value 0.5.
    pub fn set_threshold(&mut self, threshold: f64) -> Result<(), ModelError> {
        validate_threshold(threshold)?;
        self.threshold = threshold;
        Ok(())
    }

    /// Per-class sigmoid scores for a query.
    pub fn forward(&self, text: &str) -> Vec<S> {
        let features = featurize::<S>(text, self.bucket_count, self.n_min, self.n_max);
        self.forward_features(&features)
    }

    fn forward_features(&self, features: &[(u32, S)]) -> Vec<S> {
        let b = self.bucket_count as usize;
        (0..self.domains.len())
            .map(|c| {
                let row = &self.weights[c * b..][..b];
                let mut z = self.bias[c];
                for &(bucket, x) in features {
                    z += row[bucket as usize] * x;
                }
                sigmoid(z)
            })
            .collect()
    }

    /// Trains k independent logistic regressions by mini-batch SGD from
    /// zero initialization. `valid` is accepted for interface symmetry
    /// but unused: the convex objective needs no checkpoint selection.
    pub fn train(
        domains: &[String],
        train: &[&LabeledExample],
        _valid: &[&LabeledExample],
        config: &TrainConfig,
        options: &LinearOptions,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        options.validate()?;
        validate_domains(domains).map_err(TrainError::Model)?;
        if train.is_empty() {
            return Err(TrainError::EmptyTrain);
        }
        let targets: Vec<usize> = train
            .iter()
            .map(|e| {
                domains
                    .iter()
                    .position(|d| *d == e.label)
                    .ok_or_else(|| TrainError::UnknownLabel { label: e.label.clone() })
            })
            .collect::<Result<_, _>>()?;

        let k = domains.len();
        let b = options.bucket_count as usize;
        let mut model = Self {
            bucket_count: options.bucket_count,
            n_min: options.n_min,
            n_max: options.n_max,
            weights: vec![S::zero(); k * b],
            bias: vec![S::zero(); k],
            threshold: OVR_THRESHOLD,
            domains: domains.to_vec(),
        };

        let encoded: Vec<Vec<(u32, S)>> = train
            .iter()
            .map(|e| featurize(&e.text, options.bucket_count, options.n_min, options.n_max))
            .collect();

        let lr = S::from_f64_lossy(config.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
                let batch: Vec<(&[(u32, S)], usize)> =
                    chunk.iter().map(|&i| (encoded[i].as_slice(), targets[i])).collect();
                let (loss, grads) = batch_loss_and_grads(&model, &batch);
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch, batch: batch_idx });
                }
                for (bucket, row) in grads.buckets {
                    for c in 0..k {
                        model.weights[c * b + bucket as usize] -= lr * row[c];
                    }
                }
                for c in 0..k {
                    model.bias[c] -= lr * grads.bias[c];
                }
            }
        }
        Ok(model)
    }
}

impl<S: Scalar> Router for LinearModel<S> {
    fn domains(&self) -> &[String] {
        &self.domains
    }

    fn route(&self, text: &str) -> Result<RouteDecision, RouteError> {
        let scores: Vec<f64> = self
            .forward(text)
            .iter()
            .map(|s| s.to_f64().expect("sigmoid output converts to f64"))
            .collect();
        Ok(gate(&self.domains, &scores, self.threshold))
    }
}

/// Averaged bucket-indicator features: value(bucket) = occurrences of
/// that bucket / total emissions. Empty for text with no tokens.
fn featurize<S: Scalar>(text: &str, bucket_count: u32, n_min: usize, n_max: usize) -> Vec<(u32, S)> {
    let hashed = hash_ngrams(text, bucket_count, n_min, n_max);
    if hashed.is_empty() {
        return Vec::new();
    }
    let total = S::from_count(hashed.len());
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for &bucket in hashed.buckets() {
        *counts.entry(bucket).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(bucket, count)| (bucket, S::from_count(count as usize) / total))
        .collect()
}

struct LinearGradients<S> {
    /// bucket → per-class gradient row.
    buckets: BTreeMap<u32, Vec<S>>,
    bias: Vec<S>,
}

/// Mean per-class logistic loss over the batch and its analytic
/// gradients. Pure: does not touch the model.
fn batch_loss_and_grads<S: Scalar>(
    model: &LinearModel<S>,
    batch: &[(&[(u32, S)], usize)],
) -> (S, LinearGradients<S>) {
    let k = model.domains.len();
    let norm = S::from_count(batch.len() * k);
    let mut grads = LinearGradients { buckets: BTreeMap::new(), bias: vec![S::zero(); k] };
    let mut total_loss = S::zero();
    for &(features, target) in batch {
        let scores = model.forward_features(features);
        let b = model.bucket_count as usize;
        let mut delta = vec![S::zero(); k];
        for c in 0..k {
            let y = if c == target { S::one() } else { S::zero() };
            let mut z = model.bias[c];
            for &(bucket, x) in features {
                z += model.weights[c * b + bucket as usize] * x;
            }
            total_loss += stable_logistic_loss(z, y);
            delta[c] = (scores[c] - y) / norm;
            grads.bias[c] += delta[c];
        }
        for &(bucket, x) in features {
            let row = grads.buckets.entry(bucket).or_insert_with(|| vec![S::zero(); k]);
            for c in 0..k {
                row[c] += delta[c] * x;
            }
        }
    }
    (total_loss / norm, grads)
}

fn stable_logistic_loss<S: Scalar>(z: S, y: S) -> S {
    z.max(S::zero()) - z * y + (-z.abs()).exp().ln_1p()
}
