//! IDF-weighted bag-of-words MLP router.
//!
//! Architecture: the TF-IDF bag of a query, normalized to an IDF-weighted
//! average, is pooled through a V×H embedding table (equivalently: the
//! first linear layer applied to the normalized bag), passed through a
//! ReLU hidden layer with bias, and projected to k per-domain sigmoid
//! scores. Training minimizes mean per-class binary cross-entropy against
//! one-hot targets with per-batch dropout on the hidden layer, using
//! Adam steps (lazy over untouched embedding rows), and keeps the epoch
//! checkpoint with the best validation ID accuracy. A query with no
//! in-vocabulary token pools to the zero vector and is scored from the
//! biases alone.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::LabeledExample;
use crate::scalar::{sigmoid, Scalar};
use crate::text::{build_vocabulary, vectorize_tfidf, SparseVector, Vocabulary};

use super::{
    gate, validate_domains, validate_threshold, ModelError, RouteDecision, RouteError, Router,
    TrainConfig, TrainError,
};

/// Structural hyperparameters of the MLP and its vocabulary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpOptions {
    pub hidden_width: usize,
    pub dropout: f64,
    pub min_df: u32,
    pub max_vocab: usize,
}

impl Default for MlpOptions {
    fn default() -> Self {
        Self { hidden_width: 1024, dropout: 0.5, min_df: 2, max_vocab: 100_000 }
    }
}

impl MlpOptions {
    fn validate(&self) -> Result<(), TrainError> {
        if self.hidden_width == 0 {
            return Err(TrainError::InvalidConfig("hidden width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.min_df == 0 {
            return Err(TrainError::InvalidConfig("min_df must be at least 1".into()));
        }
        if self.max_vocab == 0 {
            return Err(TrainError::InvalidConfig("max_vocab must be at least 1".into()));
        }
        Ok(())
    }
}

/// Trained MLP router. Immutable at inference; dropout is a training-only
/// field and never applies when scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<S> {
    vocab: Vocabulary,
    hidden_width: usize,
    /// V×H, row-major by vocabulary id.
    embedding: Vec<S>,
    /// H.
    hidden_bias: Vec<S>,
    /// H×k, row-major by hidden unit.
    output_weights: Vec<S>,
    /// k.
    output_bias: Vec<S>,
    dropout: f64,
    threshold: f64,
    domains: Vec<String>,
}

impl<S: Scalar> MlpModel<S> {
    /// Assembles a model from raw parts, revalidating every invariant:
    /// shape coherence, finite weights, H ≥ 1, k ≥ 2, threshold in
    /// (0, 1), dropout in [0, 1).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        vocab: Vocabulary,
        hidden_width: usize,
        embedding: Vec<S>,
        hidden_bias: Vec<S>,
        output_weights: Vec<S>,
        output_bias: Vec<S>,
        dropout: f64,
        threshold: f64,
        domains: Vec<String>,
    ) -> Result<Self, ModelError> {
        validate_domains(&domains)?;
        validate_threshold(threshold)?;
        let (v, h, k) = (vocab.len(), hidden_width, domains.len());
        if h == 0 {
            return Err(ModelError::Invalid("hidden width must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(ModelError::Invalid(format!("dropout {dropout} outside [0, 1)")));
        }
        let shapes = [
            ("embedding", embedding.len(), v * h),
            ("hidden bias", hidden_bias.len(), h),
            ("output weights", output_weights.len(), h * k),
            ("output bias", output_bias.len(), k),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(ModelError::Invalid(format!(
                    "{name} has {got} values, expected {want}"
                )));
            }
        }
        for (name, values) in [
            ("embedding", &embedding),
            ("hidden bias", &hidden_bias),
            ("output weights", &output_weights),
            ("output bias", &output_bias),
        ] {
            if values.iter().any(|w| !w.is_finite()) {
                return Err(ModelError::Invalid(format!("non-finite value in {name}")));
            }
        }
        Ok(Self {
            vocab,
            hidden_width,
            embedding,
            hidden_bias,
            output_weights,
            output_bias,
            dropout,
            threshold,
            domains,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_width
    }

    pub fn embedding(&self) -> &[S] {
        &self.embedding
    }

    pub fn hidden_bias(&self) -> &[S] {
        &self.hidden_bias
    }

    pub fn output_weights(&self) -> &[S] {
        &self.output_weights
    }

    pub fn output_bias(&self) -> &[S] {
        &self.output_bias
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Re-parameterizes the accept/reject gate without touching weights.
    pub fn set_threshold(&mut self, threshold: f64) -> Result<(), ModelError> {
        validate_threshold(threshold)?;
        self.threshold = threshold;
        Ok(())
    }

    /// Per-domain sigmoid scores for a query. Pure and deterministic;
    /// no dropout at inference.
    pub fn forward(&self, text: &str) -> Vec<S> {
        self.forward_encoded(&normalized_tfidf(&self.vocab, text))
    }

    fn forward_encoded(&self, x: &SparseVector<S>) -> Vec<S> {
        let h = self.hidden_width;
        let k = self.domains.len();
        let mut pre = self.hidden_bias.clone();
        for &(id, w) in x.entries() {
            let row = &self.embedding[id as usize * h..][..h];
            for (p, &e) in pre.iter_mut().zip(row) {
                *p += w * e;
            }
        }
        let mut z = self.output_bias.clone();
        for (i, &p) in pre.iter().enumerate() {
            if p > S::zero() {
                let row = &self.output_weights[i * k..][..k];
                for (zj, &w) in z.iter_mut().zip(row) {
                    *zj += p * w;
                }
            }
        }
        z.into_iter().map(sigmoid).collect()
    }

    /// Trains on `train`, selecting the epoch with the best ID accuracy
    /// on `valid` (measured with the same gate and threshold the model
    /// will serve with). Bitwise deterministic for a fixed config.
    pub fn train(
        domains: &[String],
        train: &[&LabeledExample],
        valid: &[&LabeledExample],
        config: &TrainConfig,
        options: &MlpOptions,
        threshold: f64,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        options.validate()?;
        validate_domains(domains).map_err(TrainError::Model)?;
        validate_threshold(threshold).map_err(TrainError::Model)?;
        if train.is_empty() {
            return Err(TrainError::EmptyTrain);
        }
        if valid.is_empty() {
            return Err(TrainError::EmptyValid);
        }
        let targets = target_indices(domains, train)?;
        let valid_targets = target_indices(domains, valid)?;

        let vocab = build_vocabulary(
            train.iter().map(|e| e.text.as_str()),
            options.min_df,
            options.max_vocab,
        )?;
        let (v, h, k) = (vocab.len(), options.hidden_width, domains.len());

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let emb_scale = (6.0 / (v + h) as f64).sqrt();
        let out_scale = (6.0 / (h + k) as f64).sqrt();
        let embedding = init_uniform(&mut rng, v * h, emb_scale);
        let output_weights = init_uniform(&mut rng, h * k, out_scale);
        let mut model = Self {
            vocab,
            hidden_width: h,
            embedding,
            hidden_bias: vec![S::zero(); h],
            output_weights,
            output_bias: vec![S::zero(); k],
            dropout: options.dropout,
            threshold,
            domains: domains.to_vec(),
        };

        let encoded: Vec<SparseVector<S>> = train
            .iter()
            .map(|e| normalized_tfidf(&model.vocab, &e.text))
            .collect();
        let valid_encoded: Vec<SparseVector<S>> = valid
            .iter()
            .map(|e| normalized_tfidf(&model.vocab, &e.text))
            .collect();

        let lr = S::from_f64_lossy(config.learning_rate);
        let mut opt = AdamState::new(v * h, h, h * k, k);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut best: Option<(f64, Snapshot<S>)> = None;
        let p = options.dropout;

        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
                let keep_scale = sample_keep_scale::<S>(&mut rng, h, p);
                let batch: Vec<(&SparseVector<S>, usize)> =
                    chunk.iter().map(|&i| (&encoded[i], targets[i])).collect();
                let (loss, grads) = batch_loss_and_grads(&model, &batch, &keep_scale);
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch, batch: batch_idx });
                }
                opt.apply(&mut model, &grads, lr);
            }

            let correct = valid_encoded
                .iter()
                .zip(&valid_targets)
                .filter(|(x, &t)| {
                    let scores: Vec<f64> =
                        model.forward_encoded(x).iter().map(|s| s.to_f64().unwrap()).collect();
                    let decision = gate(&model.domains, &scores, threshold);
                    decision.outcome.label() == model.domains[t]
                })
                .count();
            let val_acc = correct as f64 / valid.len() as f64;
            if best.as_ref().is_none_or(|(b, _)| val_acc > *b) {
                best = Some((val_acc, Snapshot::of(&model)));
            }
        }

        let (_, snapshot) = best.expect("at least one epoch ran");
        snapshot.install(&mut model);
        Ok(model)
    }
}

impl<S: Scalar> Router for MlpModel<S> {
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

/// TF-IDF bag normalized by its total weight: the IDF-weighted average
/// coefficients. Empty (the zero vector) when nothing is in-vocabulary.
fn normalized_tfidf<S: Scalar>(vocab: &Vocabulary, text: &str) -> SparseVector<S> {
    let x = vectorize_tfidf::<S>(vocab, text);
    let total: S = x.entries().iter().map(|&(_, w)| w).sum();
    if total <= S::zero() {
        return SparseVector::empty();
    }
    SparseVector::new(x.entries().iter().map(|&(id, w)| (id, w / total)).collect())
}

fn target_indices(
    domains: &[String],
    examples: &[&LabeledExample],
) -> Result<Vec<usize>, TrainError> {
    examples
        .iter()
        .map(|e| {
            domains
                .iter()
                .position(|d| *d == e.label)
                .ok_or_else(|| TrainError::UnknownLabel { label: e.label.clone() })
        })
        .collect()
}

fn init_uniform<S: Scalar>(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<S> {
    (0..len)
        .map(|_| S::from_f64_lossy((rng.random::<f64>() * 2.0 - 1.0) * scale))
        .collect()
}

/// Inverted-dropout multipliers for one batch: 1/(1−p) for kept units,
/// 0 for dropped ones; all ones when p = 0 (no generator draws).
fn sample_keep_scale<S: Scalar>(rng: &mut ChaCha8Rng, h: usize, p: f64) -> Vec<S> {
    if p == 0.0 {
        return vec![S::one(); h];
    }
    let keep = S::from_f64_lossy(1.0 / (1.0 - p));
    (0..h)
        .map(|_| if rng.random::<f64>() >= p { keep } else { S::zero() })
        .collect()
}

/// Loss is max(z,0) − z·y + ln(1+e^−|z|): algebraically BCE, but immune
/// to overflow for any finite z.
fn stable_bce<S: Scalar>(z: S, y: S) -> S {
    z.max(S::zero()) - z * y + (-z.abs()).exp().ln_1p()
}

struct MlpGradients<S> {
    emb_rows: BTreeMap<u32, Vec<S>>,
    hidden_bias: Vec<S>,
    output_weights: Vec<S>,
    output_bias: Vec<S>,
}

/// Mean per-class BCE over the batch and its analytic gradients, under a
/// fixed dropout multiplier vector. Pure: does not touch the model.
fn batch_loss_and_grads<S: Scalar>(
    model: &MlpModel<S>,
    batch: &[(&SparseVector<S>, usize)],
    keep_scale: &[S],
) -> (S, MlpGradients<S>) {
    let h = model.hidden_width;
    let k = model.domains.len();
    debug_assert_eq!(keep_scale.len(), h);
    let norm = S::from_count(batch.len() * k);
    let mut grads = MlpGradients {
        emb_rows: BTreeMap::new(),
        hidden_bias: vec![S::zero(); h],
        output_weights: vec![S::zero(); h * k],
        output_bias: vec![S::zero(); k],
    };
    let mut total_loss = S::zero();

    for &(x, target) in batch {
        let mut pre = model.hidden_bias.clone();
        for &(id, w) in x.entries() {
            let row = &model.embedding[id as usize * h..][..h];
            for (p, &e) in pre.iter_mut().zip(row) {
                *p += w * e;
            }
        }
        let mut h_drop = vec![S::zero(); h];
        for i in 0..h {
            h_drop[i] = pre[i].max(S::zero()) * keep_scale[i];
        }
        let mut z = model.output_bias.clone();
        for i in 0..h {
            if h_drop[i] != S::zero() {
                let row = &model.output_weights[i * k..][..k];
                for (zj, &w) in z.iter_mut().zip(row) {
                    *zj += h_drop[i] * w;
                }
            }
        }

        let mut delta = vec![S::zero(); k];
        for j in 0..k {
            let y = if j == target { S::one() } else { S::zero() };
            total_loss += stable_bce(z[j], y);
            delta[j] = (sigmoid(z[j]) - y) / norm;
            grads.output_bias[j] += delta[j];
        }

        let mut dh = vec![S::zero(); h];
        for i in 0..h {
            if keep_scale[i] == S::zero() {
                continue;
            }
            let w_row = &model.output_weights[i * k..][..k];
            let g_row = &mut grads.output_weights[i * k..][..k];
            let mut back = S::zero();
            for j in 0..k {
                g_row[j] += delta[j] * h_drop[i];
                back += delta[j] * w_row[j];
            }
            if pre[i] > S::zero() {
                dh[i] = back * keep_scale[i];
            }
        }
        for i in 0..h {
            grads.hidden_bias[i] += dh[i];
        }
        for &(id, w) in x.entries() {
            let row = grads
                .emb_rows
                .entry(id)
                .or_insert_with(|| vec![S::zero(); h]);
            for (r, &d) in row.iter_mut().zip(&dh) {
                *r += d * w;
            }
        }
    }

    (total_loss / norm, grads)
}

/// Outcome of probing the analytic gradients against finite
/// differences: the worst relative disagreement seen and how many
/// parameters had a nonzero gradient to compare.
#[derive(Debug, Clone, Copy)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
}

enum ParamGroup {
    Embedding,
    HiddenBias,
    OutputWeights,
    OutputBias,
}

fn perturbed_loss(
    model: &MlpModel<f64>,
    batch: &[(&SparseVector<f64>, usize)],
    keep_scale: &[f64],
    group: &ParamGroup,
    idx: usize,
    eps: f64,
) -> f64 {
    let mut m = model.clone();
    match group {
        ParamGroup::Embedding => m.embedding[idx] += eps,
        ParamGroup::HiddenBias => m.hidden_bias[idx] += eps,
        ParamGroup::OutputWeights => m.output_weights[idx] += eps,
        ParamGroup::OutputBias => m.output_bias[idx] += eps,
    }
    batch_loss_and_grads(&m, batch, keep_scale).0
}

/// Compares the analytic gradients of the batch loss against central
/// finite differences at every parameter, under a fixed dropout
/// multiplier vector (`keep_scale[i]` is 0 for a dropped hidden unit,
/// 1/(1-p) for a kept one, all ones for no dropout). Each example is
/// `(text, domain index)`. A diagnostic for validating backprop
/// changes; pairs where both sides are exactly zero are skipped.
pub fn gradient_check(
    model: &MlpModel<f64>,
    examples: &[(&str, usize)],
    keep_scale: &[f64],
) -> Result<GradientCheckReport, ModelError> {
    let h = model.hidden_width;
    let k = model.domains.len();
    if examples.is_empty() {
        return Err(ModelError::Invalid("gradient check needs at least one example".into()));
    }
    if let Some(&(_, target)) = examples.iter().find(|&&(_, t)| t >= k) {
        return Err(ModelError::Invalid(format!(
            "domain index {target} out of range for {k} domains"
        )));
    }
    if keep_scale.len() != h {
        return Err(ModelError::Invalid(format!(
            "keep_scale has {} entries for hidden width {h}",
            keep_scale.len()
        )));
    }
    let encoded: Vec<SparseVector<f64>> = examples
        .iter()
        .map(|&(text, _)| normalized_tfidf(model.vocabulary(), text))
        .collect();
    let batch: Vec<(&SparseVector<f64>, usize)> = encoded
        .iter()
        .zip(examples.iter().map(|&(_, target)| target))
        .collect();
    let (_, grads) = batch_loss_and_grads(model, &batch, keep_scale);

    let analytic: Vec<(ParamGroup, usize, f64)> = (0..model.embedding.len())
        .map(|i| {
            let row = (i / h) as u32;
            let g = grads.emb_rows.get(&row).map_or(0.0, |r| r[i % h]);
            (ParamGroup::Embedding, i, g)
        })
        .chain((0..h).map(|i| (ParamGroup::HiddenBias, i, grads.hidden_bias[i])))
        .chain(
            (0..model.output_weights.len())
                .map(|i| (ParamGroup::OutputWeights, i, grads.output_weights[i])),
        )
        .chain((0..k).map(|i| (ParamGroup::OutputBias, i, grads.output_bias[i])))
        .collect();

    let eps = 1e-5;
    let mut report = GradientCheckReport { max_relative_error: 0.0, checked: 0 };
    for (group, idx, analytic) in analytic {
        let up = perturbed_loss(model, &batch, keep_scale, &group, idx, eps);
        let down = perturbed_loss(model, &batch, keep_scale, &group, idx, -eps);
        let numeric = (up - down) / (2.0 * eps);
        if numeric == 0.0 && analytic == 0.0 {
            continue;
        }
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}

/// Per-parameter Adam moments (β1 0.9, β2 0.999). Lazy over the
/// embedding: only rows with a gradient this batch are stepped, so an
/// untouched row costs nothing and its moments stay frozen. Dense
/// parameters step every batch.
struct AdamState<S> {
    step: i32,
    embedding_m: Vec<S>,
    embedding_v: Vec<S>,
    hidden_bias_m: Vec<S>,
    hidden_bias_v: Vec<S>,
    output_weights_m: Vec<S>,
    output_weights_v: Vec<S>,
    output_bias_m: Vec<S>,
    output_bias_v: Vec<S>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;

impl<S: Scalar> AdamState<S> {
    fn new(emb: usize, hb: usize, ow: usize, ob: usize) -> Self {
        Self {
            step: 0,
            embedding_m: vec![S::zero(); emb],
            embedding_v: vec![S::zero(); emb],
            hidden_bias_m: vec![S::zero(); hb],
            hidden_bias_v: vec![S::zero(); hb],
            output_weights_m: vec![S::zero(); ow],
            output_weights_v: vec![S::zero(); ow],
            output_bias_m: vec![S::zero(); ob],
            output_bias_v: vec![S::zero(); ob],
        }
    }

    fn apply(&mut self, model: &mut MlpModel<S>, grads: &MlpGradients<S>, lr: S) {
        self.step += 1;
        // Bias corrections fold into one effective learning rate.
        let correction =
            (1.0 - ADAM_BETA2.powi(self.step)).sqrt() / (1.0 - ADAM_BETA1.powi(self.step));
        let lr_t = lr * S::from_f64_lossy(correction);
        let h = model.hidden_width;
        for (id, row) in &grads.emb_rows {
            let base = *id as usize * h;
            step(
                &mut model.embedding[base..base + h],
                &mut self.embedding_m[base..base + h],
                &mut self.embedding_v[base..base + h],
                row,
                lr_t,
            );
        }
        step(
            &mut model.hidden_bias,
            &mut self.hidden_bias_m,
            &mut self.hidden_bias_v,
            &grads.hidden_bias,
            lr_t,
        );
        step(
            &mut model.output_weights,
            &mut self.output_weights_m,
            &mut self.output_weights_v,
            &grads.output_weights,
            lr_t,
        );
        step(
            &mut model.output_bias,
            &mut self.output_bias_m,
            &mut self.output_bias_v,
            &grads.output_bias,
            lr_t,
        );
    }
}

fn step<S: Scalar>(weights: &mut [S], m: &mut [S], v: &mut [S], grads: &[S], lr_t: S) {
    let eps = S::from_f64_lossy(1e-8);
    let b1 = S::from_f64_lossy(ADAM_BETA1);
    let b2 = S::from_f64_lossy(ADAM_BETA2);
    let one = S::one();
    for i in 0..grads.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        weights[i] -= lr_t * m[i] / (v[i].sqrt() + eps);
    }
}

struct Snapshot<S> {
    embedding: Vec<S>,
    hidden_bias: Vec<S>,
    output_weights: Vec<S>,
    output_bias: Vec<S>,
}

impl<S: Scalar> Snapshot<S> {
    fn of(model: &MlpModel<S>) -> Self {
        Self {
            embedding: model.embedding.clone(),
            hidden_bias: model.hidden_bias.clone(),
            output_weights: model.output_weights.clone(),
            output_bias: model.output_bias.clone(),
        }
    }

    fn install(self, model: &mut MlpModel<S>) {
        model.embedding = self.embedding;
        model.hidden_bias = self.hidden_bias;
        model.output_weights = self.output_weights;
        model.output_bias = self.output_bias;
    }
}
