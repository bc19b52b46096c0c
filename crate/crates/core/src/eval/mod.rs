//! Evaluation methodology: ID accuracy (a rejected in-distribution
//! query counts as wrong), per-set and macro OOD accuracy, the GQR
//! score combining the two, the batched latency benchmark, and report
//! emission.

pub mod bench;
pub mod report;

use std::collections::HashMap;
use std::path::PathBuf;

use indexmap::IndexMap;
use thiserror::Error;

use crate::corpus::{Benchmark, DatasetSplit, SplitRole};
use crate::models::{Outcome, Router};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty evaluation set: {0}")]
    EmptySet(String),
    #[error("split {name:?} has role {found}, expected {expected}")]
    WrongRole { name: String, found: &'static str, expected: &'static str },
    #[error("unsafe set {0:?} is not among the evaluated OOD sets")]
    UnknownUnsafeSet(String),
    #[error("invalid benchmark configuration: {0}")]
    InvalidConfig(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Rounds a percentage to two decimals, ties to even.
pub fn round_percent(x: f64) -> f64 {
    (x * 100.0).round_ties_even() / 100.0
}

/// Harmonic mean of two accuracies in percent, 0 when both are 0.
pub fn gqr_score(acc_id: f64, acc_ood: f64) -> f64 {
    debug_assert!((0.0..=100.0).contains(&acc_id), "acc_id {acc_id} out of range");
    debug_assert!((0.0..=100.0).contains(&acc_ood), "acc_ood {acc_ood} out of range");
    if acc_id + acc_ood == 0.0 {
        return 0.0;
    }
    2.0 * acc_id * acc_ood / (acc_id + acc_ood)
}

/// Outcome counts over the in-distribution test set. `rejected`
/// includes `errors`: a backend failure is scored as a rejection.
/// The three outcome counts partition `total` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IdBreakdown {
    pub correct: usize,
    pub rejected: usize,
    pub misrouted: usize,
    pub errors: usize,
    pub total: usize,
}

impl IdBreakdown {
    pub fn accuracy_percent(&self) -> f64 {
        100.0 * self.correct as f64 / self.total as f64
    }

    pub fn rejection_percent(&self) -> f64 {
        100.0 * self.rejected as f64 / self.total as f64
    }

    pub fn misroute_percent(&self) -> f64 {
        100.0 * self.misrouted as f64 / self.total as f64
    }
}

fn require_role(split: &DatasetSplit, expected: SplitRole) -> Result<(), EvalError> {
    if split.role != expected {
        return Err(EvalError::WrongRole {
            name: split.name.clone(),
            found: split.role.as_str(),
            expected: expected.as_str(),
        });
    }
    Ok(())
}

/// Routes every in-distribution example and tallies the outcome.
pub fn id_breakdown(
    router: &dyn Router,
    splits: &[&DatasetSplit],
) -> Result<IdBreakdown, EvalError> {
    for split in splits {
        require_role(split, SplitRole::TestId)?;
    }
    let mut b = IdBreakdown::default();
    for split in splits {
        for example in &split.examples {
            b.total += 1;
            match router.route(&example.text) {
                Ok(decision) => match decision.outcome {
                    Outcome::Domain(d) if d == example.label => b.correct += 1,
                    Outcome::Domain(_) => b.misrouted += 1,
                    Outcome::Reject => b.rejected += 1,
                },
                Err(_) => {
                    b.errors += 1;
                    b.rejected += 1;
                }
            }
        }
    }
    if b.total == 0 {
        return Err(EvalError::EmptySet("in-distribution test".into()));
    }
    Ok(b)
}

/// Percentage of in-distribution queries routed to their true domain.
pub fn id_accuracy(router: &dyn Router, splits: &[&DatasetSplit]) -> Result<f64, EvalError> {
    id_breakdown(router, splits).map(|b| b.accuracy_percent())
}

fn ood_counts(router: &dyn Router, split: &DatasetSplit) -> Result<(usize, usize), EvalError> {
    require_role(split, SplitRole::TestOod)?;
    if split.examples.is_empty() {
        return Err(EvalError::EmptySet(split.name.clone()));
    }
    let mut rejected = 0usize;
    let mut errors = 0usize;
    for example in &split.examples {
        match router.route(&example.text) {
            Ok(decision) if decision.outcome.is_reject() => rejected += 1,
            Ok(_) => {}
            Err(_) => {
                errors += 1;
                rejected += 1;
            }
        }
    }
    Ok((rejected, errors))
}

/// Percentage of one OOD split's queries that were rejected.
pub fn ood_accuracy_per_set(router: &dyn Router, split: &DatasetSplit) -> Result<f64, EvalError> {
    let (rejected, _) = ood_counts(router, split)?;
    Ok(100.0 * rejected as f64 / split.examples.len() as f64)
}

/// Macro-averages per-set OOD accuracies: the unweighted mean over the
/// unsafe subset (None when no sets are designated unsafe) and over all
/// sets. Per-dataset weighting is deliberate; a large set must not
/// drown out a small one.
pub fn aggregate(
    per_set: &IndexMap<String, f64>,
    unsafe_set: &[String],
) -> Result<(Option<f64>, f64), EvalError> {
    if per_set.is_empty() {
        return Err(EvalError::EmptySet("out-of-distribution sets".into()));
    }
    for name in unsafe_set {
        if !per_set.contains_key(name) {
            return Err(EvalError::UnknownUnsafeSet(name.clone()));
        }
    }
    let mean = |names: &mut dyn Iterator<Item = &String>| -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for name in names {
            sum += per_set[name];
            n += 1;
        }
        sum / n as f64
    };
    let unsafe_avg = if unsafe_set.is_empty() {
        None
    } else {
        Some(mean(&mut unsafe_set.iter()))
    };
    let ood_accuracy = mean(&mut per_set.keys());
    Ok((unsafe_avg, ood_accuracy))
}

/// One model's complete scorecard. All percentages are stored rounded
/// to two decimals (ties to even); `gqr_score` is computed from the
/// unrounded accuracies first, then rounded.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub id_accuracy: f64,
    pub id_breakdown: IdBreakdown,
    pub per_set: IndexMap<String, f64>,
    pub unsafe_avg: Option<f64>,
    pub ood_accuracy: f64,
    pub gqr_score: f64,
    pub error_count: usize,
}

/// Runs the full methodology for one router over a benchmark.
pub fn evaluate(
    router: &dyn Router,
    benchmark: &Benchmark,
    label: &str,
) -> Result<EvalReport, EvalError> {
    let id_splits: Vec<&DatasetSplit> =
        benchmark.splits_with_role(SplitRole::TestId).collect();
    let breakdown = id_breakdown(router, &id_splits)?;
    let mut error_count = breakdown.errors;

    let mut per_set_raw = IndexMap::new();
    for split in benchmark.splits_with_role(SplitRole::TestOod) {
        let (rejected, errors) = ood_counts(router, split)?;
        error_count += errors;
        per_set_raw.insert(
            split.name.clone(),
            100.0 * rejected as f64 / split.examples.len() as f64,
        );
    }
    let (unsafe_avg, ood_accuracy) = aggregate(&per_set_raw, &benchmark.manifest.unsafe_set)?;
    let acc_id = breakdown.accuracy_percent();
    let gqr = gqr_score(acc_id, ood_accuracy);

    Ok(EvalReport {
        label: label.to_string(),
        id_accuracy: round_percent(acc_id),
        id_breakdown: breakdown,
        per_set: per_set_raw.into_iter().map(|(k, v)| (k, round_percent(v))).collect(),
        unsafe_avg: unsafe_avg.map(round_percent),
        ood_accuracy: round_percent(ood_accuracy),
        gqr_score: round_percent(gqr),
        error_count,
    })
}

/// Scripted router for tests and fail-shape experiments: a fixed
/// verdict per known query, transport error for anything scripted as
/// failing, reject for anything unknown.
#[derive(Debug, Clone)]
pub struct ScriptedRouter {
    domains: Vec<String>,
    verdicts: HashMap<String, ScriptedVerdict>,
    fallback: ScriptedVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptedVerdict {
    Domain(String),
    Reject,
    Fail,
}

impl ScriptedRouter {
    pub fn new(
        domains: Vec<String>,
        verdicts: impl IntoIterator<Item = (String, ScriptedVerdict)>,
        fallback: ScriptedVerdict,
    ) -> Self {
        Self { domains, verdicts: verdicts.into_iter().collect(), fallback }
    }

    pub fn always_reject(domains: Vec<String>) -> Self {
        Self::new(domains, [], ScriptedVerdict::Reject)
    }

    /// Routes every query to its true label: the exact-label oracle.
    pub fn oracle(domains: Vec<String>, examples: &[&crate::corpus::LabeledExample]) -> Self {
        let verdicts = examples
            .iter()
            .map(|e| (e.text.clone(), ScriptedVerdict::Domain(e.label.clone())))
            .collect::<Vec<_>>();
        Self::new(domains, verdicts, ScriptedVerdict::Reject)
    }
}

impl Router for ScriptedRouter {
    fn domains(&self) -> &[String] {
        &self.domains
    }

    fn route(&self, text: &str) -> Result<crate::models::RouteDecision, crate::models::RouteError> {
        let verdict = self.verdicts.get(text).unwrap_or(&self.fallback);
        let outcome = match verdict {
            ScriptedVerdict::Domain(d) => Outcome::Domain(d.clone()),
            ScriptedVerdict::Reject => Outcome::Reject,
            ScriptedVerdict::Fail => {
                return Err(crate::models::RouteError::Transport("scripted failure".into()))
            }
        };
        let scores = self
            .domains
            .iter()
            .map(|d| {
                let s = if matches!(&outcome, Outcome::Domain(c) if c == d) { 1.0 } else { 0.0 };
                (d.clone(), s)
            })
            .collect();
        Ok(crate::models::RouteDecision { outcome, scores, calibrated: false })
    }
}
