//! Batched latency benchmark.
//!
//! Strictly sequential and single-threaded so per-query means stay
//! interpretable; timing wraps only the router call, never data prep.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::models::Router;

use super::EvalError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub batch_sizes: Vec<usize>,
    pub warmup: usize,
    pub iters: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { batch_sizes: vec![1, 32, 64, 128, 256], warmup: 10, iters: 100 }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.batch_sizes.is_empty() {
            return Err(EvalError::InvalidConfig("batch_sizes must not be empty".into()));
        }
        if self.batch_sizes.iter().any(|&b| b == 0) {
            return Err(EvalError::InvalidConfig("batch sizes must be positive".into()));
        }
        if self.iters == 0 {
            return Err(EvalError::InvalidConfig("iters must be positive".into()));
        }
        Ok(())
    }
}

/// Mean seconds per single query at each batch size, plus the model's
/// on-disk footprint for the accuracy/latency/size tradeoff plot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyTable {
    pub label: String,
    pub batch_sizes: Vec<usize>,
    pub mean_seconds_per_query: Vec<f64>,
    pub warmup: usize,
    pub iters: usize,
    pub size_on_disk: u64,
}

impl LatencyTable {
    /// Mean seconds per query at a given batch size, if measured.
    pub fn at_batch(&self, batch: usize) -> Option<f64> {
        self.batch_sizes
            .iter()
            .position(|&b| b == batch)
            .map(|i| self.mean_seconds_per_query[i])
    }
}

/// Times `router.route_batch` over cyclically drawn queries. For each
/// batch size, `warmup` unmeasured batches run first; the mean is then
/// taken over `iters` measured batches of (batch wall time / size).
pub fn bench_latency(
    router: &dyn Router,
    queries: &[&str],
    config: &BenchConfig,
    label: &str,
    size_on_disk: u64,
) -> Result<LatencyTable, EvalError> {
    config.validate()?;
    if queries.is_empty() {
        return Err(EvalError::EmptySet("latency query pool".into()));
    }
    let mut cursor = 0usize;
    let mut next_batch = |b: usize| -> Vec<&str> {
        (0..b)
            .map(|_| {
                let q = queries[cursor];
                cursor = (cursor + 1) % queries.len();
                q
            })
            .collect()
    };
    let mut means = Vec::with_capacity(config.batch_sizes.len());
    for &b in &config.batch_sizes {
        for _ in 0..config.warmup {
            let batch = next_batch(b);
            let _ = router.route_batch(&batch);
        }
        let mut per_query_sum = 0.0f64;
        for _ in 0..config.iters {
            let batch = next_batch(b);
            let start = Instant::now();
            let _ = router.route_batch(&batch);
            per_query_sum += start.elapsed().as_secs_f64() / b as f64;
        }
        means.push(per_query_sum / config.iters as f64);
    }
    Ok(LatencyTable {
        label: label.to_string(),
        batch_sizes: config.batch_sizes.clone(),
        mean_seconds_per_query: means,
        warmup: config.warmup,
        iters: config.iters,
        size_on_disk,
    })
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use crate::models::{Outcome, RouteDecision, RouteError};

    use super::*;

    /// Sleeps a fixed time per BATCH (not per query), so per-query cost
    /// must shrink linearly with batch size.
    struct FixedBatchCost {
        domains: Vec<String>,
        per_batch: Duration,
    }

    impl Router for FixedBatchCost {
        fn domains(&self) -> &[String] {
            &self.domains
        }

        fn route(&self, _text: &str) -> Result<RouteDecision, RouteError> {
            self.route_batch(&[""]).pop().unwrap()
        }

        fn route_batch(&self, texts: &[&str]) -> Vec<Result<RouteDecision, RouteError>> {
            std::thread::sleep(self.per_batch);
            texts
                .iter()
                .map(|_| {
                    Ok(RouteDecision {
                        outcome: Outcome::Reject,
                        scores: self.domains.iter().map(|d| (d.clone(), 0.0)).collect(),
                        calibrated: true,
                    })
                })
                .collect()
        }
    }

    #[test]
    fn ten_millisecond_batches_measure_close_to_truth() {
        let router = FixedBatchCost {
            domains: vec!["law".into()],
            per_batch: Duration::from_millis(10),
        };
        let config = BenchConfig { batch_sizes: vec![1, 100], warmup: 2, iters: 20 };
        let queries = ["a", "b", "c"];
        let table = bench_latency(&router, &queries, &config, "stub", 0).unwrap();
        let at1 = table.at_batch(1).unwrap();
        let at100 = table.at_batch(100).unwrap();
        assert!((at1 - 0.010).abs() <= 0.002, "batch 1: {at1} s/query");
        assert!((at100 - 0.0001).abs() <= 0.00002, "batch 100: {at100} s/query");
    }

    #[test]
    fn default_config_yields_one_row_per_batch_size() {
        let router = FixedBatchCost {
            domains: vec!["law".into()],
            per_batch: Duration::ZERO,
        };
        let config = BenchConfig::default();
        assert_eq!(config.batch_sizes, vec![1, 32, 64, 128, 256]);
        assert_eq!((config.warmup, config.iters), (10, 100));
        let table = bench_latency(&router, &["q"], &config, "noop", 123).unwrap();
        assert_eq!(table.mean_seconds_per_query.len(), 5);
        assert_eq!(table.size_on_disk, 123);
        assert!(table.mean_seconds_per_query.iter().all(|&m| m >= 0.0));
        assert_eq!(table.at_batch(7), None);
    }

    #[test]
    fn bad_configs_and_empty_pools_are_rejected() {
        let router = FixedBatchCost {
            domains: vec!["law".into()],
            per_batch: Duration::ZERO,
        };
        let empty_pool = bench_latency(
            &router,
            &[],
            &BenchConfig::default(),
            "x",
            0,
        );
        assert!(matches!(empty_pool, Err(EvalError::EmptySet(_))));
        let zero_batch = BenchConfig { batch_sizes: vec![0], warmup: 1, iters: 1 };
        assert!(zero_batch.validate().is_err());
        let zero_iters = BenchConfig { batch_sizes: vec![1], warmup: 0, iters: 0 };
        assert!(zero_iters.validate().is_err());
    }
}
