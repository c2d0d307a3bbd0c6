//! Accuracy and latency benchmarks.

use std::time::Instant;

use gnssrag_core::embedder::{embed_baseline, EMBEDDING_DIM};
use gnssrag_core::signalgen::{generate_snapshot, DatasetConfig, InterferenceType};
use gnssrag_core::tasks::{evaluate, knn_classify, Evaluation, LabeledQuery, Metrics, UnanimousSubset};
use gnssrag_core::vectorstore::{Metric, VectorIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{AppError, AtStage, Stage};
use crate::indexing::{index_records, Record};

/// Record count of the full-size reference corpus.
pub const REFERENCE_CORPUS_RECORDS: usize = 42_592;
/// Per-query budget for embed plus search.
pub const LATENCY_BUDGET_MS: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub metrics: Metrics,
    pub unanimous: UnanimousSubset,
    pub train: usize,
    pub test: usize,
    /// Type accuracy of the training items queried against their own
    /// index at k = 1.
    pub leave_one_in_accuracy: f64,
}

/// Indexes `train`, scores `test` at `k`, and runs the leave-one-in check.
pub fn accuracy(train: &[Record], test: Vec<Record>, k: usize, metric: Metric) -> Result<(AccuracyReport, Evaluation), AppError> {
    let index = index_records(train, metric)?;
    let queries: Vec<LabeledQuery> = test.into_iter().map(Into::into).collect();
    let evaluation = evaluate(&index, &queries, k).at(Stage::Evaluate)?;
    let self_hits = train
        .par_iter()
        .map(|r| knn_classify(&index, &r.vector, 1).map(|c| c.intf_type == r.spec.intf_type))
        .collect::<gnssrag_core::Result<Vec<bool>>>()
        .at(Stage::Evaluate)?;
    let leave_one_in_accuracy = if train.is_empty() {
        0.0
    } else {
        100.0 * self_hits.iter().filter(|&&hit| hit).count() as f64 / train.len() as f64
    };
    let report = AccuracyReport {
        metrics: evaluation.metrics.clone(),
        unanimous: evaluation.unanimous,
        train: train.len(),
        test: queries.len(),
        leave_one_in_accuracy,
    };
    Ok((report, evaluation))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyConfig {
    pub records: usize,
    pub queries: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            records: REFERENCE_CORPUS_RECORDS,
            queries: 100,
            k: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub config: LatencyConfig,
    /// Embed plus search, per query.
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub embed_median_ms: f64,
    pub search_median_ms: f64,
    pub budget_ms: f64,
}

impl LatencyReport {
    pub fn within_budget(&self) -> bool {
        self.median_ms < self.budget_ms
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Index of `records` random unit vectors. Flat search cost does not depend
/// on the stored values, so a synthetic corpus stands in for a real one of
/// the same size.
pub fn synthetic_index(records: usize, seed: u64, metric: Metric) -> Result<VectorIndex, AppError> {
    let per_class = records.div_ceil(InterferenceType::ALL.len());
    let specs = DatasetConfig::uniform(per_class, seed).specs().at(Stage::Index)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut index = VectorIndex::new(metric);
    let mut v = vec![0f32; EMBEDDING_DIM];
    for spec in specs.iter().take(records) {
        let mut norm = 0.0f64;
        for x in v.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = z as f32;
            norm += z * z;
        }
        let scale = 1.0 / norm.sqrt();
        v.iter_mut().for_each(|x| *x = (f64::from(*x) * scale) as f32);
        index.insert(spec.seed, &v, *spec).at(Stage::Index)?;
    }
    Ok(index)
}

/// Median wall time of baseline embedding plus top-k search over
/// generated query snapshots. Snapshot synthesis is not timed.
pub fn latency(config: &LatencyConfig) -> Result<LatencyReport, AppError> {
    if config.queries == 0 || config.records == 0 {
        return Err(AppError::Usage("latency bench needs at least one record and one query".into()));
    }
    let index = synthetic_index(config.records, config.seed, Metric::Cosine)?;
    let query_specs = DatasetConfig::uniform(config.queries.div_ceil(InterferenceType::ALL.len()), config.seed ^ 0x5eed)
        .specs()
        .at(Stage::Load)?;
    let snapshots = query_specs
        .iter()
        .take(config.queries)
        .map(generate_snapshot)
        .collect::<gnssrag_core::Result<Vec<_>>>()
        .at(Stage::Load)?;

    // warm-up: builds the projection matrix and touches the index once
    let warm = embed_baseline(&snapshots[0]).at(Stage::Embed)?;
    index.search(warm.vector(), config.k).at(Stage::Retrieve)?;

    let mut totals = Vec::with_capacity(snapshots.len());
    let mut embeds = Vec::with_capacity(snapshots.len());
    let mut searches = Vec::with_capacity(snapshots.len());
    for snap in &snapshots {
        let started = Instant::now();
        let embedding = embed_baseline(snap).at(Stage::Embed)?;
        let embedded = Instant::now();
        let hits = index.search(embedding.vector(), config.k).at(Stage::Retrieve)?;
        let done = Instant::now();
        std::hint::black_box(hits);
        embeds.push((embedded - started).as_secs_f64() * 1e3);
        searches.push((done - embedded).as_secs_f64() * 1e3);
        totals.push((done - started).as_secs_f64() * 1e3);
    }
    let median_ms = median(&mut totals);
    Ok(LatencyReport {
        config: *config,
        median_ms,
        p95_ms: percentile(&totals, 0.95),
        max_ms: *totals.last().expect("non-empty"),
        embed_median_ms: median(&mut embeds),
        search_median_ms: median(&mut searches),
        budget_ms: LATENCY_BUDGET_MS,
    })
}
