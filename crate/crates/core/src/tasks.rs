//! Retrieval-based prediction of interference type, subjammer class, power
//! and bandwidth, plus the benchmark harness that scores predictions.
//!
//! Classification is a majority vote over the top-k neighbors; a tie goes
//! to the tied class whose best-ranked neighbor comes first. Regression is
//! a similarity-weighted mean over the non-clean neighbors with weights
//! `max(s, 0) + 1e-6`, clamped to the label ranges. The templated describer
//! reuses [`estimate_parameters`] so both report identical numbers.

use std::collections::{BTreeMap, HashSet};
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::io_at;
use crate::signalgen::{InterferenceType, JammerSpec, Subjammer, BANDWIDTH_RANGE, POWER_RANGE};
use crate::vectorstore::{Metric, SearchHit, VectorIndex};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const WEIGHT_EPSILON: f64 = 1e-6;

pub fn normalize_power(power: f64) -> f64 {
    (power - POWER_RANGE.0) / (POWER_RANGE.1 - POWER_RANGE.0)
}

pub fn normalize_bandwidth(bandwidth: f64) -> f64 {
    (bandwidth - BANDWIDTH_RANGE.0) / (BANDWIDTH_RANGE.1 - BANDWIDTH_RANGE.0)
}

/// Majority label over `hits` (best first) and the per-label counts.
pub fn majority<L: Ord + Copy>(hits: &[SearchHit], label: impl Fn(&JammerSpec) -> L) -> Option<(L, BTreeMap<L, usize>)> {
    let mut votes = BTreeMap::new();
    for hit in hits {
        *votes.entry(label(&hit.meta)).or_insert(0usize) += 1;
    }
    let top = *votes.values().max()?;
    // first hit whose class carries the top count
    let winner = hits
        .iter()
        .map(|h| label(&h.meta))
        .find(|l| votes[l] == top)?;
    Some((winner, votes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub intf_type: InterferenceType,
    pub subjammer: Subjammer,
    pub votes: BTreeMap<InterferenceType, usize>,
    pub neighbor_ids: Vec<u64>,
}

pub fn classify_hits(hits: &[SearchHit]) -> Result<Classification> {
    let (intf_type, votes) =
        majority(hits, |m| m.intf_type).ok_or_else(|| Error::State("no neighbors to vote".into()))?;
    let (subjammer, _) = majority(hits, JammerSpec::subjammer).expect("non-empty hits");
    Ok(Classification {
        intf_type,
        subjammer,
        votes,
        neighbor_ids: hits.iter().map(|h| h.id).collect(),
    })
}

pub fn knn_classify(index: &VectorIndex, query: &[f32], k: usize) -> Result<Classification> {
    classify_hits(&index.search(query, k)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub power: f64,
    pub bandwidth: f64,
    /// Neighbors that contributed (clean neighbors carry no parameters).
    pub support: usize,
}

/// Similarity-weighted power and bandwidth over the non-clean `hits`.
/// Under L2 the distance is first mapped to its cosine equivalent.
pub fn estimate_parameters(hits: &[SearchHit], metric: Metric) -> Result<Estimate> {
    let (mut wsum, mut psum, mut bsum, mut support) = (0.0, 0.0, 0.0, 0);
    for hit in hits.iter().filter(|h| h.meta.intf_type.is_jammer()) {
        let w = metric.similarity(hit.score).max(0.0) + WEIGHT_EPSILON;
        wsum += w;
        psum += w * hit.meta.power;
        bsum += w * hit.meta.bandwidth;
        support += 1;
    }
    if support == 0 {
        return Err(Error::NotEstimable(
            "every neighbor is clean, so there is no power or bandwidth to average".into(),
        ));
    }
    Ok(Estimate {
        power: (psum / wsum).clamp(POWER_RANGE.0, POWER_RANGE.1),
        bandwidth: (bsum / wsum).clamp(BANDWIDTH_RANGE.0, BANDWIDTH_RANGE.1),
        support,
    })
}

pub fn knn_regress(index: &VectorIndex, query: &[f32], k: usize) -> Result<Estimate> {
    estimate_parameters(&index.search(query, k)?, index.metric())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub intf_type: InterferenceType,
    pub subjammer: Subjammer,
    /// `None` when no neighbor carries parameters.
    pub power: Option<f64>,
    pub bandwidth: Option<f64>,
    pub votes: BTreeMap<InterferenceType, usize>,
    pub neighbor_ids: Vec<u64>,
}

impl Prediction {
    pub fn from_hits(hits: &[SearchHit], metric: Metric) -> Result<Self> {
        let class = classify_hits(hits)?;
        let estimate = match estimate_parameters(hits, metric) {
            Ok(e) => Some(e),
            Err(Error::NotEstimable(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Prediction {
            intf_type: class.intf_type,
            subjammer: class.subjammer,
            power: estimate.map(|e| e.power),
            bandwidth: estimate.map(|e| e.bandwidth),
            votes: class.votes,
            neighbor_ids: class.neighbor_ids,
        })
    }
}

pub fn knn_predict(index: &VectorIndex, query: &[f32], k: usize) -> Result<Prediction> {
    Prediction::from_hits(&index.search(query, k)?, index.metric())
}

/// A held-out item: its id, embedding and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledQuery {
    pub id: u64,
    pub vector: Vec<f32>,
    pub truth: JammerSpec,
}

/// Anything that can label a held-out item. External models plug in here
/// (or bypass it entirely by emitting a prediction CSV).
pub trait Predictor: Sync {
    fn predict(&self, query: &LabeledQuery) -> Result<Prediction>;
}

/// k-nearest-neighbor predictor over an index.
#[derive(Debug, Clone, Copy)]
pub struct KnnPredictor<'a> {
    pub index: &'a VectorIndex,
    pub k: usize,
}

impl Predictor for KnnPredictor<'_> {
    fn predict(&self, query: &LabeledQuery) -> Result<Prediction> {
        knn_predict(self.index, &query.vector, self.k)
    }
}

/// One row of the prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: u64,
    pub true_type: InterferenceType,
    pub pred_type: InterferenceType,
    pub true_sub: Subjammer,
    pub pred_sub: Subjammer,
    pub true_power: Option<f64>,
    pub pred_power: Option<f64>,
    pub true_bw: Option<f64>,
    pub pred_bw: Option<f64>,
}

impl PredictionRecord {
    pub fn new(id: u64, truth: &JammerSpec, pred: &Prediction) -> Self {
        let jammer = truth.intf_type.is_jammer();
        PredictionRecord {
            id,
            true_type: truth.intf_type,
            pred_type: pred.intf_type,
            true_sub: truth.subjammer(),
            pred_sub: pred.subjammer,
            true_power: jammer.then_some(truth.power),
            pred_power: pred.power,
            true_bw: jammer.then_some(truth.bandwidth),
            pred_bw: pred.bandwidth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub type_accuracy: f64,
    pub subjammer_accuracy: f64,
    /// On targets normalized to [0, 1]: power (p + 10) / 20,
    /// bandwidth (b - 0.1) / 59.9.
    pub power_mse: f64,
    pub bandwidth_mse: f64,
    pub n: usize,
    /// Unset when scoring an external prediction dump.
    pub k: Option<usize>,
    pub metric: Option<Metric>,
}

impl Metrics {
    /// Scores prediction rows. Accuracies cover every row; the MSEs cover
    /// rows whose true class carries parameters. A missing parameter
    /// prediction is scored as the mid-range value 0.5.
    pub fn from_records(records: &[PredictionRecord], k: Option<usize>, metric: Option<Metric>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::param("records", "nothing to score"));
        }
        let n = records.len();
        let type_hits = records.iter().filter(|r| r.true_type == r.pred_type).count();
        let sub_hits = records.iter().filter(|r| r.true_sub == r.pred_sub).count();
        let (power_mse, bandwidth_mse) = parameter_mse(records.iter());
        Ok(Metrics {
            type_accuracy: 100.0 * type_hits as f64 / n as f64,
            subjammer_accuracy: 100.0 * sub_hits as f64 / n as f64,
            power_mse,
            bandwidth_mse,
            n,
            k,
            metric,
        })
    }
}

/// Normalized MSE of power and bandwidth over the rows that carry true
/// parameters; `(0, 0)` when there are none.
pub fn parameter_mse<'a>(records: impl Iterator<Item = &'a PredictionRecord>) -> (f64, f64) {
    let (mut p, mut b, mut count) = (0.0, 0.0, 0usize);
    for r in records {
        let (Some(tp), Some(tb)) = (r.true_power, r.true_bw) else {
            continue;
        };
        let pp = r.pred_power.map_or(0.5, normalize_power);
        let pb = r.pred_bw.map_or(0.5, normalize_bandwidth);
        p += (normalize_power(tp) - pp).powi(2);
        b += (normalize_bandwidth(tb) - pb).powi(2);
        count += 1;
    }
    if count == 0 {
        (0.0, 0.0)
    } else {
        (p / count as f64, b / count as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub metrics: Metrics,
    /// Rows in query order.
    pub records: Vec<PredictionRecord>,
    /// Parameter MSE restricted to items whose neighbors all share the
    /// item's predicted (jammer) type.
    pub unanimous: UnanimousSubset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnanimousSubset {
    pub n: usize,
    pub power_mse: f64,
    pub bandwidth_mse: f64,
}

/// Refuses any query whose id is also stored in the index.
pub fn check_disjoint(index: &VectorIndex, queries: &[LabeledQuery]) -> Result<()> {
    let leaked: Vec<u64> = queries.iter().map(|q| q.id).filter(|&id| index.contains(id)).collect();
    match leaked.first() {
        Some(&first) => Err(Error::Leakage {
            count: leaked.len(),
            first,
        }),
        None => Ok(()),
    }
}

pub fn evaluate(index: &VectorIndex, queries: &[LabeledQuery], k: usize) -> Result<Evaluation> {
    check_disjoint(index, queries)?;
    let predictor = KnnPredictor { index, k };
    let mut evaluation = evaluate_with(&predictor, queries)?;
    evaluation.metrics.k = Some(k);
    evaluation.metrics.metric = Some(index.metric());
    Ok(evaluation)
}

/// Scores any predictor on `queries`. The caller is responsible for the
/// train/test split; [`evaluate`] checks it for the k-NN predictor.
pub fn evaluate_with(predictor: &dyn Predictor, queries: &[LabeledQuery]) -> Result<Evaluation> {
    let predictions = queries
        .par_iter()
        .map(|q| predictor.predict(q))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<PredictionRecord> = queries
        .iter()
        .zip(&predictions)
        .map(|(q, p)| PredictionRecord::new(q.id, &q.truth, p))
        .collect();
    let unanimous_rows: Vec<&PredictionRecord> = records
        .iter()
        .zip(&predictions)
        .filter(|(_, p)| p.intf_type.is_jammer() && p.votes.len() == 1)
        .map(|(r, _)| r)
        .collect();
    let (power_mse, bandwidth_mse) = parameter_mse(unanimous_rows.iter().copied());
    let unanimous = UnanimousSubset {
        n: unanimous_rows.iter().filter(|r| r.true_power.is_some()).count(),
        power_mse,
        bandwidth_mse,
    };
    Ok(Evaluation {
        metrics: Metrics::from_records(&records, None, None)?,
        records,
        unanimous,
    })
}

pub fn write_predictions<W: io::Write>(writer: W, records: &[PredictionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_predictions<R: io::Read>(reader: R) -> Result<Vec<PredictionRecord>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(Error::from)
}

pub fn save_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_at(path))?;
    write_predictions(io::BufWriter::new(file), records)
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = std::fs::File::open(path).map_err(io_at(path))?;
    read_predictions(io::BufReader::new(file))
}

/// Scores an externally produced prediction dump with the same metric code.
pub fn score_predictions(path: &Path) -> Result<Metrics> {
    let records = load_predictions(path)?;
    let mut seen = HashSet::new();
    if let Some(r) = records.iter().find(|r| !seen.insert(r.id)) {
        return Err(Error::DuplicateId(r.id));
    }
    Metrics::from_records(&records, None, None)
}
