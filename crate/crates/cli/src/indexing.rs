//! Embedding a dataset, splitting it and building an index from it.

use std::collections::BTreeMap;

use gnssrag_core::signalgen::{Dataset, DatasetManifest, InterferenceType, JammerSpec};
use gnssrag_core::tasks::LabeledQuery;
use gnssrag_core::vectorstore::{Metric, VectorIndex};
use rayon::prelude::*;

use crate::error::{AppError, AtStage, Stage};
use crate::pipeline::Embedder;

/// One embedded dataset record.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: u64,
    pub vector: Vec<f32>,
    pub spec: JammerSpec,
}

impl From<Record> for LabeledQuery {
    fn from(r: Record) -> Self {
        LabeledQuery {
            id: r.id,
            vector: r.vector,
            truth: r.spec,
        }
    }
}

/// Train and test ids, each in manifest order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<u64>,
    pub test: Vec<u64>,
}

/// Holds out the last `test_per_class` entries of every class, and keeps at
/// most `train_per_class` of the rest when given.
pub fn split_per_class(manifest: &DatasetManifest, train_per_class: Option<usize>, test_per_class: usize) -> Split {
    let mut by_class: BTreeMap<InterferenceType, Vec<u64>> = BTreeMap::new();
    for e in &manifest.entries {
        by_class.entry(e.spec.intf_type).or_default().push(e.id);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for ids in by_class.values() {
        let cut = ids.len().saturating_sub(test_per_class);
        let kept = train_per_class.map_or(cut, |n| n.min(cut));
        train.extend_from_slice(&ids[..kept]);
        test.extend_from_slice(&ids[cut..]);
    }
    let order: BTreeMap<u64, usize> = manifest.entries.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
    train.sort_by_key(|id| order[id]);
    test.sort_by_key(|id| order[id]);
    Split { train, test }
}

/// Loads and embeds `ids` in parallel; the output keeps their order.
pub fn embed_records(dataset: &Dataset, ids: &[u64], embedder: &Embedder) -> Result<Vec<Record>, AppError> {
    ids.par_iter()
        .map(|&id| {
            let snap = dataset.load(id).at(Stage::Load)?;
            let spec = *snap.spec().at(Stage::Load)?;
            let embedding = embedder.embed(&snap).at(Stage::Embed)?;
            Ok(Record {
                id,
                vector: embedding.vector().to_vec(),
                spec,
            })
        })
        .collect()
}

pub fn index_records(records: &[Record], metric: Metric) -> Result<VectorIndex, AppError> {
    let dimension = records.first().map_or(gnssrag_core::embedder::EMBEDDING_DIM, |r| r.vector.len());
    let mut index = VectorIndex::with_dimension(dimension, metric);
    for r in records {
        index.insert(r.id, &r.vector, r.spec).at(Stage::Index)?;
    }
    Ok(index)
}

pub fn build_index(dataset: &Dataset, ids: &[u64], embedder: &Embedder, metric: Metric) -> Result<VectorIndex, AppError> {
    index_records(&embed_records(dataset, ids, embedder)?, metric)
}
