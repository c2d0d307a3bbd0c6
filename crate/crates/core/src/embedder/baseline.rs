//! Deterministic spectral featurizer.
//!
//! Per-channel mean power (dB) relative to the snapshot's own floor estimate,
//! clamped at zero, then a fixed Gaussian random projection 1024 -> 512 and
//! L2 normalization. Measuring relative to the estimated floor makes the
//! features invariant to a constant dB offset of the whole snapshot.
//!
//! Noise-only channels are anchored near +1 dB rather than at zero. The
//! floor then acts as a reference component, so the direction of the
//! embedding still encodes how far the interference rises above it.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Embedding, EmbeddingSource, EMBEDDING_DIM};
use crate::signalgen::{db_to_linear, linear_to_db, Snapshot, CHANNELS};
use crate::Result;

pub const PROJECTION_SEED: u64 = 42;
/// Bumped whenever the featurizer changes in a way that invalidates stored
/// indexes.
pub const PROJECTION_VERSION: u32 = 1;

/// The floor is estimated as this quantile of the per-channel mean powers.
/// Wide jammers cover at most 60% of the channels, so the 10th percentile
/// always lands in noise.
const FLOOR_QUANTILE: f64 = 0.10;
/// Feature value assigned to the floor estimate.
const FLOOR_REFERENCE_DB: f64 = 1.0;

/// Row-major `EMBEDDING_DIM x CHANNELS` projection, entries N(0,1)/sqrt(512).
pub fn projection_matrix() -> &'static [f64] {
    static MATRIX: OnceLock<Vec<f64>> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
        let scale = 1.0 / (EMBEDDING_DIM as f64).sqrt();
        (0..EMBEDDING_DIM * CHANNELS)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect()
    })
}

/// Floor-relative per-channel mean power in dB, clamped at 0. Never all
/// zero: at least 90% of the channels sit at or above the reference.
pub fn channel_features(snap: &Snapshot) -> Vec<f64> {
    let means: Vec<f64> = (0..CHANNELS)
        .map(|c| {
            let row = snap.channel(c);
            let mean = row.iter().map(|&v| db_to_linear(v)).sum::<f64>() / row.len() as f64;
            linear_to_db(mean)
        })
        .collect();
    let mut sorted = means.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[((CHANNELS - 1) as f64 * FLOOR_QUANTILE) as usize];
    means
        .into_iter()
        .map(|m| (m - floor + FLOOR_REFERENCE_DB).max(0.0))
        .collect()
}

fn project(features: &[f64]) -> Vec<f64> {
    projection_matrix()
        .chunks_exact(CHANNELS)
        .map(|row| row.iter().zip(features).map(|(w, f)| w * f).sum())
        .collect()
}

pub fn embed_baseline(snap: &Snapshot) -> Result<Embedding> {
    let projected = project(&channel_features(snap));
    Embedding::from_raw(snap.id, &projected, EmbeddingSource::Baseline)
}
