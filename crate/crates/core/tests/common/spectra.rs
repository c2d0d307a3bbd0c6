//! Measurements on the interference layer of generated snapshots.

#![allow(dead_code)]

use gnssrag_core::signalgen::{Snapshot, CHANNELS, TIME_BINS};

/// Interference energy per channel, summed over time.
pub fn channel_energy(snap: &Snapshot) -> Vec<f64> {
    let j = snap.interference_power().unwrap();
    j.chunks(TIME_BINS).map(|c| c.iter().sum()).collect()
}

/// Power-weighted center channel per time bin, for bins that carry energy.
pub fn centers(snap: &Snapshot) -> Vec<(f64, f64)> {
    let j = snap.interference_power().unwrap();
    (0..TIME_BINS)
        .filter_map(|t| {
            let (mut w, mut m) = (0.0, 0.0);
            for c in 0..CHANNELS {
                let v = j[c * TIME_BINS + t];
                w += v;
                m += v * c as f64;
            }
            (w > 0.0).then(|| (t as f64, m / w))
        })
        .collect()
}

pub fn r_squared(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

