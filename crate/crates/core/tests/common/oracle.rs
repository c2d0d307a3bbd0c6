//! Random vector-store fixtures and an independent brute-force scan.

#![allow(dead_code)]

use gnssrag_core::signalgen::{InterferenceType, JammerSpec};
use gnssrag_core::vectorstore::{Metric, VectorIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

pub fn meta(i: u64) -> JammerSpec {
    let t = InterferenceType::ALL[(i % 7) as usize];
    if t.is_jammer() {
        JammerSpec::new(t, 0.1 + (i % 600) as f64 / 10.0, -10.0 + (i % 21) as f64, 1 + (i % 8) as u8, i).unwrap()
    } else {
        JammerSpec::clean(1 + (i % 8) as u8, i).unwrap()
    }
}

/// Random index with shuffled, sparse ids and a few duplicated vectors.
pub fn build(seed: u64, n: usize, dim: usize, metric: Metric) -> (VectorIndex, Vec<(u64, Vec<f32>)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut index = VectorIndex::with_dimension(dim, metric);
    let mut rows: Vec<(u64, Vec<f32>)> = Vec::new();
    let mut ids: Vec<u64> = (0..n as u64).map(|i| i * 3 + 1).collect();
    ids.shuffle(&mut rng);
    for id in ids {
        let v = if !rows.is_empty() && rng.random_bool(0.05) {
            rows[rng.random_range(0..rows.len())].1.clone()
        } else {
            unit(&mut rng, dim)
        };
        index.insert(id, &v, meta(id)).unwrap();
        rows.push((id, v));
    }
    (index, rows)
}

/// Independent scan: plain f64 sums, full sort.
pub fn brute_force(rows: &[(u64, Vec<f32>)], q: &[f32], k: usize, metric: Metric) -> Vec<u64> {
    let mut scored: Vec<(f64, u64)> = rows
        .iter()
        .map(|(id, v)| {
            let s = match metric {
                Metric::Cosine => v.iter().zip(q).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum(),
                Metric::L2 => v
                    .iter()
                    .zip(q)
                    .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            };
            (s, *id)
        })
        .collect();
    scored.sort_by(|a, b| {
        let o = if metric == Metric::Cosine { b.0.total_cmp(&a.0) } else { a.0.total_cmp(&b.0) };
        o.then(a.1.cmp(&b.1))
    });
    scored.into_iter().take(k).map(|s| s.1).collect()
}

