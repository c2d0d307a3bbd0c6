//! Point-cloud fixtures and clustering checks for t-SNE tests.

#![allow(dead_code)]

use gnssrag_core::projection::{joint_probabilities, pairwise_sq_distances, perplexity_calibration};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

pub fn joint(points: &[Vec<f32>], perplexity: f64) -> Vec<f64> {
    let n = points.len();
    let c = perplexity_calibration(&pairwise_sq_distances(points), n, perplexity).unwrap();
    joint_probabilities(&c.conditional, n)
}

/// Entropy in bits recomputed from the returned rows.
pub fn row_entropy(row: &[f64]) -> f64 {
    row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

pub fn clusters(seed: u64) -> (Vec<Vec<f32>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..3).map(|_| (0..512).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 10.0 * z }).collect()).collect();
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..30 {
            pts.push(center.iter().map(|&m| { let z: f64 = StandardNormal.sample(&mut rng); (m + 0.5 * z) as f32 }).collect());
            labels.push(c);
        }
    }
    (pts, labels)
}

pub fn d2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Lloyd's k-means from farthest-point seeds grown from `first`. Returns
/// the assignment and its inertia.
pub fn lloyd(coords: &[[f64; 2]], k: usize, first: usize) -> (Vec<usize>, f64) {
    let mut centers = vec![coords[first]];
    while centers.len() < k {
        let far = coords
            .iter()
            .max_by(|a, b| {
                let da = centers.iter().map(|c| d2(a, c)).fold(f64::INFINITY, f64::min);
                let db = centers.iter().map(|c| d2(b, c)).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .unwrap();
        centers.push(*far);
    }
    let mut assign = vec![0; coords.len()];
    for _ in 0..100 {
        for (a, p) in assign.iter_mut().zip(coords) {
            *a = (0..k).min_by(|&i, &j| d2(p, &centers[i]).total_cmp(&d2(p, &centers[j]))).unwrap();
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64; 2]> = coords.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if !members.is_empty() {
                let m = members.len() as f64;
                *center = [members.iter().map(|p| p[0]).sum::<f64>() / m, members.iter().map(|p| p[1]).sum::<f64>() / m];
            }
        }
    }
    let inertia = coords.iter().zip(&assign).map(|(p, &a)| d2(p, &centers[a])).sum();
    (assign, inertia)
}

/// Best of one k-means restart per point.
pub fn kmeans(coords: &[[f64; 2]], k: usize) -> Vec<usize> {
    (0..coords.len())
        .map(|first| lloyd(coords, k, first))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

/// Best agreement over all relabelings of the clusters.
pub fn agreement(truth: &[usize], found: &[usize]) -> f64 {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    perms
        .iter()
        .map(|perm| truth.iter().zip(found).filter(|(&t, &f)| perm[f] == t).count())
        .max()
        .unwrap() as f64
        / truth.len() as f64
}

