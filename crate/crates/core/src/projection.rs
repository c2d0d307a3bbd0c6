//! Exact t-SNE for embedding analysis.
//!
//! Perplexity calibration by bisection on the Gaussian precision, symmetric
//! joint probabilities, Student-t output affinities, and gradient descent
//! with early exaggeration, a momentum switch and per-coordinate gains.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const ENTROPY_TOLERANCE: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 200;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneParams {
    pub perplexity: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    /// Standard deviation of the random initial layout.
    pub init_sigma: f64,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: 30.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            learning_rate: 200.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            init_sigma: 1e-4,
            seed: 0,
        }
    }
}

impl TsneParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.perplexity >= 2.0 && self.perplexity.is_finite()) {
            return Err(Error::param("perplexity", format!("{} must be at least 2", self.perplexity)));
        }
        for (field, m) in [("initial_momentum", self.initial_momentum), ("final_momentum", self.final_momentum)] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::param(field, format!("{m} outside [0, 1)")));
            }
        }
        if self.iterations <= self.exaggeration_iters {
            return Err(Error::param(
                "iterations",
                format!("{} must exceed exaggeration_iters {}", self.iterations, self.exaggeration_iters),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if !(self.early_exaggeration >= 1.0 && self.early_exaggeration.is_finite()) {
            return Err(Error::param("early_exaggeration", "must be at least 1"));
        }
        if !(self.init_sigma > 0.0 && self.init_sigma.is_finite()) {
            return Err(Error::param("init_sigma", "must be positive"));
        }
        Ok(())
    }
}

/// Row-major `n x n` squared Euclidean distances.
pub fn pairwise_sq_distances<P: AsRef<[f32]>>(points: &[P]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = points[i]
                .as_ref()
                .iter()
                .zip(points[j].as_ref())
                .map(|(&a, &b)| {
                    let x = f64::from(a) - f64::from(b);
                    x * x
                })
                .sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Row-major conditional distributions p_{j|i}; each row sums to 1.
    pub conditional: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Achieved Shannon entropy of each row, in bits.
    pub entropies: Vec<f64>,
    /// Perplexity actually targeted (lowered when n is too small).
    pub perplexity: f64,
}

/// Largest perplexity `n` points support: `(n - 1) / 3`.
pub fn max_perplexity(n: usize) -> f64 {
    (n.saturating_sub(1)) as f64 / 3.0
}

/// Finds, for every point, the Gaussian width whose conditional
/// distribution has entropy `log2(perplexity)`. A perplexity of `n - 1` or
/// more cannot be reached and is lowered to `(n - 1) / 3`; one above
/// `(n - 1) / 3` only draws a warning. Rows whose
/// target cannot be reached (identical points) fall back to the closest
/// achievable distribution; fully degenerate rows are uniform.
pub fn perplexity_calibration(sq_distances: &[f64], n: usize, perplexity: f64) -> Result<Calibration> {
    if n < 2 {
        return Err(Error::param("n", "calibration needs at least two points"));
    }
    if sq_distances.len() != n * n {
        return Err(Error::Dimension {
            expected: n * n,
            received: sq_distances.len(),
        });
    }
    if let Some(i) = sq_distances.iter().position(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::DataIntegrity(format!("distance entry {i} is not a finite non-negative number")));
    }
    if !(perplexity > 1.0) {
        return Err(Error::param("perplexity", format!("{perplexity} must exceed 1")));
    }
    let mut effective = perplexity;
    let reachable = (n - 1) as f64;
    if perplexity >= reachable {
        let bound = max_perplexity(n);
        effective = if bound > 1.0 { bound } else { reachable };
        log::warn!("perplexity {perplexity} unreachable with {n} points, using {effective}");
    } else if perplexity > max_perplexity(n) {
        log::warn!("perplexity {perplexity} is large for {n} points; neighborhoods will be nearly uniform");
    }
    let target = effective.ln();

    let rows: Vec<(Vec<f64>, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| calibrate_row(&sq_distances[i * n..(i + 1) * n], i, target))
        .collect();
    let mut conditional = Vec::with_capacity(n * n);
    let mut sigmas = Vec::with_capacity(n);
    let mut entropies = Vec::with_capacity(n);
    for (row, sigma, h) in rows {
        conditional.extend(row);
        sigmas.push(sigma);
        entropies.push(h / std::f64::consts::LN_2);
    }
    Ok(Calibration {
        conditional,
        sigmas,
        entropies,
        perplexity: effective,
    })
}

/// Row distribution and entropy (nats) at precision `beta`, with distances
/// shifted by the row minimum for stability.
fn row_at(d: &[f64], i: usize, dmin: f64, beta: f64) -> (Vec<f64>, f64) {
    let mut p: Vec<f64> = d
        .iter()
        .enumerate()
        .map(|(j, &v)| if j == i { 0.0 } else { (-(v - dmin) * beta).exp() })
        .collect();
    let sum: f64 = p.iter().sum();
    let mut h = 0.0;
    for v in p.iter_mut() {
        *v /= sum;
        if *v > 0.0 {
            h -= *v * v.ln();
        }
    }
    (p, h)
}

fn calibrate_row(d: &[f64], i: usize, target: f64) -> (Vec<f64>, f64, f64) {
    let (dmin, dmax) = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| (lo.min(v), hi.max(v)));
    let spread = dmax - dmin;
    if spread <= 0.0 {
        // every other point at the same distance: the row is uniform for
        // any width
        let (p, h) = row_at(d, i, dmin, 0.0);
        return (p, 1.0, h);
    }
    // Entropy falls monotonically from ln(n - 1) at beta = 0 towards the
    // log of the number of nearest points as beta grows.
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut beta = 1.0 / spread;
    let mut best = row_at(d, i, dmin, beta);
    for _ in 0..MAX_BISECTION_STEPS {
        let diff = best.1 - target;
        if diff.abs() < ENTROPY_TOLERANCE {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        if !beta.is_finite() || beta > 1e300 {
            break;
        }
        best = row_at(d, i, dmin, beta);
    }
    let sigma = (1.0 / (2.0 * beta)).sqrt();
    (best.0, if sigma.is_finite() { sigma } else { 0.0 }, best.1)
}

/// Symmetric joint probabilities `(p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_probabilities(conditional: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) / (2.0 * n as f64);
        }
    }
    p
}

/// Unnormalized Student-t kernel `1 / (1 + |y_i - y_j|^2)`, zero diagonal.
fn kernel(y: &[[f64; 2]]) -> Vec<f64> {
    let n = y.len();
    let mut w = vec![0.0; n * n];
    w.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                *v = 1.0 / (1.0 + dx * dx + dy * dy);
            }
        }
    });
    w
}

/// KL(P || Q) for the layout `y`; terms with p = 0 contribute nothing.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let w = kernel(y);
    let z: f64 = w.iter().sum();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && p[i * n + j] > 0.0)
                .map(|j| {
                    let pij = p[i * n + j];
                    pij * (pij / (w[i * n + j] / z)).ln()
                })
                .sum::<f64>()
        })
        .sum()
}

/// Analytic gradient `4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)`.
pub fn kl_gradient(p: &[f64], y: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let w = kernel(y);
    gradient_with(p, y, &w, 1.0)
}

fn gradient_with(p: &[f64], y: &[[f64; 2]], w: &[f64], exaggeration: f64) -> Vec<[f64; 2]> {
    let n = y.len();
    let z: f64 = w.iter().sum();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let wij = w[i * n + j];
                let m = (exaggeration * p[i * n + j] - wij / z) * wij;
                g[0] += m * (y[i][0] - y[j][0]);
                g[1] += m * (y[i][1] - y[j][1]);
            }
            [4.0 * g[0], 4.0 * g[1]]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoints {
    pub coords: Vec<[f64; 2]>,
    pub ids: Vec<u64>,
    pub labels: Vec<String>,
    /// KL of the initial layout against the unexaggerated P.
    pub initial_kl: f64,
    pub final_kl: f64,
    pub iterations: usize,
    pub perplexity: f64,
}

/// Projects `points` to 2-D. Ids default to 0..n and labels to empty.
pub fn tsne<P: AsRef<[f32]> + Sync>(points: &[P], params: &TsneParams) -> Result<ProjectedPoints> {
    let ids = (0..points.len() as u64).collect();
    tsne_labeled(points, ids, vec![String::new(); points.len()], params)
}

pub fn tsne_labeled<P: AsRef<[f32]> + Sync>(
    points: &[P],
    ids: Vec<u64>,
    labels: Vec<String>,
    params: &TsneParams,
) -> Result<ProjectedPoints> {
    params.validate()?;
    let n = points.len();
    if n < 5 {
        return Err(Error::param("points", format!("t-SNE needs at least 5 points, got {n}")));
    }
    if ids.len() != n || labels.len() != n {
        return Err(Error::Dimension {
            expected: n,
            received: ids.len().min(labels.len()),
        });
    }
    let dim = points[0].as_ref().len();
    for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                received: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::DataIntegrity(format!("point {i} has a non-finite component")));
        }
    }

    let sq = pairwise_sq_distances(points);
    if sq.iter().all(|&d| d == 0.0) {
        // nothing to separate: the collapsed layout reproduces the uniform P
        log::info!("all {n} points coincide; returning the collapsed layout");
        return Ok(ProjectedPoints {
            coords: vec![[0.0; 2]; n],
            ids,
            labels,
            initial_kl: 0.0,
            final_kl: 0.0,
            iterations: 0,
            perplexity: (n - 1) as f64,
        });
    }
    let mut perplexity = params.perplexity;
    if perplexity > max_perplexity(n) {
        perplexity = max_perplexity(n);
        log::warn!("perplexity {} too large for {n} points, using {perplexity}", params.perplexity);
    }
    let calibration = perplexity_calibration(&sq, n, perplexity)?;
    let p = joint_probabilities(&calibration.conditional, n);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, params.init_sigma).expect("validated sigma");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let initial_kl = kl_divergence(&p, &y);

    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];
    for iteration in 0..params.iterations {
        let exaggeration = if iteration < params.exaggeration_iters {
            params.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iteration < params.momentum_switch_iter {
            params.initial_momentum
        } else {
            params.final_momentum
        };
        let w = kernel(&y);
        let grad = gradient_with(&p, &y, &w, exaggeration);
        for i in 0..n {
            for d in 0..2 {
                let g = grad[i][d];
                gains[i][d] = if (g > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8_f64).max(MIN_GAIN)
                };
                update[i][d] = momentum * update[i][d] - params.learning_rate * gains[i][d] * g;
                y[i][d] += update[i][d];
            }
        }
        let mean = y.iter().fold([0.0; 2], |m, c| [m[0] + c[0], m[1] + c[1]]);
        let mean = [mean[0] / n as f64, mean[1] / n as f64];
        for c in y.iter_mut() {
            c[0] -= mean[0];
            c[1] -= mean[1];
        }
        if y.iter().any(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(Error::Numerical {
                iteration,
                reason: "layout became non-finite".into(),
            });
        }
    }
    let final_kl = kl_divergence(&p, &y);
    if !final_kl.is_finite() {
        return Err(Error::Numerical {
            iteration: params.iterations,
            reason: format!("final KL is {final_kl}"),
        });
    }
    Ok(ProjectedPoints {
        coords: y,
        ids,
        labels,
        initial_kl,
        final_kl: final_kl.max(0.0),
        iterations: params.iterations,
        perplexity: calibration.perplexity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub params: TsneParams,
    pub effective_perplexity: f64,
    pub n: usize,
    pub initial_kl: f64,
    pub final_kl: f64,
    pub iterations: usize,
    pub note: String,
}

impl ProjectedPoints {
    pub fn report(&self, params: &TsneParams, note: impl Into<String>) -> RunReport {
        RunReport {
            params: *params,
            effective_perplexity: self.perplexity,
            n: self.coords.len(),
            initial_kl: self.initial_kl,
            final_kl: self.final_kl,
            iterations: self.iterations,
            note: note.into(),
        }
    }

    /// CSV with header `id,x,y,label`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "x", "y", "label"])?;
        for ((id, c), label) in self.ids.iter().zip(&self.coords).zip(&self.labels) {
            w.write_record([id.to_string(), c[0].to_string(), c[1].to_string(), label.clone()])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    /// Static scatter plot colored by label.
    pub fn to_svg(&self) -> String {
        const SIZE: f64 = 640.0;
        const MARGIN: f64 = 40.0;
        const PALETTE: [&str; 10] = [
            "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
        ];
        let classes: BTreeMap<&str, &str> = {
            let mut names: Vec<&str> = self.labels.iter().map(String::as_str).collect();
            names.sort_unstable();
            names.dedup();
            names.into_iter().enumerate().map(|(i, l)| (l, PALETTE[i % PALETTE.len()])).collect()
        };
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for c in &self.coords {
            x0 = x0.min(c[0]);
            x1 = x1.max(c[0]);
            y0 = y0.min(c[1]);
            y1 = y1.max(c[1]);
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-12);
        let scale = (SIZE - 2.0 * MARGIN) / span;
        let legend_h = 18.0 * classes.len() as f64;
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = SIZE + 180.0,
            h = SIZE.max(legend_h + 2.0 * MARGIN)
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for (c, label) in self.coords.iter().zip(&self.labels) {
            let cx = MARGIN + (c[0] - x0) * scale;
            let cy = SIZE - MARGIN - (c[1] - y0) * scale;
            let _ = writeln!(
                svg,
                r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#,
                classes[label.as_str()]
            );
        }
        for (i, (label, color)) in classes.iter().enumerate() {
            let ly = MARGIN + 18.0 * i as f64;
            let _ = writeln!(svg, r#"<circle cx="{}" cy="{ly}" r="5" fill="{color}"/>"#, SIZE + 10.0);
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
                SIZE + 22.0,
                ly + 4.0,
                xml_escape(if label.is_empty() { "(unlabeled)" } else { label })
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
