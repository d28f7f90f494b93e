//! Evaluation quantities: reconstruction MSE, kernel MMD and mode coverage.

use alloc::vec;
use alloc::vec::Vec;

use crate::agents::{ProposalNet, QNet};
use crate::env::{squared_distance, EnvConfig};
use crate::inference::reconstruct_many;
use crate::{Error, Result};

/// Mean per-dimension squared error between paired points.
pub fn mean_squared_error(predicted: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if predicted.len() != targets.len() || targets.is_empty() {
        return Err(Error::shape("need equally many predictions and targets, at least one"));
    }
    let mut total = 0.0;
    for (p, t) in predicted.iter().zip(targets) {
        if p.len() != t.len() || t.is_empty() {
            return Err(Error::shape("point dimensions differ"));
        }
        total += squared_distance(p, t) / t.len() as f64;
    }
    Ok(total / targets.len() as f64)
}

/// Per-dimension MSE of greedy GC-agent reconstructions of `test`.
pub fn reconstruction_mse(proposal: &ProposalNet, q: &QNet, env: &EnvConfig, test: &[Vec<f64>]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::config("test set is empty"));
    }
    let mut recons = Vec::with_capacity(test.len());
    for chunk in test.chunks(256) {
        let goals: Vec<&[f64]> = chunk.iter().map(|g| g.as_slice()).collect();
        recons.extend(reconstruct_many(proposal, q, env, &goals)?.into_iter().map(|s| s.value));
    }
    mean_squared_error(&recons, test)
}

fn rbf(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    libm::exp(-gamma * squared_distance(u, v))
}

/// Sum of `k(u, v)` over all ordered pairs, optionally skipping `u == v` by
/// position.
fn kernel_sum(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64, skip_diagonal: bool) -> f64 {
    let mut total = 0.0;
    for (i, u) in a.iter().enumerate() {
        for (j, v) in b.iter().enumerate() {
            if !(skip_diagonal && i == j) {
                total += rbf(u, v, gamma);
            }
        }
    }
    total
}

fn check_sets(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64, min: usize) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::config("MMD bandwidth must be positive"));
    }
    if a.len() < min || b.len() < min {
        return Err(Error::config("MMD needs more points per set"));
    }
    let d = a[0].len();
    if a.iter().chain(b).any(|p| p.len() != d) {
        return Err(Error::shape("MMD sets must share one dimension"));
    }
    Ok(())
}

/// Biased (V-statistic) MMD² with kernel `exp(-gamma ||u - v||²)`.
pub fn mmd2_biased(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64) -> Result<f64> {
    check_sets(a, b, gamma, 1)?;
    let (m, n) = (a.len() as f64, b.len() as f64);
    Ok(kernel_sum(a, a, gamma, false) / (m * m) + kernel_sum(b, b, gamma, false) / (n * n)
        - 2.0 * kernel_sum(a, b, gamma, false) / (m * n))
}

/// Unbiased (U-statistic) MMD²; may be slightly negative.
pub fn mmd2_unbiased(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64) -> Result<f64> {
    check_sets(a, b, gamma, 2)?;
    let (m, n) = (a.len() as f64, b.len() as f64);
    Ok(kernel_sum(a, a, gamma, true) / (m * (m - 1.0)) + kernel_sum(b, b, gamma, true) / (n * (n - 1.0))
        - 2.0 * kernel_sum(a, b, gamma, false) / (m * n))
}

/// `1 / median` of the pairwise squared distances of `points`.
pub fn median_heuristic_gamma(points: &[Vec<f64>]) -> Result<f64> {
    let mut d2 = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for (i, u) in points.iter().enumerate() {
        for v in &points[i + 1..] {
            d2.push(squared_distance(u, v));
        }
    }
    if d2.is_empty() {
        return Err(Error::config("median heuristic needs at least two points"));
    }
    d2.sort_by(f64::total_cmp);
    let mid = d2.len() / 2;
    let median = if d2.len() % 2 == 1 { d2[mid] } else { 0.5 * (d2[mid - 1] + d2[mid]) };
    if !(median > 0.0 && median.is_finite()) {
        return Err(Error::config("median pairwise distance is zero"));
    }
    Ok(1.0 / median)
}

/// Fraction of samples assigned to each center: a sample counts for its
/// nearest center (lowest index on ties) if it lies within `radius` of it.
pub fn mode_coverage(samples: &[Vec<f64>], centers: &[Vec<f64>], radius: f64) -> Result<Vec<f64>> {
    if !(radius > 0.0) {
        return Err(Error::config("radius must be positive"));
    }
    if centers.is_empty() {
        return Err(Error::config("no centers"));
    }
    let mut counts = vec![0usize; centers.len()];
    for s in samples {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, c) in centers.iter().enumerate() {
            if c.len() != s.len() {
                return Err(Error::shape("sample and center dimensions differ"));
            }
            let d = squared_distance(s, c);
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        if best_d <= radius * radius {
            counts[best] += 1;
        }
    }
    let n = samples.len().max(1) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}
