//! k-means with k-means++ seeding, Lloyd iterations, a Hartigan refinement
//! pass, and restarts.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansParams {
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

/// Clusters `points` into `q` groups and returns the centroids.
pub fn kmeans(points: &[Vec<f64>], q: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    Ok(kmeans_with(points, q, seed, &KMeansParams::default())?.centroids)
}

/// Runs `params.restarts` seeded restarts and keeps the lowest-inertia
/// clustering (earliest restart on ties). Every returned centroid is the mean
/// of the points assigned to it.
pub fn kmeans_with(
    points: &[Vec<f64>],
    q: usize,
    seed: u64,
    params: &KMeansParams,
) -> Result<Clustering> {
    if q == 0 {
        return Err(Error::Config("number of clusters must be >= 1".into()));
    }
    if points.len() < q {
        return Err(Error::InsufficientData {
            needed: q,
            got: points.len(),
        });
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::dim(dim, bad.len()));
    }
    let mut best: Option<Clustering> = None;
    for restart in 0..params.restarts.max(1) {
        let c = lloyd(points, q, seed, restart as u64, params.max_iterations);
        if best.as_ref().is_none_or(|b| c.inertia < b.inertia) {
            best = Some(c);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd(points: &[Vec<f64>], q: usize, seed: u64, restart: u64, max_iter: usize) -> Clustering {
    let mut centroids = plus_plus_init(points, q, seed, restart);
    let mut assignments = assign(points, &centroids);
    let mut converged = false;
    for _ in 0..max_iter {
        update(points, &mut centroids, &mut assignments);
        let next = assign(points, &centroids);
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    if !converged {
        update(points, &mut centroids, &mut assignments);
    }
    hartigan(points, &mut centroids, &mut assignments, max_iter);
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    Clustering {
        centroids,
        assignments,
        inertia,
    }
}

/// Single-point moves that lower the within-cluster sum of squares, applied
/// until none is left. Moving `x` from cluster `a` to `b` changes the cost by
/// `n_b/(n_b+1)·|x-c_b|² - n_a/(n_a-1)·|x-c_a|²`. A stable result is also a
/// Lloyd fixed point.
fn hartigan(
    points: &[Vec<f64>],
    centroids: &mut [Vec<f64>],
    assignments: &mut [usize],
    max_passes: usize,
) {
    let q = centroids.len();
    let mut counts = vec![0usize; q];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for _ in 0..max_passes {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let na = counts[a] as f64;
            let leave = na / (na - 1.0) * sq_dist(p, &centroids[a]);
            let mut best: Option<(usize, f64)> = None;
            for b in (0..q).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let delta = nb / (nb + 1.0) * sq_dist(p, &centroids[b]) - leave;
                if delta < -1e-12 * (1.0 + leave) && best.is_none_or(|(_, d)| delta < d) {
                    best = Some((b, delta));
                }
            }
            if let Some((b, _)) = best {
                let nb = counts[b] as f64;
                for (c, v) in centroids[a].iter_mut().zip(p) {
                    *c = (*c * na - v) / (na - 1.0);
                }
                for (c, v) in centroids[b].iter_mut().zip(p) {
                    *c = (*c * nb + v) / (nb + 1.0);
                }
                counts[a] -= 1;
                counts[b] += 1;
                assignments[i] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    // Recompute means exactly to shed incremental rounding.
    update(points, centroids, assignments);
}

fn plus_plus_init(points: &[Vec<f64>], q: usize, seed: u64, restart: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, rng::mix(&[0x6b6d, restart]));
    let mut centroids = Vec::with_capacity(q);
    centroids.push(points[r.random_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < q {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = r.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if *w > 0.0 && target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // Guard against landing on a zero-weight tail through rounding.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|w| *w > 0.0).expect("total > 0");
            }
            chosen
        } else {
            r.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centroids)).collect()
}

/// Index of the nearest centroid; ties go to the lower index.
pub(crate) fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

/// Recomputes centroids as cluster means. An empty cluster takes the point
/// farthest from its own centroid among clusters that can spare one.
fn update(points: &[Vec<f64>], centroids: &mut [Vec<f64>], assignments: &mut [usize]) {
    let q = centroids.len();
    let mut counts = vec![0usize; q];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for k in 0..q {
        if counts[k] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[a]);
            if far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.expect("points.len() >= q leaves a donor cluster");
        counts[assignments[i]] -= 1;
        assignments[i] = k;
        counts[k] = 1;
    }
    for c in centroids.iter_mut() {
        c.iter_mut().for_each(|v| *v = 0.0);
    }
    for (p, &a) in points.iter().zip(assignments.iter()) {
        for (c, v) in centroids[a].iter_mut().zip(p) {
            *c += v;
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= n as f64);
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
