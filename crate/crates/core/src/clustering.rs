//! k-means sparsification of large source stores.
//!
//! k-means++ seeding followed by Lloyd iterations. The assignment step runs
//! data-parallel over points; inertia and centroid sums are reduced in point
//! order so results do not depend on the execution mode.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{rng_for, squared_distance, Matrix};
use crate::par::{self, Execution};
use crate::store::SourceStore;

/// Default cap on the number of search entities in a source store.
pub const DEFAULT_CAP: usize = 10_000;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Matrix,
    pub assignment: Vec<usize>,
    /// Sum of squared distances of points to their assigned centroid.
    pub inertia: f64,
    /// Inertia after each assignment step, in order.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }
}

/// Nearest centroid, lowest index on ties.
fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = squared_distance(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus(points: &Matrix, k: usize, rng: &mut impl Rng) -> Matrix {
    let n = points.rows();
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;
    let mut dist: Vec<f64> = (0..n).map(|i| squared_distance(points.row(i), points.row(first))).collect();
    while chosen.len() < k {
        let total: f64 = (0..n).filter(|&i| !is_chosen[i]).map(|i| dist[i]).sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for i in (0..n).filter(|&i| !is_chosen[i]) {
                if dist[i] > 0.0 {
                    pick = Some(i);
                    target -= dist[i];
                    if target <= 0.0 {
                        break;
                    }
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            // remaining points coincide with chosen ones
            let free: Vec<usize> = (0..n).filter(|&i| !is_chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        is_chosen[next] = true;
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(next)));
        }
    }
    let dim = points.cols();
    let mut centroids = Matrix::zeros(k, dim);
    for (c, &p) in chosen.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(points.row(p));
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeds, until the assignment stops
/// changing or `max_iter` updates have run.
pub fn kmeans(points: &Matrix, k: usize, max_iter: usize, seed: u64) -> Result<ClusterModel> {
    kmeans_with(Execution::default(), points, k, max_iter, seed)
}

pub fn kmeans_with(exec: Execution, points: &Matrix, k: usize, max_iter: usize, seed: u64) -> Result<ClusterModel> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must be in 1..={n}")));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    if !points.is_finite() {
        return Err(Error::NonFinite("k-means input"));
    }
    let dim = points.cols();
    let mut rng = rng_for(seed, 3);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut assignment: Vec<usize> = Vec::new();
    let mut distances: Vec<f64>;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let assigned = par::map_range(exec, n, |i| nearest(points.row(i), &centroids));
        let new_assignment: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        distances = assigned.iter().map(|a| a.1).collect();
        history.push(distances.iter().sum());
        if new_assignment == assignment {
            converged = true;
            break;
        }
        assignment = new_assignment;
        if iterations == max_iter {
            break;
        }
        iterations += 1;

        // update step
        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            } else {
                // empty cluster: reseed at the point farthest from its centroid
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None::<usize>, |best, i| match best {
                        Some(b) if distances[b] >= distances[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("k <= n leaves a free point");
                taken[far] = true;
                centroids.row_mut(c).copy_from_slice(points.row(far));
            }
        }
    }

    let inertia = distances.iter().sum();
    if !converged {
        // keep centroids equal to the means of the reported assignment
        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in (0..k).filter(|&c| counts[c] > 0) {
            let inv = 1.0 / counts[c] as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
    }
    let inertia = if converged {
        inertia
    } else {
        assignment
            .iter()
            .enumerate()
            .map(|(i, &c)| squared_distance(points.row(i), centroids.row(c)))
            .sum()
    };
    Ok(ClusterModel {
        centroids,
        assignment,
        inertia,
        inertia_history: history,
        iterations,
        converged,
    })
}

/// Replace a store larger than `cap` by `cap` k-means centroids.
pub fn sparsify_source(store: &SourceStore, cap: usize, seed: u64) -> Result<SourceStore> {
    sparsify_source_with(store, cap, DEFAULT_MAX_ITER, seed)
}

pub fn sparsify_source_with(store: &SourceStore, cap: usize, max_iter: usize, seed: u64) -> Result<SourceStore> {
    if store.len() <= cap {
        return Ok(store.clone());
    }
    let model = kmeans(store.matrix(), cap, max_iter, seed)?;
    let out = SourceStore::new(model.centroids, store.tag.clone())?;
    Ok(out.with_centroids(true))
}
