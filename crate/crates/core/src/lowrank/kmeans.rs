//! Lloyd's k-means with k-means++ seeding, in input feature space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::kernel::SampleSet;

/// Relative objective change below which Lloyd iterations stop.
pub const KMEANS_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    /// Cluster index of every sample.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Largest member-to-centroid distance per cluster.
    pub radii: Vec<f64>,
    pub sizes: Vec<usize>,
    /// `sum_s (1/|V_s|) sum_{i,j in V_s} |x_i - x_j|^2` after seeding and
    /// after each Lloyd iteration.
    pub objective_history: Vec<f64>,
}

impl Partition {
    pub fn clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("at least one objective value")
    }

    /// Sample indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.clusters()];
        for (i, &a) in self.assignments.iter().enumerate() {
            out[a].push(i);
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(x, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_centroids(data: &SampleSet, c: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.rows();
    let mut centroids = vec![data.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), &centroids[0])).collect();
    while centroids.len() < c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // every point coincides with a centroid
            rng.random_range(0..n)
        };
        let mu = data.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), &mu));
        }
        centroids.push(mu);
    }
    centroids
}

fn update_centroids(data: &SampleSet, assignments: &[usize], c: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = data.cols();
    let mut sums = vec![vec![0.0; d]; c];
    let mut sizes = vec![0usize; c];
    for (i, &a) in assignments.iter().enumerate() {
        sizes[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(data.row(i)) {
            *s += x;
        }
    }
    for (s, &m) in sums.iter_mut().zip(&sizes) {
        if m > 0 {
            s.iter_mut().for_each(|v| *v /= m as f64);
        }
    }
    (sums, sizes)
}

/// Moves the point of the largest cluster farthest from its centroid into
/// each empty cluster.
fn repair_empty(data: &SampleSet, assignments: &mut [usize], c: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    loop {
        let (centroids, sizes) = update_centroids(data, assignments, c);
        let Some(empty) = sizes.iter().position(|&m| m == 0) else {
            return (centroids, sizes);
        };
        let largest = (0..c).max_by_key(|&s| (sizes[s], std::cmp::Reverse(s))).expect("c >= 1");
        let far = (0..assignments.len())
            .filter(|&i| assignments[i] == largest)
            .max_by(|&a, &b| {
                sq_dist(data.row(a), &centroids[largest])
                    .total_cmp(&sq_dist(data.row(b), &centroids[largest]))
                    .then(b.cmp(&a))
            })
            .expect("largest cluster is non-empty");
        assignments[far] = empty;
    }
}

fn sse(data: &SampleSet, assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(data.row(i), &centroids[a]))
        .sum()
}

/// Partitions `data` into `c` clusters.
pub fn kmeans_partition(data: &SampleSet, c: usize, seed: u64, max_iters: usize) -> Result<Partition> {
    let n = data.rows();
    if c == 0 || c > n {
        return Err(invalid(format!("cluster count must lie in 1..={n}, got {c}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(data, c, &mut rng);
    let mut assignments: Vec<usize> = vec![0; n];
    let mut history = Vec::new();

    for _ in 0..=max_iters {
        assignments
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, a)| *a = nearest(data.row(i), &centroids).0);
        let (mu, _) = repair_empty(data, &mut assignments, c);
        centroids = mu;
        // D^kmeans = 2 * within-cluster sum of squares
        let objective = 2.0 * sse(data, &assignments, &centroids);
        let done = history
            .last()
            .is_some_and(|&prev: &f64| prev - objective <= KMEANS_TOLERANCE * prev.abs());
        history.push(objective);
        if done {
            break;
        }
    }

    let (centroids, sizes) = update_centroids(data, &assignments, c);
    let mut radii = vec![0.0f64; c];
    for (i, &a) in assignments.iter().enumerate() {
        radii[a] = radii[a].max(sq_dist(data.row(i), &centroids[a]).sqrt());
    }
    Ok(Partition {
        assignments,
        centroids,
        radii,
        sizes,
        objective_history: history,
    })
}
