//! K-means with k-means++ seeding over the queried non-target features.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::squared_euclidean;

const SHIFT_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    /// assignment[i] is the centroid index of input point i.
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

/// Lloyd's algorithm with k-means++ seeding. The effective cluster count is
/// min(w, number of distinct points); empty clusters are reseeded at the point
/// farthest from its assigned centroid. Ties in the nearest-centroid search go
/// to the lowest centroid index. Deterministic given the seed.
pub fn kmeans(points: &[Vec<f64>], w: usize, seed: u64) -> Result<KMeansResult> {
    kmeans_restarts(points, w, seed, 1)
}

/// Runs `restarts` independently seeded k-means fits and keeps the lowest
/// inertia.
pub fn kmeans_restarts(
    points: &[Vec<f64>],
    w: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::EmptyInput("kmeans: no points".into()));
    }
    if w == 0 {
        return Err(Error::EmptyInput("kmeans: w must be >= 1".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let run = kmeans_once(points, w, seed.wrapping_add(r as u64));
        match &best {
            Some(b) if b.inertia <= run.inertia => {}
            _ => best = Some(run),
        }
    }
    Ok(best.unwrap())
}

fn kmeans_once(points: &[Vec<f64>], w: usize, seed: u64) -> KMeansResult {
    let distinct = count_distinct(points);
    let k = w.min(distinct);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);

    let mut assignment = vec![0usize; points.len()];
    let mut iterations = 0;
    loop {
        assign_nearest(points, &centroids, &mut assignment);
        repair_empty_clusters(points, &mut centroids, &mut assignment);

        let next = recompute_centroids(points, &assignment, k);
        let shift: f64 = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| squared_euclidean(a, b).sqrt())
            .fold(0.0_f64, f64::max);
        centroids = next;
        iterations += 1;
        if shift < SHIFT_TOL || iterations >= MAX_ITERS {
            break;
        }
    }
    assign_nearest(points, &centroids, &mut assignment);
    repair_empty_clusters(points, &mut centroids, &mut assignment);
    refine_single_moves(points, &mut centroids, &mut assignment);
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &c)| squared_euclidean(p, &centroids[c]))
        .sum();
    KMeansResult {
        centroids,
        assignment,
        inertia,
        iterations,
    }
}

fn count_distinct(points: &[Vec<f64>]) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !seen.contains(&p) {
            seen.push(p);
        }
    }
    seen.len()
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    let mut dist_sq: Vec<f64> = points
        .iter()
        .map(|p| squared_euclidean(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = dist_sq.iter().sum();
        let next = if total > 0.0 {
            let w = WeightedIndex::new(&dist_sq).expect("non-negative weights");
            w.sample(rng)
        } else {
            // all remaining mass at existing centroids; pick any new point
            dist_sq.iter().position(|&d| d > 0.0).unwrap_or(0)
        };
        centroids.push(points[next].clone());
        for (d, p) in dist_sq.iter_mut().zip(points) {
            *d = d.min(squared_euclidean(p, centroids.last().unwrap()));
        }
    }
    centroids
}

fn assign_nearest(points: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &mut [usize]) {
    for (p, a) in points.iter().zip(assignment.iter_mut()) {
        let mut best = 0;
        let mut best_d = squared_euclidean(p, &centroids[0]);
        for (c, centroid) in centroids.iter().enumerate().skip(1) {
            let d = squared_euclidean(p, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        *a = best;
    }
}

fn repair_empty_clusters(points: &[Vec<f64>], centroids: &mut [Vec<f64>], assignment: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        // reseed at the point farthest from its assigned centroid
        let far = points
            .iter()
            .enumerate()
            .max_by(|(i, p), (j, q)| {
                let dp = squared_euclidean(p, &centroids[assignment[*i]]);
                let dq = squared_euclidean(q, &centroids[assignment[*j]]);
                dp.partial_cmp(&dq).unwrap().then(j.cmp(i))
            })
            .map(|(i, _)| i)
            .unwrap();
        centroids[empty] = points[far].clone();
        assign_nearest(points, centroids, assignment);
    }
}

/// Post-Lloyd refinement: moves single points between clusters whenever the
/// move strictly lowers total inertia (Hartigan's criterion with exact
/// centroid updates). Lloyd alone stalls in local optima that a single-point
/// move escapes; sweeps run in point order until no move improves.
fn refine_single_moves(points: &[Vec<f64>], centroids: &mut [Vec<f64>], assignment: &mut [usize]) {
    let k = centroids.len();
    if k < 2 {
        return;
    }
    let d = points[0].len();
    let mut counts = vec![0usize; k];
    let mut sums = vec![vec![0.0; d]; k];
    for (p, &a) in points.iter().zip(assignment.iter()) {
        counts[a] += 1;
        for j in 0..d {
            sums[a][j] += p[j];
        }
    }
    let centroid_of = |sums: &[Vec<f64>], counts: &[usize], c: usize| -> Vec<f64> {
        sums[c].iter().map(|s| s / counts[c] as f64).collect()
    };
    for (c, centroid) in centroids.iter_mut().enumerate() {
        *centroid = centroid_of(&sums, &counts, c);
    }

    let mut improved = true;
    let mut sweeps = 0;
    while improved && sweeps < MAX_ITERS {
        improved = false;
        sweeps += 1;
        for (i, p) in points.iter().enumerate() {
            let from = assignment[i];
            if counts[from] <= 1 {
                continue;
            }
            let n_from = counts[from] as f64;
            let removal_gain =
                n_from / (n_from - 1.0) * squared_euclidean(p, &centroids[from]);
            let mut best_to = from;
            let mut best_delta = -1e-12;
            for to in 0..k {
                if to == from {
                    continue;
                }
                let n_to = counts[to] as f64;
                let insert_cost = n_to / (n_to + 1.0) * squared_euclidean(p, &centroids[to]);
                let delta = insert_cost - removal_gain;
                if delta < best_delta {
                    best_delta = delta;
                    best_to = to;
                }
            }
            if best_to != from {
                counts[from] -= 1;
                counts[best_to] += 1;
                for j in 0..d {
                    sums[from][j] -= p[j];
                    sums[best_to][j] += p[j];
                }
                centroids[from] = centroid_of(&sums, &counts, from);
                centroids[best_to] = centroid_of(&sums, &counts, best_to);
                assignment[i] = best_to;
                improved = true;
            }
        }
    }
    // final nearest-centroid pass keeps the assignment invariant
    assign_nearest(points, centroids, assignment);
    repair_empty_clusters(points, centroids, assignment);
}

fn recompute_centroids(points: &[Vec<f64>], assignment: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = points[0].len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        for i in 0..d {
            sums[a][i] += p[i];
        }
        counts[a] += 1;
    }
    for (sum, &count) in sums.iter_mut().zip(&counts) {
        if count > 0 {
            for x in sum.iter_mut() {
                *x /= count as f64;
            }
        }
    }
    sums
}

/// Groups point indices by assigned cluster, dropping none (the result never
/// contains empty clusters by construction).
pub fn cluster_members(result: &KMeansResult) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); result.centroids.len()];
    for (i, &a) in result.assignment.iter().enumerate() {
        groups[a].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups
}
