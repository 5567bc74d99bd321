//! Seeded k-means: k-means++ initialization, Lloyd refinement, restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Hard clustering of n points: per-point cluster ids, the centers, and the
/// summed squared distance of points to their centers.
#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    pub centers: Matrix,
    pub inertia: f64,
}

/// Best of 10 restarts with default iteration budget and tolerance.
pub fn kmeans(z: &Matrix, k: usize, seed: u64) -> Result<ClusterResult> {
    kmeans_with(z, k, seed, 10, 300, 1e-6)
}

/// Runs `restarts` independent k-means++ / Lloyd rounds (restart r uses seed
/// `seed + r`) and keeps the lowest-inertia result, first found winning ties.
/// Deterministic per seed.
pub fn kmeans_with(
    z: &Matrix,
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterResult> {
    if k == 0 || z.rows() < k {
        return Err(Error::Config(format!(
            "k-means needs 1 <= k <= n, got k={k} with n={}",
            z.rows()
        )));
    }
    if restarts == 0 {
        return Err(Error::Config("k-means needs at least one restart".into()));
    }
    let mut best: Option<ClusterResult> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let run = lloyd_once(z, k, &mut rng, max_iter, tol);
        let better = match &best {
            None => true,
            Some(b) => run.inertia < b.inertia,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn lloyd_once(
    z: &Matrix,
    k: usize,
    rng: &mut ChaCha8Rng,
    max_iter: usize,
    tol: f64,
) -> ClusterResult {
    let mut centers = plus_plus_init(z, k, rng);
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..max_iter {
        let (labels, inertia) = assign(z, &centers);
        // Lloyd steps never increase the objective; a violation means the
        // update or reseeding logic is wrong.
        assert!(
            inertia <= prev_inertia + 1e-9,
            "k-means inertia increased: {prev_inertia} -> {inertia}"
        );
        prev_inertia = inertia;
        let new_centers = recompute_centers(z, &labels, k, &centers);
        let shift = centers.max_abs_diff(&new_centers);
        centers = new_centers;
        if shift < tol {
            break;
        }
    }
    let (labels, inertia) = assign(z, &centers);
    assert!(inertia <= prev_inertia + 1e-9);
    ClusterResult {
        labels,
        centers,
        inertia,
    }
}

/// k-means++: first center uniform, each next center drawn with probability
/// proportional to squared distance from the nearest chosen center.
fn plus_plus_init(z: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = z.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| row_d2(z.row(i), z.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // All remaining mass is zero (duplicate points): fall back to a
            // uniform draw so initialization still terminates.
            rng.random_range(0..n)
        };
        chosen.push(next);
        for i in 0..n {
            d2[i] = d2[i].min(row_d2(z.row(i), z.row(next)));
        }
    }
    let mut centers = Matrix::zeros(k, z.cols());
    for (c, &i) in chosen.iter().enumerate() {
        for j in 0..z.cols() {
            centers.set(c, j, z.get(i, j));
        }
    }
    centers
}

/// Nearest-center assignment (ties to the lowest center index) and the
/// resulting inertia.
fn assign(z: &Matrix, centers: &Matrix) -> (Vec<usize>, f64) {
    let mut labels = vec![0usize; z.rows()];
    let mut inertia = 0.0;
    for i in 0..z.rows() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..centers.rows() {
            let d = row_d2(z.row(i), centers.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
        inertia += best_d;
    }
    (labels, inertia)
}

/// Means per cluster; an empty cluster is re-seeded to the point farthest
/// from its current center (each reseed uses a distinct point).
fn recompute_centers(z: &Matrix, labels: &[usize], k: usize, old: &Matrix) -> Matrix {
    let d = z.cols();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for j in 0..d {
            sums[c * d + j] += z.get(i, j);
        }
    }
    let mut centers = Matrix::zeros(k, d);
    let mut taken = vec![false; z.rows()];
    for c in 0..k {
        if counts[c] > 0 {
            for j in 0..d {
                centers.set(c, j, sums[c * d + j] / counts[c] as f64);
            }
        } else {
            let mut far = 0;
            let mut far_d = -1.0;
            for i in 0..z.rows() {
                if taken[i] {
                    continue;
                }
                let dist = row_d2(z.row(i), old.row(labels[i]));
                if dist > far_d {
                    far_d = dist;
                    far = i;
                }
            }
            taken[far] = true;
            for j in 0..d {
                centers.set(c, j, z.get(far, j));
            }
        }
    }
    centers
}

fn row_d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
