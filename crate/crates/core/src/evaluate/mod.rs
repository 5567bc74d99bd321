//! Inference and scoring: impute missing view latents, fuse them into a
//! common representation, cluster it, and grade the result against ground
//! truth labels.

mod kmeans;
mod metrics;

pub use kmeans::{kmeans, kmeans_with, ClusterResult};
pub use metrics::{acc, ari, nmi, score, MetricsReport};

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::networks::{cross_predict, encode, ModelBundle};
use crate::numerics::Matrix;

/// How the two per-view latent blocks are fused into one representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuseMode {
    /// Side-by-side blocks, n x (d1 + d2). Keeps view-specific structure.
    Concat,
    /// Elementwise mean of the two blocks, n x d.
    Average,
}

/// Encodes both views, fills each missing row's latent with the cross
/// predictor applied to the observed view, and concatenates the blocks.
pub fn build_common_representation(bundle: &ModelBundle, ds: &MultiViewDataset) -> Result<Matrix> {
    build_common_representation_with(bundle, ds, FuseMode::Concat)
}

pub fn build_common_representation_with(
    bundle: &ModelBundle,
    ds: &MultiViewDataset,
    mode: FuseMode,
) -> Result<Matrix> {
    let mut latents: Vec<Matrix> = (0..2)
        .map(|v| encode(bundle, v, ds.view(v)))
        .collect::<Result<_>>()?;
    for v in 0..2 {
        let other = 1 - v;
        let missing: Vec<usize> = (0..ds.n()).filter(|&i| !ds.mask().observed(i, v)).collect();
        if missing.is_empty() {
            continue;
        }
        // Dataset invariant: a row missing here is observed in the other view.
        let source = latents[other].gather_rows(&missing);
        let predicted = cross_predict(bundle, other, &source)?;
        for (local, &row) in missing.iter().enumerate() {
            for j in 0..predicted.cols() {
                latents[v].set(row, j, predicted.get(local, j));
            }
        }
    }
    match mode {
        FuseMode::Concat => latents[0].hcat(&latents[1]),
        FuseMode::Average => Ok(latents[0].add(&latents[1])?.scale(0.5)),
    }
}

/// Projects rows onto the top two principal components (power iteration with
/// deflation). Columns are ordered by explained variance; each component's
/// sign is fixed so its largest-magnitude entry is positive. Zero-variance
/// directions project to zero.
pub fn pca_2d(z: &Matrix) -> Result<Matrix> {
    if z.cols() < 2 {
        return Err(Error::Config(format!(
            "2-component projection needs >= 2 input columns, got {}",
            z.cols()
        )));
    }
    let n = z.rows();
    let d = z.cols();
    let mut centered = z.clone();
    for j in 0..d {
        let mean = (0..n).map(|i| z.get(i, j)).sum::<f64>() / n as f64;
        for i in 0..n {
            centered.set(i, j, z.get(i, j) - mean);
        }
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut cov = centered.transpose().matmul(&centered)?.scale(1.0 / denom);

    let mut components = Matrix::zeros(d, 2);
    for comp in 0..2 {
        let v = dominant_eigenvector(&cov);
        if let Some((v, lambda)) = v {
            for (i, &x) in v.iter().enumerate() {
                components.set(i, comp, x);
            }
            // Deflate: cov -= lambda * v v^T.
            for i in 0..d {
                for j in 0..d {
                    cov.set(i, j, cov.get(i, j) - lambda * v[i] * v[j]);
                }
            }
        }
        // else: no variance left; the component stays zero.
    }
    centered.matmul(&components)
}

/// Power iteration on a symmetric PSD matrix. Returns None when the matrix
/// has (numerically) no dominant direction left.
fn dominant_eigenvector(m: &Matrix) -> Option<(Vec<f64>, f64)> {
    let d = m.rows();
    // Deterministic, generically non-orthogonal start.
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + (i as f64 + 1.0).sqrt()).collect();
    normalize_in_place(&mut v)?;
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let mut next = vec![0.0; d];
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += m.get(i, j) * v[j];
            }
            next[i] = acc;
        }
        lambda = next.iter().zip(&v).map(|(a, b)| a * b).sum();
        normalize_in_place(&mut next)?;
        let shift: f64 = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if shift < 1e-13 {
            break;
        }
    }
    if lambda <= 1e-12 {
        return None;
    }
    // Canonical sign: largest-magnitude entry positive.
    let pivot = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)?;
    if v[pivot] < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    Some((v, lambda))
}

fn normalize_in_place(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-300 {
        return None;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Some(())
}
