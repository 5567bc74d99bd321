//! Two-view datasets: presence masking, min-max normalization, a synthetic
//! mixture generator, and the CSV/label-file formats.
//!
//! The masking protocol: a missing rate of `r` removes `round(r * n)` rows
//! from the complete set (round half to even, so the count is reproducible
//! across implementations); every incomplete row keeps exactly one view,
//! chosen uniformly. Complete-row selection is label-independent.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Separation between synthetic mixture means. Large enough that noiseless
/// two-component data is k-means-separable in either raw view, small enough
/// that the half-missing benchmark does not saturate accuracy.
const SYNTH_MEAN_SCALE: f64 = 6.0;

/// Per-row view presence; rows x views booleans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    views: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn all_observed(rows: usize, views: usize) -> Mask {
        Mask {
            rows,
            views,
            bits: vec![true; rows * views],
        }
    }

    /// Builds a mask from row-major presence bits; every row must keep at
    /// least one observed view.
    pub fn from_bits(rows: usize, views: usize, bits: Vec<bool>) -> Result<Mask> {
        if bits.len() != rows * views {
            return Err(Error::Config(format!(
                "mask needs {} bits, got {}",
                rows * views,
                bits.len()
            )));
        }
        let mask = Mask { rows, views, bits };
        for i in 0..rows {
            if (0..views).all(|v| !mask.observed(i, v)) {
                return Err(Error::Config(format!("mask row {i} observes no view")));
            }
        }
        Ok(mask)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn views(&self) -> usize {
        self.views
    }

    #[inline]
    pub fn observed(&self, row: usize, view: usize) -> bool {
        self.bits[row * self.views + view]
    }

    fn set(&mut self, row: usize, view: usize, v: bool) {
        self.bits[row * self.views + view] = v;
    }

    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .filter(|&i| (0..self.views).all(|v| self.observed(i, v)))
            .collect()
    }

    pub fn observed_rows(&self, view: usize) -> Vec<usize> {
        (0..self.rows).filter(|&i| self.observed(i, view)).collect()
    }

    pub fn count_complete(&self) -> usize {
        (0..self.rows)
            .filter(|&i| (0..self.views).all(|v| self.observed(i, v)))
            .count()
    }
}

/// Missing-rate specification: the fraction of rows stripped to one view.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaskSpec {
    pub missing_rate: f64,
    pub seed: u64,
}

impl MaskSpec {
    pub fn new(missing_rate: f64, seed: u64) -> Result<MaskSpec> {
        if !(0.0..=1.0).contains(&missing_rate) || missing_rate.is_nan() {
            return Err(Error::Config(format!(
                "missing_rate must lie in [0,1], got {missing_rate}"
            )));
        }
        Ok(MaskSpec { missing_rate, seed })
    }
}

/// Draws a presence mask with exactly `n - round(rate * n)` complete rows;
/// each incomplete row keeps one uniformly chosen view. If a view would end
/// up with no observed rows (possible only without complete rows), the last
/// incomplete row is flipped to it, so both views are nonempty whenever
/// `n >= 2`.
pub fn generate_mask(n: usize, num_views: usize, spec: &MaskSpec) -> Result<Mask> {
    if num_views != 2 {
        return Err(Error::Config(format!(
            "only two-view masking is supported, got {num_views} views"
        )));
    }
    if n == 0 {
        return Err(Error::Config("mask needs at least one row".into()));
    }
    MaskSpec::new(spec.missing_rate, spec.seed)?;
    let missing = (spec.missing_rate * n as f64).round_ties_even() as usize;
    let missing = missing.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut mask = Mask::all_observed(n, num_views);
    let incomplete = &order[..missing];
    for &row in incomplete {
        let keep = rng.random_range(0..num_views);
        for v in 0..num_views {
            mask.set(row, v, v == keep);
        }
    }
    if missing == n && missing >= 2 {
        for v in 0..num_views {
            if mask.observed_rows(v).is_empty() {
                let last = *incomplete.last().expect("missing >= 2");
                for w in 0..num_views {
                    mask.set(last, w, w == v);
                }
            }
        }
    }
    Ok(mask)
}

/// Feature matrices per view plus per-row view presence and optional labels.
#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    views: Vec<Matrix>,
    mask: Mask,
    labels: Option<Vec<usize>>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<Matrix>, mask: Mask, labels: Option<Vec<usize>>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Config("dataset needs at least one view".into()));
        }
        let n = views[0].rows();
        for (i, v) in views.iter().enumerate() {
            if v.rows() != n {
                return Err(Error::RowCountMismatch(format!(
                    "view 0 has {n} rows, view {i} has {}",
                    v.rows()
                )));
            }
        }
        if mask.rows() != n || mask.views() != views.len() {
            return Err(Error::RowCountMismatch(format!(
                "mask is {}x{}, dataset is {}x{}",
                mask.rows(),
                mask.views(),
                n,
                views.len()
            )));
        }
        for i in 0..n {
            if (0..mask.views()).all(|v| !mask.observed(i, v)) {
                return Err(Error::Config(format!(
                    "mask row {i} observes no view at all"
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::RowCountMismatch(format!(
                    "{} labels for {n} rows",
                    l.len()
                )));
            }
        }
        Ok(MultiViewDataset {
            views,
            mask,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.views[0].rows()
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn view(&self, v: usize) -> &Matrix {
        &self.views[v]
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|m| m.cols()).collect()
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Same data under a different presence mask.
    pub fn with_mask(&self, mask: Mask) -> Result<MultiViewDataset> {
        MultiViewDataset::new(self.views.clone(), mask, self.labels.clone())
    }
}

/// Loads one CSV per view (header line ignored, comma-separated floats) plus
/// an optional label file; the mask starts all-observed.
pub fn load_views<P: AsRef<Path>>(paths: &[P], label_path: Option<P>) -> Result<MultiViewDataset> {
    if paths.is_empty() {
        return Err(Error::Config("no view files given".into()));
    }
    let mut views = Vec::with_capacity(paths.len());
    let mut counts = Vec::new();
    for p in paths {
        let m = read_view_csv(p.as_ref())?;
        counts.push((p.as_ref().display().to_string(), m.rows()));
        views.push(m);
    }
    let n0 = counts[0].1;
    if let Some((path, n)) = counts.iter().find(|(_, n)| *n != n0) {
        return Err(Error::RowCountMismatch(format!(
            "{} has {} rows but {} has {n} rows",
            counts[0].0, n0, path
        )));
    }
    let labels = match label_path {
        Some(p) => {
            let l = read_labels(p.as_ref())?;
            if l.len() != n0 {
                return Err(Error::RowCountMismatch(format!(
                    "{} labels for {n0} rows",
                    l.len()
                )));
            }
            Some(l)
        }
        None => None,
    };
    let mask = Mask::all_observed(n0, views.len());
    MultiViewDataset::new(views, mask, labels)
}

fn read_view_csv(path: &Path) -> Result<Matrix> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                col: col + 1,
                msg: format!("expected a number, got {:?}", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    col: col + 1,
                    msg: "non-finite value".into(),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            col: 1,
            msg: "no data rows after the header".into(),
        });
    }
    let cols = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: i + 2,
            col: r.len().max(1),
            msg: format!("row has {} cells, expected {cols}", r.len()),
        });
    }
    Matrix::from_rows(&rows)
}

pub fn write_view_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..m.cols()).map(|j| format!("f{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// One integer per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: i64 = t.parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            col: 1,
            msg: format!("expected an integer label, got {t:?}"),
        })?;
        if v < 0 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                col: 1,
                msg: format!("labels must be non-negative, got {v}"),
            });
        }
        labels.push(v as usize);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// 0/1 cells, one row per sample, one column per view, no header.
pub fn write_mask_csv(path: &Path, mask: &Mask) -> Result<()> {
    let mut out = String::new();
    for i in 0..mask.rows() {
        let row: Vec<&str> = (0..mask.views())
            .map(|v| if mask.observed(i, v) { "1" } else { "0" })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_mask_csv(path: &Path) -> Result<Mask> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in line.split(',').enumerate() {
            match cell.trim() {
                "0" => row.push(false),
                "1" => row.push(true),
                other => {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        col: col + 1,
                        msg: format!("expected 0 or 1, got {other:?}"),
                    })
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            col: 1,
            msg: "empty mask file".into(),
        });
    }
    let views = rows[0].len();
    let mut bits = Vec::with_capacity(rows.len() * views);
    for r in &rows {
        if r.len() != views {
            return Err(Error::RowCountMismatch(format!(
                "mask rows disagree on view count: {} vs {views}",
                r.len()
            )));
        }
        bits.extend_from_slice(r);
    }
    Mask::from_bits(rows.len(), views, bits)
}

/// Min-max scales every feature column to [0,1]; constant columns map to 0.
/// Idempotent, and the fixed point of repeated application.
pub fn normalize(ds: &MultiViewDataset) -> MultiViewDataset {
    let views = ds
        .views
        .iter()
        .map(|m| {
            let mut out = m.clone();
            for j in 0..m.cols() {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for i in 0..m.rows() {
                    lo = lo.min(m.get(i, j));
                    hi = hi.max(m.get(i, j));
                }
                let span = hi - lo;
                for i in 0..m.rows() {
                    let v = if span == 0.0 {
                        0.0
                    } else {
                        (m.get(i, j) - lo) / span
                    };
                    out.set(i, j, v);
                }
            }
            out
        })
        .collect();
    MultiViewDataset {
        views,
        mask: ds.mask.clone(),
        labels: ds.labels.clone(),
    }
}

/// Balanced k-component Gaussian mixture in a k-dim latent space (means at
/// `SYNTH_MEAN_SCALE * e_j`, unit covariance), pushed through two distinct
/// random linear maps into d1- and d2-dim views with additive feature noise.
/// Component of row i is `i mod k`, so sizes differ by at most one.
pub fn synth_two_view(
    n: usize,
    k: usize,
    d1: usize,
    d2: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<MultiViewDataset> {
    if k < 2 || n < k {
        return Err(Error::Config(format!("need n >= k >= 2, got n={n}, k={k}")));
    }
    if d1 == 0 || d2 == 0 {
        return Err(Error::Config("view dims must be positive".into()));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::Config(format!(
            "noise_sd must be >= 0, got {noise_sd}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();

    let mut latent = Matrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            let noise: f64 = rng.sample(StandardNormal);
            let mean = if labels[i] == j {
                SYNTH_MEAN_SCALE
            } else {
                0.0
            };
            latent.set(i, j, mean + noise);
        }
    }

    let map_scale = 1.0 / (k as f64).sqrt();
    let mut sample_map = |rows: usize, cols: usize| -> Matrix {
        let mut w = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let g: f64 = rng.sample(StandardNormal);
                w.set(i, j, g * map_scale);
            }
        }
        w
    };
    let w1 = sample_map(k, d1);
    let w2 = sample_map(k, d2);

    let mut views = Vec::with_capacity(2);
    for w in [&w1, &w2] {
        let mut x = latent.matmul(w).expect("latent cols = map rows");
        if noise_sd > 0.0 {
            for v in x.data_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v += noise_sd * g;
            }
        }
        views.push(x);
    }

    MultiViewDataset::new(views, Mask::all_observed(n, 2), Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn zero_rate_observes_everything() {
        let mask = generate_mask(17, 2, &MaskSpec::new(0.0, 3).unwrap()).unwrap();
        assert_eq!(mask.count_complete(), 17);
    }

    #[test]
    fn half_rate_on_2386_rows_keeps_1193_complete() {
        let mask = generate_mask(2386, 2, &MaskSpec::new(0.5, 9).unwrap()).unwrap();
        assert_eq!(mask.count_complete(), 1193);
    }

    #[test]
    fn complete_count_uses_round_half_to_even() {
        // 10 * 0.25 = 2.5 -> 2 missing; 10 * 0.35 = 3.5 -> 4 missing.
        let m1 = generate_mask(10, 2, &MaskSpec::new(0.25, 1).unwrap()).unwrap();
        assert_eq!(m1.count_complete(), 8);
        let m2 = generate_mask(10, 2, &MaskSpec::new(0.35, 1).unwrap()).unwrap();
        assert_eq!(m2.count_complete(), 6);
    }

    #[test]
    fn full_rate_leaves_single_view_rows_and_both_views_nonempty() {
        for seed in 0..20 {
            let mask = generate_mask(10, 2, &MaskSpec::new(1.0, seed).unwrap()).unwrap();
            assert_eq!(mask.count_complete(), 0);
            for i in 0..10 {
                let observed = (0..2).filter(|&v| mask.observed(i, v)).count();
                assert_eq!(observed, 1, "row {i} seed {seed}");
            }
            assert!(!mask.observed_rows(0).is_empty());
            assert!(!mask.observed_rows(1).is_empty());
        }
    }

    #[test]
    fn masking_rejects_other_view_counts() {
        let spec = MaskSpec::new(0.5, 1).unwrap();
        assert!(generate_mask(10, 3, &spec).is_err());
        assert!(generate_mask(10, 1, &spec).is_err());
    }

    #[test]
    fn mask_is_deterministic_per_seed() {
        let spec = MaskSpec::new(0.4, 77).unwrap();
        let a = generate_mask(100, 2, &spec).unwrap();
        let b = generate_mask(100, 2, &spec).unwrap();
        assert_eq!(a, b);
        let c = generate_mask(100, 2, &MaskSpec::new(0.4, 78).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    // 400 seeds make the 35-65% band a >5 sigma event per index under
    // uniform sampling; fewer seeds would flag correct implementations.
    #[test]
    fn complete_set_is_roughly_uniform_over_seeds() {
        let n = 1000;
        let seeds = 400;
        let mut complete_counts = vec![0usize; n];
        for seed in 0..seeds {
            let mask = generate_mask(n, 2, &MaskSpec::new(0.5, seed).unwrap()).unwrap();
            for i in mask.complete_rows() {
                complete_counts[i] += 1;
            }
        }
        for (i, c) in complete_counts.iter().enumerate() {
            let frac = *c as f64 / seeds as f64;
            assert!(
                (0.35..=0.65).contains(&frac),
                "index {i} complete in {frac} of seeds"
            );
        }
    }

    #[test]
    fn load_views_happy_path_and_header_skip() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("v1.csv");
        let p2 = dir.path().join("v2.csv");
        std::fs::write(&p1, "a,b\n1,2\n3,4\n5,6\n").unwrap();
        std::fs::write(&p2, "x\n9\n8\n7\n").unwrap();
        let ds = load_views(&[&p1, &p2], None).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.view(0).shape(), (3, 2));
        assert_eq!(ds.view(1).shape(), (3, 1));
        assert_eq!(ds.mask().count_complete(), 3);
    }

    #[test]
    fn load_views_row_count_mismatch_names_files() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("v1.csv");
        let p2 = dir.path().join("v2.csv");
        std::fs::write(&p1, "h\n1\n2\n3\n4\n5\n").unwrap();
        std::fs::write(&p2, "h\n1\n2\n3\n4\n5\n6\n").unwrap();
        let err = load_views(&[&p1, &p2], None).unwrap_err().to_string();
        assert!(err.contains("v1.csv") && err.contains("v2.csv"), "{err}");
        assert!(err.contains('5') && err.contains('6'), "{err}");
    }

    #[test]
    fn bad_cell_reports_line_and_column() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("v.csv");
        std::fs::write(&p, "h1,h2\n1,2\n3,oops\n").unwrap();
        let err = load_views(&[&p], None).unwrap_err();
        match err {
            Error::Parse { line, col, .. } => {
                assert_eq!((line, col), (3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn labels_roundtrip_and_length_check() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("v1.csv");
        let lp = dir.path().join("labels.txt");
        std::fs::write(&p1, "h\n1\n2\n").unwrap();
        write_labels(&lp, &[4, 0]).unwrap();
        let ds = load_views(&[&p1], Some(&lp)).unwrap();
        assert_eq!(ds.labels().unwrap(), &[4, 0]);

        write_labels(&lp, &[1, 2, 3]).unwrap();
        assert!(load_views(&[&p1], Some(&lp)).is_err());
    }

    #[test]
    fn normalize_rescales_and_zeroes_constant_columns() {
        let v = Matrix::from_rows(&[vec![0.0, 7.0], vec![5.0, 7.0], vec![10.0, 7.0]]).unwrap();
        let ds = MultiViewDataset::new(vec![v], Mask::all_observed(3, 1), None).unwrap();
        let out = normalize(&ds);
        let m = out.view(0);
        assert_eq!((m.get(0, 0), m.get(1, 0), m.get(2, 0)), (0.0, 0.5, 1.0));
        assert!((0..3).all(|i| m.get(i, 1) == 0.0));
    }

    #[test]
    fn normalize_is_idempotent_and_bounded() {
        let ds = synth_two_view(40, 4, 6, 3, 0.2, 5).unwrap();
        let once = normalize(&ds);
        let twice = normalize(&once);
        for v in 0..2 {
            assert_eq!(once.view(v), twice.view(v));
            assert!(once
                .view(v)
                .data()
                .iter()
                .all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn synthetic_components_are_balanced() {
        let ds = synth_two_view(10, 3, 4, 4, 0.0, 1).unwrap();
        let labels = ds.labels().unwrap();
        let mut sizes = [0usize; 3];
        for &l in labels {
            sizes[l] += 1;
        }
        let mut sorted = sizes;
        sorted.sort_unstable();
        assert_eq!(sorted, [3, 3, 4]);
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        let a = synth_two_view(30, 3, 5, 4, 0.3, 42).unwrap();
        let b = synth_two_view(30, 3, 5, 4, 0.3, 42).unwrap();
        assert_eq!(a.view(0), b.view(0));
        assert_eq!(a.view(1), b.view(1));
        assert_eq!(a.labels(), b.labels());
        let c = synth_two_view(30, 3, 5, 4, 0.3, 43).unwrap();
        assert_ne!(a.view(0), c.view(0));
    }

    #[test]
    fn synthetic_rejects_bad_configs() {
        assert!(synth_two_view(1, 2, 3, 3, 0.0, 1).is_err());
        assert!(synth_two_view(10, 1, 3, 3, 0.0, 1).is_err());
        assert!(synth_two_view(10, 2, 3, 3, -0.1, 1).is_err());
    }

    #[test]
    fn mask_csv_roundtrip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("mask.csv");
        let mask = generate_mask(23, 2, &MaskSpec::new(0.6, 4).unwrap()).unwrap();
        write_mask_csv(&p, &mask).unwrap();
        let back = read_mask_csv(&p).unwrap();
        assert_eq!(mask, back);
    }

    #[test]
    fn view_csv_roundtrip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("v.csv");
        let ds = synth_two_view(12, 3, 4, 3, 0.1, 8).unwrap();
        write_view_csv(&p, ds.view(0)).unwrap();
        let back = load_views(&[&p], None).unwrap();
        assert!(ds.view(0).max_abs_diff(back.view(0)) < 1e-12);
    }

    #[test]
    fn dataset_rejects_all_unobserved_rows() {
        let v = Matrix::zeros(2, 2);
        let mut mask = Mask::all_observed(2, 1);
        mask.set(1, 0, false);
        assert!(MultiViewDataset::new(vec![v], mask, None).is_err());
    }
}
