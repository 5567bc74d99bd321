use crate::error::{Error, Result};

/// Dense row-major matrix of f64. Rows are samples throughout the crate.
///
/// Construction from external input rejects NaN/Inf; arithmetic results are
/// not re-validated (finiteness of intermediates is the optimizer's concern).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Work threshold (flops) above which matmul dispatches to the rayon path.
#[cfg(feature = "parallel")]
const PAR_MIN_WORK: usize = 1 << 17;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        assert!(rows > 0 && cols > 0, "matrix dims must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Matrix {
        assert!(rows > 0 && cols > 0, "matrix dims must be positive");
        Matrix {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    /// Builds from a row-major buffer, rejecting length and finiteness violations.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::DimMismatch {
                op: "from_vec",
                left: format!("{rows}x{cols}"),
                right: format!("buffer of {}", data.len()),
            });
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteInput {
                    row: i / cols,
                    col: i % cols,
                });
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::DimMismatch {
                op: "from_rows",
                left: "empty".into(),
                right: "empty".into(),
            });
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimMismatch {
                    op: "from_rows",
                    left: format!("row 0 has {cols} cols"),
                    right: format!("row {i} has {} cols", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    /// Internal constructor for computed values; skips the finiteness scan.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert!(i < self.rows);
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimMismatch {
                op,
                left: self.shape_str(),
                right: other.shape_str(),
            });
        }
        Ok(())
    }

    /// Matrix product. Dispatches to the rayon row-split kernel for large
    /// inputs when the `parallel` feature is enabled; output is bit-identical
    /// either way because each output row keeps the same accumulation order.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        #[cfg(feature = "parallel")]
        {
            if self.rows >= 8 && self.rows * self.cols * other.cols >= PAR_MIN_WORK {
                return self.matmul_par(other);
            }
        }
        self.matmul_seq(other)
    }

    pub fn matmul_seq(&self, other: &Matrix) -> Result<Matrix> {
        self.matmul_check(other)?;
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            Self::matmul_row(
                &self.data[i * k..(i + 1) * k],
                other,
                &mut out[i * n..(i + 1) * n],
            );
        }
        Ok(Matrix::from_raw(m, n, out))
    }

    #[cfg(feature = "parallel")]
    pub fn matmul_par(&self, other: &Matrix) -> Result<Matrix> {
        use rayon::prelude::*;
        self.matmul_check(other)?;
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, orow)| Self::matmul_row(&self.data[i * k..(i + 1) * k], other, orow));
        Ok(Matrix::from_raw(m, n, out))
    }

    fn matmul_check(&self, other: &Matrix) -> Result<()> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch {
                op: "matmul",
                left: self.shape_str(),
                right: other.shape_str(),
            });
        }
        Ok(())
    }

    #[inline]
    fn matmul_row(arow: &[f64], b: &Matrix, orow: &mut [f64]) {
        let n = b.cols;
        for (kk, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix::from_raw(self.cols, self.rows, out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "sub")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "hadamard")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * c).collect(),
        )
    }

    /// Adds a 1 x cols row vector to every row.
    pub fn add_row_vec(&self, row: &Matrix) -> Result<Matrix> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::DimMismatch {
                op: "add_row_vec",
                left: self.shape_str(),
                right: row.shape_str(),
            });
        }
        let mut data = self.data.clone();
        for r in data.chunks_mut(self.cols) {
            for (v, b) in r.iter_mut().zip(&row.data) {
                *v += b;
            }
        }
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    pub fn relu(&self) -> Matrix {
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v.max(0.0)).collect(),
        )
    }

    pub fn softmax_rows(&self) -> Matrix {
        let mut data = self.data.clone();
        for r in data.chunks_mut(self.cols) {
            let mx = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in r.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in r.iter_mut() {
                *v /= sum;
            }
        }
        Matrix::from_raw(self.rows, self.cols, data)
    }

    /// Scales every row to unit Euclidean norm. A zero row is an error here;
    /// callers that can produce zero rows must opt into an epsilon via
    /// [`Matrix::l2norm_rows_eps`].
    pub fn l2norm_rows(&self) -> Result<Matrix> {
        for i in 0..self.rows {
            if self.row(i).iter().all(|&v| v == 0.0) {
                return Err(Error::Degenerate(format!(
                    "l2norm of all-zero row {i} (of {})",
                    self.rows
                )));
            }
        }
        Ok(self.l2norm_rows_eps(0.0).0)
    }

    /// Row normalization with `eps` added to each norm. Returns the number of
    /// rows whose norm was below `eps` (degenerate rows).
    pub fn l2norm_rows_eps(&self, eps: f64) -> (Matrix, usize) {
        let mut data = self.data.clone();
        let mut degenerate = 0usize;
        for r in data.chunks_mut(self.cols) {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < eps || norm == 0.0 {
                degenerate += 1;
            }
            let denom = norm + eps;
            for v in r.iter_mut() {
                *v /= denom;
            }
        }
        (Matrix::from_raw(self.rows, self.cols, data), degenerate)
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Matrix {
        assert!(!idx.is_empty(), "gather_rows needs at least one index");
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(idx.len(), self.cols, data)
    }

    /// Horizontal concatenation; both must share the row count.
    pub fn hcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimMismatch {
                op: "hcat",
                left: self.shape_str(),
                right: other.shape_str(),
            });
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix::from_raw(self.rows, cols, data))
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Elementwise/rowwise nonlinearities shared by networks and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowwiseOp {
    Relu,
    Softmax,
    L2Norm,
}

/// Applies `op` row by row. `L2Norm` rejects all-zero rows; the caller
/// decides the fallback.
pub fn rowwise(op: RowwiseOp, x: &Matrix) -> Result<Matrix> {
    match op {
        RowwiseOp::Relu => Ok(x.relu()),
        RowwiseOp::Softmax => Ok(x.softmax_rows()),
        RowwiseOp::L2Norm => x.l2norm_rows(),
    }
}
