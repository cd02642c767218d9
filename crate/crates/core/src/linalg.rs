//! Dense storage types and thin wrappers over the `faer` kernels.
//!
//! Everything above this module talks in terms of [`ColumnBlock`] (a set of
//! column vectors, column-major) and [`DenseMatrix`] (row-major); `faer`
//! views are created on demand and never leak into the public API.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Side};

use crate::error::{Error, Result};
use crate::sketch::SpectralOperator;

/// A block of `cols` column vectors of length `rows`, stored column-major so
/// that every column is a contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnBlock {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ColumnBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_column_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            if c.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    found: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Ok(Self {
            rows,
            cols: columns.len(),
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.rows.max(1)).take(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Copy of columns `start..start + len`.
    pub fn column_range(&self, start: usize, len: usize) -> ColumnBlock {
        let lo = start * self.rows;
        let hi = (start + len) * self.rows;
        ColumnBlock {
            rows: self.rows,
            cols: len,
            data: self.data[lo..hi].to_vec(),
        }
    }

    pub(crate) fn view(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.data, self.rows, self.cols)
    }

    pub(crate) fn view_mut(&mut self) -> MatMut<'_, f64> {
        MatMut::from_column_major_slice_mut(&mut self.data, self.rows, self.cols)
    }
}

/// General dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub(crate) fn view(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.rows, self.cols)
    }

    pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Self {
        DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

/// A dense symmetric matrix usable as a [`SpectralOperator`].
///
/// Used for test operators and for materializing approximations; kernel
/// matrices proper live in [`crate::kernel::GramMatrix`].
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSymmetric {
    n: usize,
    data: Vec<f64>,
}

impl DenseSymmetric {
    /// Checks exact symmetry.
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        if matrix.rows != matrix.cols {
            return Err(Error::DimensionMismatch {
                expected: matrix.rows,
                found: matrix.cols,
            });
        }
        let n = matrix.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                if matrix.get(i, j) != matrix.get(j, i) {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if matrix.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dense symmetric matrix",
            });
        }
        Ok(Self {
            n,
            data: matrix.data,
        })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            data[i * n + i] = *d;
        }
        Self { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix {
            rows: self.n,
            cols: self.n,
            data: self.data.clone(),
        }
    }

    pub(crate) fn view(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.n, self.n)
    }
}

impl SpectralOperator for DenseSymmetric {
    fn order(&self) -> usize {
        self.n
    }

    fn apply_block(&self, input: &ColumnBlock, output: &mut ColumnBlock) {
        dense_apply(self.view(), input, output);
    }
}

/// `output = matrix * input` for a square row-major matrix.
pub(crate) fn dense_apply(matrix: MatRef<'_, f64>, input: &ColumnBlock, output: &mut ColumnBlock) {
    assert_eq!(matrix.ncols(), input.rows(), "operator/input order mismatch");
    assert_eq!(output.rows(), matrix.nrows());
    assert_eq!(output.cols(), input.cols());
    matmul(
        output.view_mut(),
        Accum::Replace,
        matrix,
        input.view(),
        1.0,
        faer::get_global_parallelism(),
    );
}

pub(crate) fn gemm(lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(lhs.nrows(), rhs.ncols());
    matmul(
        out.as_mut(),
        Accum::Replace,
        lhs,
        rhs,
        1.0,
        faer::get_global_parallelism(),
    );
    out
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Eigenvalues of a symmetric matrix, non-decreasing.
pub(crate) fn symmetric_eigenvalues(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::EigenSolver)
}

/// Eigenvalues (non-decreasing) and eigenvectors (columns) of a symmetric matrix.
pub(crate) fn symmetric_eigen(m: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenSolver)?;
    let s = evd.S();
    let values = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

/// Orthonormal basis of the column space (thin Q of a Householder QR).
pub(crate) fn orthonormal_basis(m: MatRef<'_, f64>) -> Mat<f64> {
    m.qr().compute_thin_Q()
}

/// Thin SVD: (U, singular values non-increasing, V).
pub(crate) fn thin_svd(m: MatRef<'_, f64>) -> Result<(Mat<f64>, Vec<f64>, Mat<f64>)> {
    let svd = m.thin_svd().map_err(|_| Error::Svd)?;
    let s = svd.S();
    let k = m.nrows().min(m.ncols());
    let sigma = (0..k).map(|i| s[i]).collect();
    Ok((svd.U().to_owned(), sigma, svd.V().to_owned()))
}
