//! Sample sets, kernels and normalized Gram matrices.
//!
//! A [`GramMatrix`] is the unit-trace matrix `G_ij = K_ij / (n sqrt(K_ii K_jj))`
//! whose eigenvalues behave like a probability distribution. Joint quantities
//! combine several Grams through a trace-normalized Hadamard product.
//!
//! Kernels are expected to be infinitely divisible; that property is not
//! checked.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dense_apply, ColumnBlock, DenseMatrix};
use crate::sketch::SpectralOperator;

/// `n` samples of dimension `d`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SampleSet {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows < 2 {
            return Err(invalid(format!("need at least 2 samples, got {rows}")));
        }
        if cols < 1 {
            return Err(invalid("samples need at least one feature"));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "sample values",
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// New sample set made of the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<SampleSet> {
        if columns.is_empty() {
            return Err(invalid("no columns selected"));
        }
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.cols) {
            return Err(invalid(format!(
                "column {bad} out of range for {} columns",
                self.cols
            )));
        }
        let mut values = Vec::with_capacity(self.rows * columns.len());
        for i in 0..self.rows {
            let row = self.row(i);
            values.extend(columns.iter().map(|&c| row[c]));
        }
        Ok(SampleSet {
            rows: self.rows,
            cols: columns.len(),
            values,
        })
    }

    /// Horizontal concatenation of sample sets sharing the same row count.
    pub fn concat(parts: &[&SampleSet]) -> Result<SampleSet> {
        let first = parts.first().ok_or_else(|| invalid("nothing to concatenate"))?;
        let rows = first.rows;
        if let Some(p) = parts.iter().find(|p| p.rows != rows) {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: p.rows,
            });
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                values.extend_from_slice(p.row(i));
            }
        }
        Ok(SampleSet { rows, cols, values })
    }

    pub(crate) fn scaled(&self, factor: f64) -> SampleSet {
        SampleSet {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Positive kernel used to build Gram matrices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(-|x - y|^2 / (2 sigma^2))`
    Gaussian { sigma: f64 },
    /// `(x . y + offset)^degree`
    Polynomial { offset: f64, degree: u32 },
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Self {
        KernelSpec::Gaussian { sigma }
    }

    pub fn polynomial(offset: f64, degree: u32) -> Self {
        KernelSpec::Polynomial { offset, degree }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(invalid(format!("gaussian kernel needs sigma > 0, got {sigma}")))
            }
            KernelSpec::Polynomial { offset, degree } => {
                if degree < 1 {
                    Err(invalid("polynomial kernel needs degree >= 1"))
                } else if !(offset >= 0.0 && offset.is_finite()) {
                    Err(invalid(format!(
                        "polynomial kernel needs offset >= 0, got {offset}"
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn is_shift_invariant(&self) -> bool {
        matches!(self, KernelSpec::Gaussian { .. })
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Polynomial { offset, degree } => {
                let ip: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (ip + offset).powi(degree as i32)
            }
        }
    }
}

/// Evaluates `phi(x, y)`.
pub fn kernel_value(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "kernel input",
        });
    }
    let v = spec.eval_unchecked(x, y);
    if !v.is_finite() {
        return Err(Error::NonFinite {
            context: "kernel value",
        });
    }
    Ok(v)
}

/// Computes normalized Gram entries one at a time. Shared by the dense
/// builder and the block low-rank builder so both produce identical bits.
pub(crate) struct GramEntries<'a> {
    data: &'a SampleSet,
    spec: KernelSpec,
    self_similarity: Vec<f64>,
    inv_n: f64,
}

impl<'a> GramEntries<'a> {
    pub(crate) fn new(data: &'a SampleSet, spec: KernelSpec) -> Result<Self> {
        spec.validate()?;
        let mut self_similarity = Vec::with_capacity(data.rows);
        for i in 0..data.rows {
            let x = data.row(i);
            let k = spec.eval_unchecked(x, x);
            if !k.is_finite() {
                return Err(Error::NonFinite {
                    context: "kernel value",
                });
            }
            if k <= 0.0 {
                return Err(Error::NonPositiveDiagonal { index: i, value: k });
            }
            self_similarity.push(k);
        }
        Ok(Self {
            data,
            spec,
            self_similarity,
            inv_n: 1.0 / data.rows as f64,
        })
    }

    #[inline]
    pub(crate) fn entry(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Ok(self.inv_n);
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let k = self.spec.eval_unchecked(self.data.row(a), self.data.row(b));
        let g = k / (self.self_similarity[a] * self.self_similarity[b]).sqrt() * self.inv_n;
        if g.is_finite() {
            Ok(g)
        } else {
            Err(Error::NonFinite {
                context: "kernel value",
            })
        }
    }
}

/// Normalized, unit-trace, symmetric kernel matrix. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl GramMatrix {
    /// Wraps an existing matrix after checking the Gram invariants
    /// (symmetry, finite entries, diagonal `1/n` up to `1e-12`).
    pub fn from_matrix(m: DenseMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                found: m.cols(),
            });
        }
        let n = m.rows();
        if n < 1 {
            return Err(invalid("empty matrix"));
        }
        let inv_n = 1.0 / n as f64;
        for i in 0..n {
            if (m.get(i, i) - inv_n).abs() > 1e-12 {
                return Err(invalid(format!(
                    "diagonal entry {i} is {} instead of 1/n",
                    m.get(i, i)
                )));
            }
            for j in (i + 1)..n {
                if m.get(i, j) != m.get(j, i) {
                    return Err(invalid(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        if m.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "gram entries",
            });
        }
        Ok(Self {
            n,
            entries: m.as_slice().to_vec(),
        })
    }

    /// `I / n`, the maximum-entropy Gram.
    pub fn scaled_identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0 / n as f64;
        }
        Self { n, entries }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_row_major(self.n, self.n, self.entries.clone())
            .expect("square storage")
    }

    /// `P G P^T` for the permutation sending index `i` to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<GramMatrix> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: perm.len(),
            });
        }
        let mut entries = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                entries[perm[i] * self.n + perm[j]] = self.get(i, j);
            }
        }
        Ok(GramMatrix { n: self.n, entries })
    }

    pub(crate) fn view(&self) -> faer::MatRef<'_, f64> {
        faer::MatRef::from_row_major_slice(&self.entries, self.n, self.n)
    }
}

impl SpectralOperator for GramMatrix {
    fn order(&self) -> usize {
        self.n
    }

    fn apply_block(&self, input: &ColumnBlock, output: &mut ColumnBlock) {
        dense_apply(self.view(), input, output);
    }
}

/// Builds `G_ij = K_ij / (n sqrt(K_ii K_jj))`.
///
/// Only the upper triangle is evaluated; the lower triangle is a mirror, so
/// the result is exactly symmetric. The diagonal is exactly `1/n`.
pub fn build_gram(data: &SampleSet, spec: &KernelSpec) -> Result<GramMatrix> {
    let n = data.rows();
    let entries_fn = GramEntries::new(data, *spec)?;
    let mut entries = vec![0.0; n * n];
    entries
        .par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(i, row)| -> Result<()> {
            for (j, slot) in row.iter_mut().enumerate().skip(i) {
                *slot = entries_fn.entry(i, j)?;
            }
            Ok(())
        })?;
    for i in 0..n {
        for j in 0..i {
            entries[i * n + j] = entries[j * n + i];
        }
    }
    Ok(GramMatrix { n, entries })
}

/// `(G1 o G2 o ... o GL) / tr(G1 o ... o GL)`.
///
/// Each entry's factors are multiplied in sorted order, so the result is
/// bit-for-bit independent of the order of `grams`. A single input is
/// returned unchanged.
pub fn hadamard_joint(grams: &[&GramMatrix]) -> Result<GramMatrix> {
    let first = grams.first().ok_or_else(|| invalid("no gram matrices given"))?;
    let n = first.n;
    if let Some(g) = grams.iter().find(|g| g.n != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: g.n,
        });
    }
    if grams.len() == 1 {
        return Ok((*first).clone());
    }

    let product = |idx: usize, scratch: &mut Vec<f64>| -> f64 {
        if grams.len() == 2 {
            return grams[0].entries[idx] * grams[1].entries[idx];
        }
        scratch.clear();
        scratch.extend(grams.iter().map(|g| g.entries[idx]));
        scratch.sort_by(f64::total_cmp);
        scratch.iter().product()
    };

    let mut entries = vec![0.0; n * n];
    entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let mut scratch = Vec::with_capacity(grams.len());
        for (j, slot) in row.iter_mut().enumerate().skip(i) {
            *slot = product(i * n + j, &mut scratch);
        }
    });
    let trace: f64 = (0..n).map(|i| entries[i * n + i]).sum();
    if !(trace > 0.0 && trace.is_finite()) {
        return Err(Error::CollapsedEstimate { value: trace });
    }
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        entries[i * n + i] = inv_n;
        for j in (i + 1)..n {
            let v = entries[i * n + j] / trace;
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    Ok(GramMatrix { n, entries })
}
