//! Randomized SVD: Gaussian range finder, one power iteration, then an exact
//! SVD of the small projected matrix.

use faer::{Mat, MatRef};

use crate::error::{invalid, Result};
use crate::linalg::{gemm, orthonormal_basis, thin_svd, DenseMatrix};
use crate::sketch::{sample_sketch, SketchDistribution};

pub const DEFAULT_OVERSAMPLE: usize = 10;

/// `U diag(sigma) V^T` with `sigma` non-negative and non-increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.u.rows(), self.v.rows(), |i, j| {
            (0..self.rank())
                .map(|l| self.u.get(i, l) * self.sigma[l] * self.v.get(j, l))
                .sum()
        })
    }
}

pub(crate) struct FaerFactors {
    pub u: Mat<f64>,
    pub sigma: Vec<f64>,
    pub v: Mat<f64>,
}

pub(crate) fn randomized_svd_faer(a: MatRef<'_, f64>, k: usize, oversample: usize, seed: u64) -> Result<FaerFactors> {
    let (nr, nc) = (a.nrows(), a.ncols());
    let full = nr.min(nc);
    if k == 0 || k > full {
        return Err(invalid(format!("rank must lie in 1..={full}, got {k}")));
    }
    let l = (k + oversample).min(full);
    let omega = sample_sketch(nc, l, SketchDistribution::Gaussian, seed).vectors;
    let y = gemm(a, omega.view());
    let q = orthonormal_basis(y.as_ref());
    // one power iteration
    let z = gemm(a.transpose(), q.as_ref());
    let qz = orthonormal_basis(z.as_ref());
    let y = gemm(a, qz.as_ref());
    let q = orthonormal_basis(y.as_ref());

    let b = gemm(q.as_ref().transpose(), a);
    let (ub, sigma, vb) = thin_svd(b.as_ref())?;
    let u = gemm(q.as_ref(), ub.as_ref());
    Ok(FaerFactors {
        u: u.as_ref().subcols(0, k).to_owned(),
        sigma: sigma[..k].to_vec(),
        v: vb.as_ref().subcols(0, k).to_owned(),
    })
}

/// Rank-`k` factors of `block`.
pub fn randomized_svd(block: &DenseMatrix, k: usize, oversample: usize, seed: u64) -> Result<SvdFactors> {
    let f = randomized_svd_faer(block.view(), k, oversample, seed)?;
    Ok(SvdFactors {
        u: DenseMatrix::from_faer(f.u.as_ref()),
        sigma: f.sigma,
        v: DenseMatrix::from_faer(f.v.as_ref()),
    })
}
