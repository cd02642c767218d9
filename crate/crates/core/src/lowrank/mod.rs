//! Block low-rank approximation of shift-invariant Gram matrices.
//!
//! Samples are clustered with k-means; the Gram matrix is reordered cluster
//! by cluster, diagonal blocks are kept exactly and every off-diagonal block
//! is replaced by a rank-`k` factorization. A product then costs
//! `O(n^2/c + nck)` instead of `O(n^2)`.

mod kmeans;
mod rsvd;

pub use kmeans::{kmeans_partition, Partition, KMEANS_TOLERANCE};
pub use rsvd::{randomized_svd, SvdFactors, DEFAULT_OVERSAMPLE};

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernel::{GramEntries, GramMatrix, KernelSpec, SampleSet};
use crate::lanczos::lanczos_factorize;
use crate::linalg::{symmetric_eigenvalues, ColumnBlock, DenseMatrix, DenseSymmetric};
use crate::oracle::{eigen_spectrum, PSD_TOLERANCE};
use crate::sketch::{sketch_column, SketchDistribution, SpectralOperator};

pub const KMEANS_MAX_ITERS: usize = 100;

/// `ceil(n^(1/4))`
pub fn default_clusters(n: usize) -> usize {
    ((n as f64).powf(0.25).ceil() as usize).clamp(1, n.max(1))
}

/// `ceil(sqrt(n))`
pub fn default_rank(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(1)
}

struct OffBlock {
    row: usize,
    col: usize,
    u: Mat<f64>,
    sigma: Vec<f64>,
    v: Mat<f64>,
}

/// Exact diagonal blocks and rank-`k` off-diagonal blocks under a
/// clustering-induced ordering. Immutable once built.
pub struct BlockLowRank {
    n: usize,
    dims: usize,
    sigma: f64,
    rank: usize,
    partition: Partition,
    /// Original index -> position in cluster order.
    permutation: Vec<usize>,
    offsets: Vec<usize>,
    diagonal: Vec<Mat<f64>>,
    off: Vec<OffBlock>,
}

/// Builds the approximation. Only the gaussian kernel is accepted.
pub fn build_block_lowrank(data: &SampleSet, spec: &KernelSpec, c: usize, k: usize, seed: u64) -> Result<BlockLowRank> {
    let sigma = match *spec {
        KernelSpec::Gaussian { sigma } => sigma,
        _ => return Err(Error::NotShiftInvariant),
    };
    if k == 0 {
        return Err(invalid("rank must be positive"));
    }
    let n = data.rows();
    let entries = GramEntries::new(data, *spec)?;
    let partition = kmeans_partition(data, c, seed, KMEANS_MAX_ITERS)?;
    let members = partition.members();

    let mut permutation = vec![0; n];
    let mut offsets = Vec::with_capacity(c + 1);
    offsets.push(0);
    for group in &members {
        let base = *offsets.last().expect("non-empty");
        for (pos, &i) in group.iter().enumerate() {
            permutation[i] = base + pos;
        }
        offsets.push(base + group.len());
    }

    let block = |s: usize, t: usize| -> Result<Mat<f64>> {
        let (rows, cols) = (&members[s], &members[t]);
        let mut m = Mat::<f64>::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                m[(a, b)] = entries.entry(i, j)?;
            }
        }
        Ok(m)
    };

    let diagonal = (0..c).into_par_iter().map(|s| block(s, s)).collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..c).flat_map(|s| ((s + 1)..c).map(move |t| (s, t))).collect();
    let off = pairs
        .into_par_iter()
        .enumerate()
        .map(|(idx, (s, t))| {
            let b = block(s, t)?;
            let keff = k.min(b.nrows()).min(b.ncols());
            let f = rsvd::randomized_svd_faer(b.as_ref(), keff, DEFAULT_OVERSAMPLE, seed.wrapping_add(1 + idx as u64))?;
            Ok(OffBlock {
                row: s,
                col: t,
                u: f.u,
                sigma: f.sigma,
                v: f.v,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BlockLowRank {
        n,
        dims: data.cols(),
        sigma,
        rank: k,
        partition,
        permutation,
        offsets,
        diagonal,
        off,
    })
}

impl BlockLowRank {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Original index -> position in cluster order.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn clusters(&self) -> usize {
        self.diagonal.len()
    }

    /// Feature dimension of the samples the approximation was built from.
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn bandwidth(&self) -> f64 {
        self.sigma
    }

    /// Diagonal block `s` in cluster order, row-major.
    pub fn diagonal_block(&self, s: usize) -> DenseMatrix {
        DenseMatrix::from_faer(self.diagonal[s].as_ref())
    }

    /// Singular values of off-diagonal block `(s, t)`, `s < t`.
    pub fn singular_values(&self, s: usize, t: usize) -> Option<&[f64]> {
        self.off
            .iter()
            .find(|b| b.row == s && b.col == t)
            .map(|b| b.sigma.as_slice())
    }

    /// Stored scalars, for comparison with the `n^2` of the dense matrix.
    pub fn stored_values(&self) -> usize {
        let d: usize = self.diagonal.iter().map(|m| m.nrows() * m.ncols()).sum();
        let o: usize = self
            .off
            .iter()
            .map(|b| (b.u.nrows() + b.v.nrows() + 1) * b.sigma.len())
            .sum();
        d + o
    }

    fn range(&self, s: usize) -> (usize, usize) {
        (self.offsets[s], self.offsets[s + 1] - self.offsets[s])
    }

    /// Dense `G~` in the original ordering. Exactly symmetric.
    pub fn materialize(&self) -> DenseSymmetric {
        let n = self.n;
        let mut ordered = vec![0.0; n * n];
        for (s, d) in self.diagonal.iter().enumerate() {
            let (o, len) = self.range(s);
            for a in 0..len {
                for b in 0..len {
                    ordered[(o + a) * n + o + b] = d[(a, b)];
                }
            }
        }
        for blk in &self.off {
            let (ro, rl) = self.range(blk.row);
            let (co, cl) = self.range(blk.col);
            for a in 0..rl {
                for b in 0..cl {
                    let v: f64 = (0..blk.sigma.len())
                        .map(|l| blk.u[(a, l)] * blk.sigma[l] * blk.v[(b, l)])
                        .sum();
                    ordered[(ro + a) * n + co + b] = v;
                    ordered[(co + b) * n + ro + a] = v;
                }
            }
        }
        let p = &self.permutation;
        let dense = DenseMatrix::from_fn(n, n, |i, j| ordered[p[i] * n + p[j]]);
        DenseSymmetric::new(dense).expect("block construction is symmetric")
    }

    /// Checks for negative curvature with a short Lanczos run: any Ritz value
    /// below `-1e-10` proves `G~` is indefinite. `true` means none was seen.
    pub fn spot_check_psd(&self, steps: usize, seed: u64) -> Result<bool> {
        let g = sketch_column(self.n, 0, SketchDistribution::Rademacher, seed);
        let f = lanczos_factorize(self, &g, steps.clamp(1, self.n))?;
        let dense = f.tridiagonal();
        let t = Mat::<f64>::from_fn(f.steps(), f.steps(), |i, j| dense[i][j]);
        let ritz = symmetric_eigenvalues(t.as_ref())?;
        Ok(ritz.first().map_or(true, |&l| l >= -PSD_TOLERANCE))
    }
}

impl SpectralOperator for BlockLowRank {
    fn order(&self) -> usize {
        self.n
    }

    fn apply_block(&self, input: &ColumnBlock, output: &mut ColumnBlock) {
        let (n, q) = (self.n, input.cols());
        assert_eq!(input.rows(), n, "operator/input order mismatch");
        let mut xp = Mat::<f64>::zeros(n, q);
        for j in 0..q {
            let col = input.column(j);
            for (i, &pi) in self.permutation.iter().enumerate() {
                xp[(pi, j)] = col[i];
            }
        }
        let par = faer::get_global_parallelism();
        let mut yp = Mat::<f64>::zeros(n, q);
        for (s, d) in self.diagonal.iter().enumerate() {
            let (o, len) = self.range(s);
            matmul(
                yp.as_mut().subrows_mut(o, len),
                Accum::Add,
                d.as_ref(),
                xp.as_ref().subrows(o, len),
                1.0,
                par,
            );
        }
        for blk in &self.off {
            let (ro, rl) = self.range(blk.row);
            let (co, cl) = self.range(blk.col);
            let k = blk.sigma.len();
            // rows of block `row`: U diag(sigma) V^T x_col
            let mut tmp = Mat::<f64>::zeros(k, q);
            matmul(tmp.as_mut(), Accum::Replace, blk.v.transpose(), xp.as_ref().subrows(co, cl), 1.0, par);
            scale_rows(&mut tmp, &blk.sigma);
            matmul(yp.as_mut().subrows_mut(ro, rl), Accum::Add, blk.u.as_ref(), tmp.as_ref(), 1.0, par);
            // rows of block `col`: V diag(sigma) U^T x_row
            matmul(tmp.as_mut(), Accum::Replace, blk.u.transpose(), xp.as_ref().subrows(ro, rl), 1.0, par);
            scale_rows(&mut tmp, &blk.sigma);
            matmul(yp.as_mut().subrows_mut(co, cl), Accum::Add, blk.v.as_ref(), tmp.as_ref(), 1.0, par);
        }
        for j in 0..q {
            let col = output.column_mut(j);
            for (i, &pi) in self.permutation.iter().enumerate() {
                col[i] = yp[(pi, j)];
            }
        }
    }
}

fn scale_rows(m: &mut Mat<f64>, by: &[f64]) {
    for j in 0..m.ncols() {
        for (i, &s) in by.iter().enumerate() {
            m[(i, j)] *= s;
        }
    }
}

/// `sum_i r_i^2 |V_i| sum_{j > i} |V_j|` with clusters sorted by radius
/// ascending.
pub fn proposition_r(partition: &Partition) -> f64 {
    let mut order: Vec<usize> = (0..partition.clusters()).collect();
    order.sort_by(|&a, &b| partition.radii[a].total_cmp(&partition.radii[b]).then(a.cmp(&b)));
    let mut r = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        let tail: usize = order[pos + 1..].iter().map(|&j| partition.sizes[j]).sum();
        r += partition.radii[i].powi(2) * partition.sizes[i] as f64 * tail as f64;
    }
    r
}

/// `4 L k^(-1/d) sqrt(2 r)`, the Frobenius-norm bound on `G - G~`.
pub fn frobenius_error_bound(r: f64, lipschitz: f64, k: usize, dims: usize) -> f64 {
    4.0 * lipschitz * (k as f64).powf(-1.0 / dims as f64) * (2.0 * r).sqrt()
}

/// `|alpha/(1 - alpha) log2(1 - 4 sqrt(2 r n) L k^(-1/d) |G^-1|_2)|`, or
/// infinity when the logarithm's argument is not positive.
pub fn corollary_bound(alpha: f64, r: f64, n: usize, lipschitz: f64, k: usize, dims: usize, inverse_norm: f64) -> f64 {
    let x = 4.0 * (2.0 * r * n as f64).sqrt() * lipschitz * (k as f64).powf(-1.0 / dims as f64) * inverse_norm;
    let arg = 1.0 - x;
    if arg > 0.0 {
        (alpha / (1.0 - alpha) * arg.log2()).abs()
    } else {
        f64::INFINITY
    }
}

/// Lipschitz constant of `exp(-t^2 / (2 sigma^2)) / n` in the distance `t`.
pub fn gaussian_lipschitz(sigma: f64, n: usize) -> f64 {
    1.0 / (sigma * std::f64::consts::E.sqrt() * n as f64)
}

/// Worst-case entropy gap `|S(G) - S(G~)|` implied by the partition radii.
/// Needs the exact smallest eigenvalue of `G`, so it is a small-`n`
/// diagnostic. `lipschitz` defaults to [`gaussian_lipschitz`].
pub fn lowrank_entropy_error_bound(g: &GramMatrix, blr: &BlockLowRank, alpha: f64, lipschitz: Option<f64>) -> Result<f64> {
    crate::sketch::validate_alpha(alpha)?;
    if g.order() != blr.n {
        return Err(Error::DimensionMismatch {
            expected: blr.n,
            found: g.order(),
        });
    }
    let lambda_min = eigen_spectrum(g)?.lambda_min();
    if !(lambda_min > 0.0) {
        return Err(Error::SingularGram(lambda_min));
    }
    let l = lipschitz.unwrap_or_else(|| gaussian_lipschitz(blr.sigma, blr.n));
    Ok(corollary_bound(
        alpha,
        proposition_r(&blr.partition),
        blr.n,
        l,
        blr.rank,
        blr.dims,
        1.0 / lambda_min,
    ))
}
