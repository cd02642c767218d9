//! Stochastic Lanczos quadrature with full reorthogonalization.

use std::time::Instant;

use faer::Mat;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dot, norm, symmetric_eigen, ColumnBlock};
use crate::oracle::PSD_TOLERANCE;
use crate::sketch::{
    entropy_from_trace, mean, sample_sketch, validate_alpha, EntropyEstimate, EstimatorConfig, Method,
    SketchBatch, SketchDistribution, SpectralOperator,
};

/// `beta_j` below this means the Krylov space is invariant.
pub const BREAKDOWN_TOLERANCE: f64 = 1e-12;

/// `G Q = Q T + beta_m q_{m+1} e_m^T` with `T` tridiagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct LanczosFactorization {
    /// `gamma_1..gamma_m`
    pub diagonal: Vec<f64>,
    /// `beta_1..beta_{m-1}`
    pub off_diagonal: Vec<f64>,
    /// `q_1..q_m` as columns.
    pub basis: ColumnBlock,
    /// Stopped before the requested step count.
    pub breakdown: bool,
    /// `beta_m`, the norm of the final residual.
    pub residual_norm: f64,
}

impl LanczosFactorization {
    pub fn steps(&self) -> usize {
        self.diagonal.len()
    }

    /// Dense copy of `T`.
    pub fn tridiagonal(&self) -> Vec<Vec<f64>> {
        let m = self.steps();
        let mut t = vec![vec![0.0; m]; m];
        for i in 0..m {
            t[i][i] = self.diagonal[i];
            if i + 1 < m {
                t[i][i + 1] = self.off_diagonal[i];
                t[i + 1][i] = self.off_diagonal[i];
            }
        }
        t
    }
}

struct ColumnState {
    diagonal: Vec<f64>,
    off_diagonal: Vec<f64>,
    active: bool,
    breakdown: bool,
    residual: f64,
}

/// Runs Lanczos from every column of `starts` at once, sharing one block
/// product per step.
fn lanczos_lockstep(op: &impl SpectralOperator, starts: &ColumnBlock, steps: usize) -> Result<Vec<LanczosFactorization>> {
    let (n, s) = (starts.rows(), starts.cols());
    if n != op.order() {
        return Err(Error::DimensionMismatch {
            expected: op.order(),
            found: n,
        });
    }
    if steps == 0 || steps > n {
        return Err(invalid(format!("lanczos steps must lie in 1..={n}, got {steps}")));
    }
    let mut q1 = starts.clone();
    for c in 0..s {
        let col = q1.column_mut(c);
        let nc = norm(col);
        if !(nc > 0.0) || !nc.is_finite() {
            return Err(invalid("lanczos start vector is zero or not finite"));
        }
        col.iter_mut().for_each(|x| *x /= nc);
    }

    let mut basis = vec![q1];
    let mut states: Vec<ColumnState> = (0..s)
        .map(|_| ColumnState {
            diagonal: Vec::with_capacity(steps),
            off_diagonal: Vec::with_capacity(steps),
            active: true,
            breakdown: false,
            residual: 0.0,
        })
        .collect();
    let mut w = ColumnBlock::zeros(n, s);

    for j in 0..steps {
        op.apply_block(&basis[j], &mut w);
        let last = j + 1 == steps;
        let basis_ref = &basis;
        w.as_mut_slice()
            .par_chunks_mut(n)
            .zip(states.par_iter_mut())
            .enumerate()
            .for_each(|(c, (wc, st))| {
                if !st.active {
                    wc.iter_mut().for_each(|x| *x = 0.0);
                    return;
                }
                let qj = basis_ref[j].column(c);
                let gamma = dot(qj, wc);
                st.diagonal.push(gamma);
                // two passes of modified Gram-Schmidt against the whole basis
                for _ in 0..2 {
                    for q in basis_ref.iter() {
                        let ql = q.column(c);
                        let h = dot(ql, wc);
                        axpy(-h, ql, wc);
                    }
                }
                let beta = norm(wc);
                st.residual = beta;
                if last {
                    return;
                }
                if beta < BREAKDOWN_TOLERANCE {
                    st.active = false;
                    st.breakdown = true;
                    wc.iter_mut().for_each(|x| *x = 0.0);
                } else {
                    st.off_diagonal.push(beta);
                    wc.iter_mut().for_each(|x| *x /= beta);
                }
            });
        if states.iter().any(|st| !st.residual.is_finite()) {
            return Err(Error::NonFinite {
                context: "lanczos recurrence",
            });
        }
        if !last {
            let next = std::mem::replace(&mut w, ColumnBlock::zeros(n, s));
            basis.push(next);
        }
    }

    Ok(states
        .into_iter()
        .enumerate()
        .map(|(c, st)| {
            let m = st.diagonal.len();
            let mut data = Vec::with_capacity(n * m);
            for block in basis.iter().take(m) {
                data.extend_from_slice(block.column(c));
            }
            LanczosFactorization {
                diagonal: st.diagonal,
                off_diagonal: st.off_diagonal,
                basis: ColumnBlock::from_column_major(n, m, data).expect("basis shape"),
                breakdown: st.breakdown,
                residual_norm: st.residual,
            }
        })
        .collect())
}

/// `m`-step Lanczos from `g`, every new vector reorthogonalized against all
/// previous ones (two passes).
pub fn lanczos_factorize(op: &impl SpectralOperator, g: &[f64], m: usize) -> Result<LanczosFactorization> {
    let start = ColumnBlock::from_column_major(g.len(), 1, g.to_vec())?;
    Ok(lanczos_lockstep(op, &start, m)?.remove(0))
}

/// First column of `T^alpha` for symmetric tridiagonal `T`, through its
/// eigendecomposition.
pub fn tridiag_alpha_first_column(diagonal: &[f64], off_diagonal: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let m = diagonal.len();
    if m == 0 || off_diagonal.len() + 1 != m {
        return Err(invalid("tridiagonal needs m diagonal and m - 1 off-diagonal entries"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let t = Mat::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            diagonal[i]
        } else if i + 1 == j {
            off_diagonal[i]
        } else if j + 1 == i {
            off_diagonal[j]
        } else {
            0.0
        }
    });
    let (values, v) = symmetric_eigen(t.as_ref())?;
    let mut p = vec![0.0; m];
    for (l, &theta) in values.iter().enumerate() {
        if theta < -PSD_TOLERANCE {
            return Err(Error::NotPsd { eigenvalue: theta });
        }
        if theta <= 0.0 {
            continue;
        }
        let w = theta.powf(alpha) * v[(0, l)];
        for (k, pk) in p.iter_mut().enumerate() {
            *pk += v[(k, l)] * w;
        }
    }
    Ok(p)
}

/// `ceil(sqrt(kappa)/4 * ln(kappa^(alpha + 1/2) / epsilon))`, at least 1.
pub fn lanczos_steps(epsilon: f64, alpha: f64, kappa: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(invalid(format!("condition number must exceed 1, got {kappa}")));
    }
    let m = 0.25 * kappa.sqrt() * ((alpha + 0.5) * kappa.ln() - epsilon.ln());
    Ok((m.ceil() as usize).max(1))
}

/// `forms[a][i] = sqrt(n) g_i^T sum_k p_k q_k` for each order in `alphas`,
/// with `p` the first column of `T_i^alpha`. The factorizations are shared
/// across orders.
pub fn lanczos_quadratic_forms(
    op: &impl SpectralOperator,
    batch: &SketchBatch,
    steps: usize,
    alphas: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if batch.is_empty() {
        return Err(invalid("sketch batch is empty"));
    }
    let n = op.order();
    let facts = lanczos_lockstep(op, &batch.vectors, steps.min(n))?;
    let scale = (n as f64).sqrt();
    alphas
        .iter()
        .map(|&alpha| {
            facts
                .par_iter()
                .zip(batch.vectors.as_slice().par_chunks(n))
                .map(|(f, g)| {
                    let p = tridiag_alpha_first_column(&f.diagonal, &f.off_diagonal, alpha)?;
                    let value: f64 = p
                        .iter()
                        .zip(f.basis.columns())
                        .map(|(pk, q)| pk * dot(g, q))
                        .sum();
                    if value.is_finite() {
                        Ok(scale * value)
                    } else {
                        Err(Error::NonFinite {
                            context: "lanczos quadrature",
                        })
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Lanczos quadrature estimator with Rademacher probes.
pub fn lanczos_entropy(op: &impl SpectralOperator, config: &EstimatorConfig) -> Result<EntropyEstimate> {
    Ok(lanczos_entropy_grid(op, config, &[config.alpha])?.remove(0))
}

/// [`lanczos_entropy`] for several orders sharing the factorizations.
/// `config.alpha` is ignored. Steps beyond the operator order are capped.
pub fn lanczos_entropy_grid(
    op: &impl SpectralOperator,
    config: &EstimatorConfig,
    alphas: &[f64],
) -> Result<Vec<EntropyEstimate>> {
    if alphas.is_empty() {
        return Err(invalid("no orders requested"));
    }
    alphas.iter().try_for_each(|&a| validate_alpha(a))?;
    EstimatorConfig { alpha: alphas[0], ..*config }.validate()?;
    if config.degree == 0 {
        return Err(invalid("lanczos needs at least one step"));
    }
    let start = Instant::now();
    let batch = sample_sketch(op.order(), config.sketches, SketchDistribution::Rademacher, config.seed);
    let forms = lanczos_quadratic_forms(op, &batch, config.degree, alphas)?;
    let elapsed = start.elapsed().as_secs_f64();
    alphas
        .iter()
        .zip(forms)
        .map(|(&alpha, row)| {
            let trace = mean(&row);
            Ok(EntropyEstimate {
                value: entropy_from_trace(trace, alpha)?,
                trace,
                method: Method::Lanczos,
                alpha,
                sketches: config.sketches,
                degree: config.degree.min(op.order()),
                lambda_max: None,
                elapsed_secs: elapsed,
            })
        })
        .collect()
}
