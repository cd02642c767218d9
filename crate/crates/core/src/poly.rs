//! Fractional orders through polynomial approximation of `x^alpha` on
//! `[0, lambda_max]`: a truncated binomial (Taylor) series and a Chebyshev
//! series evaluated with Clenshaw's recurrence.

use std::f64::consts::PI;
use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, ColumnBlock};
use crate::sketch::{
    entropy_from_trace, mean, power_iteration, sample_sketch, validate_alpha, EntropyEstimate,
    EstimatorConfig, Method, SketchBatch, SketchDistribution, SpectralOperator,
};
use crate::special::{gamma, lambert_w0};

/// What is known about the spectrum when choosing a degree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Conditioning {
    /// `lambda_min > 0` with condition number `kappa`.
    FullRank { kappa: f64 },
    /// `lambda_min = 0`; the bound then depends on the order `n`.
    RankDeficient { n: usize },
}

fn check_degree_inputs(epsilon: f64, alpha: f64, cond: Conditioning) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidAlpha(alpha));
    }
    match cond {
        Conditioning::FullRank { kappa } if !(kappa > 1.0) => {
            Err(invalid(format!("condition number must exceed 1, got {kappa}")))
        }
        Conditioning::RankDeficient { n: 0 } => Err(invalid("order must be positive")),
        _ => Ok(()),
    }
}

fn ceil_degree(x: f64) -> Result<usize> {
    if x.is_finite() && x < 1e15 {
        Ok(x.ceil() as usize)
    } else {
        Err(invalid(format!("degree {x} is not representable")))
    }
}

/// Taylor degree guaranteeing `|lambda^alpha - f_m(lambda)| <= eps lambda_min^alpha`
/// (full rank) or `<= eps lambda_max^alpha / n` (rank deficient).
pub fn taylor_degree(epsilon: f64, alpha: f64, cond: Conditioning) -> Result<usize> {
    check_degree_inputs(epsilon, alpha, cond)?;
    let g = gamma(alpha + 1.0);
    let extra = match cond {
        Conditioning::FullRank { kappa } => {
            let beta = -(1.0 - 1.0 / kappa).ln() / (alpha + 1.0);
            let z = kappa * beta * (g / (epsilon * PI)).powf(1.0 / (alpha + 1.0));
            lambert_w0(z) / beta
        }
        Conditioning::RankDeficient { n } => (n as f64 * g / (epsilon * PI)).powf(1.0 / alpha),
    };
    ceil_degree(alpha + extra)
}

/// Chebyshev counterpart of [`taylor_degree`].
pub fn chebyshev_degree(epsilon: f64, alpha: f64, cond: Conditioning) -> Result<usize> {
    check_degree_inputs(epsilon, alpha, cond)?;
    let base = gamma(alpha + 0.5) * gamma(alpha) / (epsilon * PI.powf(1.5));
    let extra = match cond {
        Conditioning::FullRank { kappa } => kappa.sqrt() * base.powf(0.5 / alpha),
        Conditioning::RankDeficient { n } => (n as f64 * base).powf(0.5 / alpha),
    };
    ceil_degree(alpha + extra)
}

fn check_plan(alpha: f64, lambda_max: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::NonPositiveLambdaMax(lambda_max));
    }
    Ok(())
}

/// Binomial series `lambda_max^alpha sum_i C(alpha, i) (lambda/lambda_max - 1)^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorPlan {
    alpha: f64,
    lambda_max: f64,
    coefficients: Vec<f64>,
}

/// `C(alpha, 0..=m)` by `C(alpha, i + 1) = C(alpha, i) (alpha - i) / (i + 1)`.
pub fn binomial_coefficients(alpha: f64, m: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(m + 1);
    c.push(1.0);
    for i in 0..m {
        let prev = c[i];
        c.push(prev * (alpha - i as f64) / (i as f64 + 1.0));
    }
    c
}

impl TaylorPlan {
    pub fn new(alpha: f64, lambda_max: f64, degree: usize) -> Result<Self> {
        check_plan(alpha, lambda_max)?;
        Ok(Self {
            alpha,
            lambda_max,
            coefficients: binomial_coefficients(alpha, degree),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Scalar value of the truncated series at `lambda`.
    pub fn evaluate(&self, lambda: f64) -> f64 {
        let x = lambda / self.lambda_max - 1.0;
        // Horner
        let s = self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c);
        self.lambda_max.powf(self.alpha) * s
    }
}

/// Chebyshev series `c_0/2 + sum_k c_k T_k(2 lambda / lambda_max - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevPlan {
    alpha: f64,
    lambda_max: f64,
    coefficients: Vec<f64>,
}

/// Chebyshev coefficients of `lambda^alpha` on `[0, lambda_max]`, seeded at
/// `c_0 = 2 lambda_max^alpha Gamma(alpha + 1/2) / (sqrt(pi) Gamma(alpha + 1))`
/// and advanced by `c_{k+1} = c_k (alpha - k) / (alpha + k + 1)`.
pub fn chebyshev_coefficients(alpha: f64, lambda_max: f64, m: usize) -> Result<ChebyshevPlan> {
    check_plan(alpha, lambda_max)?;
    let mut c = Vec::with_capacity(m + 1);
    c.push(2.0 * lambda_max.powf(alpha) * gamma(alpha + 0.5) / (PI.sqrt() * gamma(alpha + 1.0)));
    for k in 0..m {
        let k = k as f64;
        let prev = c[c.len() - 1];
        c.push(prev * (alpha - k) / (alpha + k + 1.0));
    }
    Ok(ChebyshevPlan {
        alpha,
        lambda_max,
        coefficients: c,
    })
}

impl ChebyshevPlan {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Scalar value of the truncated series at `lambda`, by Clenshaw.
    pub fn evaluate(&self, lambda: f64) -> f64 {
        let x = 2.0 * lambda / self.lambda_max - 1.0;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coefficients.iter().skip(1).rev() {
            let b0 = c + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        let b0 = self.coefficients[0] + 2.0 * x * b1 - b2;
        0.5 * (b0 - b2)
    }

    /// Per-vector series values from [`chebyshev_moments`] taken with the
    /// same `lambda_max` and at least this plan's degree.
    pub fn combine(&self, moments: &[Vec<f64>]) -> Result<Vec<f64>> {
        if moments.len() <= self.degree() {
            return Err(invalid(format!("need {} moments, got {}", self.degree() + 1, moments.len())));
        }
        let mut out: Vec<f64> = moments[0].iter().map(|m| 0.5 * self.coefficients[0] * m).collect();
        for (row, &c) in moments[1..].iter().zip(&self.coefficients[1..]) {
            for (o, m) in out.iter_mut().zip(row) {
                *o += c * m;
            }
        }
        Ok(out)
    }
}

fn check_lambda(lambda_hat: f64) -> Result<()> {
    if lambda_hat > 0.0 && lambda_hat.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveLambdaMax(lambda_hat))
    }
}

fn check_batch(op: &impl SpectralOperator, batch: &SketchBatch) -> Result<()> {
    if batch.vectors.rows() != op.order() {
        return Err(Error::DimensionMismatch {
            expected: op.order(),
            found: batch.vectors.rows(),
        });
    }
    if batch.is_empty() {
        return Err(invalid("sketch batch is empty"));
    }
    Ok(())
}

fn finite_row(row: Vec<f64>) -> Result<Vec<f64>> {
    if row.iter().all(|v| v.is_finite()) {
        Ok(row)
    } else {
        Err(Error::NonFinite {
            context: "quadratic form",
        })
    }
}

/// `moments[j][i] = g_i^T (G/lambda_hat - I)^j g_i` for `j = 0..=degree`.
/// These do not depend on `alpha`.
pub fn taylor_moments(
    op: &impl SpectralOperator,
    batch: &SketchBatch,
    lambda_hat: f64,
    degree: usize,
) -> Result<Vec<Vec<f64>>> {
    check_batch(op, batch)?;
    check_lambda(lambda_hat)?;
    let g = &batch.vectors;
    let inv = 1.0 / lambda_hat;
    let mut w = g.clone();
    let mut gw = ColumnBlock::zeros(g.rows(), g.cols());
    let mut moments = Vec::with_capacity(degree + 1);
    moments.push(finite_row(g.columns().map(|c| dot(c, c)).collect())?);
    for _ in 0..degree {
        op.apply_block(&w, &mut gw);
        for (wi, &gi) in w.as_mut_slice().iter_mut().zip(gw.as_slice()) {
            *wi = gi * inv - *wi;
        }
        moments.push(finite_row(
            g.columns().zip(w.columns()).map(|(a, b)| dot(a, b)).collect(),
        )?);
    }
    Ok(moments)
}

/// Per-vector `g_i^T f_m(G) g_i` for the Chebyshev series of `plan`, by
/// the backward recurrence `y_k = c_k g + (4/lambda) G y_{k+1} - 2 y_{k+1} - y_{k+2}`
/// and `F = g^T (y_0 - y_2) / 2`.
pub fn clenshaw_quadratic_forms(
    op: &impl SpectralOperator,
    plan: &ChebyshevPlan,
    batch: &SketchBatch,
) -> Result<Vec<f64>> {
    check_batch(op, batch)?;
    let g = &batch.vectors;
    let (n, s) = (g.rows(), g.cols());
    let scale = 4.0 / plan.lambda_max;
    // y_k is written into `fresh`; `y1` = y_{k+1}, `y2` = y_{k+2}
    let mut fresh = ColumnBlock::zeros(n, s);
    let mut y1 = ColumnBlock::zeros(n, s);
    let mut y2 = ColumnBlock::zeros(n, s);
    let mut gy = ColumnBlock::zeros(n, s);
    let m = plan.degree();
    for k in (0..=m).rev() {
        let c = plan.coefficients[k];
        if k == m {
            // y_{m+1} = y_{m+2} = 0
            for (f, &gi) in fresh.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *f = c * gi;
            }
        } else {
            op.apply_block(&y1, &mut gy);
            let parts = fresh
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(gy.as_slice())
                .zip(y1.as_slice().iter().zip(y2.as_slice()));
            for (((f, &gi), &gyi), (&a, &b)) in parts {
                *f = c * gi + scale * gyi - 2.0 * a - b;
            }
        }
        // (fresh, y1, y2) <- (old y2, y_k, y_{k+1})
        std::mem::swap(&mut y2, &mut y1);
        std::mem::swap(&mut y1, &mut fresh);
    }
    // y1 = y_0, fresh = y_2
    let forms = g
        .columns()
        .zip(y1.columns().zip(fresh.columns()))
        .map(|(gi, (a, b))| 0.5 * gi.iter().zip(a.iter().zip(b)).map(|(x, (p, q))| x * (p - q)).sum::<f64>())
        .collect();
    finite_row(forms)
}

/// `moments[k][i] = g_i^T T_k(2 G / lambda_hat - I) g_i` for `k = 0..=degree`.
/// Like [`taylor_moments`] these do not depend on `alpha`; see
/// [`ChebyshevPlan::combine`].
pub fn chebyshev_moments(
    op: &impl SpectralOperator,
    batch: &SketchBatch,
    lambda_hat: f64,
    degree: usize,
) -> Result<Vec<Vec<f64>>> {
    check_batch(op, batch)?;
    check_lambda(lambda_hat)?;
    let g = &batch.vectors;
    let (n, s) = (g.rows(), g.cols());
    let scale = 2.0 / lambda_hat;
    let forms = |t: &ColumnBlock| finite_row(g.columns().zip(t.columns()).map(|(a, b)| dot(a, b)).collect());
    let mut prev = g.clone();
    let mut moments = vec![forms(&prev)?];
    if degree == 0 {
        return Ok(moments);
    }
    let mut cur = ColumnBlock::zeros(n, s);
    op.apply_block(&prev, &mut cur);
    for (c, &p) in cur.as_mut_slice().iter_mut().zip(prev.as_slice()) {
        *c = scale * *c - p;
    }
    moments.push(forms(&cur)?);
    let mut gx = ColumnBlock::zeros(n, s);
    for _ in 1..degree {
        // T_{k+1} = 2 x T_k - T_{k-1}, written over T_{k-1}
        op.apply_block(&cur, &mut gx);
        let parts = prev.as_mut_slice().iter_mut().zip(gx.as_slice().iter().zip(cur.as_slice()));
        for (p, (&gc, &c)) in parts {
            *p = 2.0 * (scale * gc - c) - *p;
        }
        std::mem::swap(&mut prev, &mut cur);
        moments.push(forms(&cur)?);
    }
    Ok(moments)
}

fn lambda_hat(op: &impl SpectralOperator, config: &EstimatorConfig) -> Result<f64> {
    let p = power_iteration(op, config.power, config.seed)?;
    check_lambda(p.bound)?;
    Ok(p.bound)
}

fn grid_orders(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(invalid("no orders requested"));
    }
    alphas.iter().try_for_each(|&a| validate_alpha(a))
}

/// Truncated binomial series estimator with Gaussian probes.
pub fn taylor_entropy(op: &impl SpectralOperator, config: &EstimatorConfig) -> Result<EntropyEstimate> {
    Ok(taylor_entropy_grid(op, config, &[config.alpha])?.remove(0))
}

/// [`taylor_entropy`] for several orders sharing one power iteration, one
/// sketch batch and one set of moments. `config.alpha` is ignored.
pub fn taylor_entropy_grid(
    op: &impl SpectralOperator,
    config: &EstimatorConfig,
    alphas: &[f64],
) -> Result<Vec<EntropyEstimate>> {
    grid_orders(alphas)?;
    EstimatorConfig { alpha: alphas[0], ..*config }.validate()?;
    let start = Instant::now();
    let lam = lambda_hat(op, config)?;
    let batch = sample_sketch(op.order(), config.sketches, SketchDistribution::Gaussian, config.seed);
    taylor_from_moments(op, config, alphas, lam, &batch, start)
}

fn taylor_from_moments(
    op: &impl SpectralOperator,
    config: &EstimatorConfig,
    alphas: &[f64],
    lam: f64,
    batch: &SketchBatch,
    start: Instant,
) -> Result<Vec<EntropyEstimate>> {
    let moments = taylor_moments(op, batch, lam, config.degree)?;
    let means: Vec<f64> = moments.iter().map(|row| mean(row)).collect();
    let elapsed = start.elapsed().as_secs_f64();
    alphas
        .iter()
        .map(|&alpha| {
            let c = binomial_coefficients(alpha, config.degree);
            let series: f64 = c.iter().zip(&means).map(|(a, b)| a * b).sum();
            let trace = lam.powf(alpha) * series;
            Ok(EntropyEstimate {
                value: entropy_from_trace(trace, alpha)?,
                trace,
                method: Method::Taylor,
                alpha,
                sketches: config.sketches,
                degree: config.degree,
                lambda_max: Some(lam),
                elapsed_secs: elapsed,
            })
        })
        .collect()
}

/// Chebyshev series estimator with Gaussian probes.
pub fn chebyshev_entropy(op: &impl SpectralOperator, config: &EstimatorConfig) -> Result<EntropyEstimate> {
    Ok(chebyshev_entropy_grid(op, config, &[config.alpha])?.remove(0))
}

/// [`chebyshev_entropy`] for several orders sharing one power iteration and
/// one sketch batch; the recurrence runs once per order.
pub fn chebyshev_entropy_grid(
    op: &impl SpectralOperator,
    config: &EstimatorConfig,
    alphas: &[f64],
) -> Result<Vec<EntropyEstimate>> {
    grid_orders(alphas)?;
    EstimatorConfig { alpha: alphas[0], ..*config }.validate()?;
    let start = Instant::now();
    let lam = lambda_hat(op, config)?;
    let batch = sample_sketch(op.order(), config.sketches, SketchDistribution::Gaussian, config.seed);
    let setup = start.elapsed().as_secs_f64();
    alphas
        .iter()
        .map(|&alpha| {
            let t = Instant::now();
            let plan = chebyshev_coefficients(alpha, lam, config.degree)?;
            let trace = mean(&clenshaw_quadratic_forms(op, &plan, &batch)?);
            Ok(EntropyEstimate {
                value: entropy_from_trace(trace, alpha)?,
                trace,
                method: Method::Chebyshev,
                alpha,
                sketches: config.sketches,
                degree: config.degree,
                lambda_max: Some(lam),
                elapsed_secs: setup + t.elapsed().as_secs_f64(),
            })
        })
        .collect()
}
