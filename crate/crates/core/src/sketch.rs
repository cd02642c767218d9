//! Random sketches, Hutchinson trace estimation, power iteration and the
//! integer-order entropy estimator.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, ColumnBlock};

/// Matrix-vector product provider. Estimators only ever touch a matrix
/// through this trait.
pub trait SpectralOperator: Sync {
    fn order(&self) -> usize;

    /// `output = G * input`, column by column.
    fn apply_block(&self, input: &ColumnBlock, output: &mut ColumnBlock);

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.order();
        let input = ColumnBlock::from_column_major(n, 1, v.to_vec())
            .expect("vector length must match operator order");
        let mut output = ColumnBlock::zeros(n, 1);
        self.apply_block(&input, &mut output);
        output.as_slice().to_vec()
    }
}

impl<T: SpectralOperator + ?Sized> SpectralOperator for &T {
    fn order(&self) -> usize {
        (**self).order()
    }

    fn apply_block(&self, input: &ColumnBlock, output: &mut ColumnBlock) {
        (**self).apply_block(input, output)
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (**self).apply(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchDistribution {
    Gaussian,
    Rademacher,
}

/// `s` random probe vectors of length `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchBatch {
    pub vectors: ColumnBlock,
    pub distribution: SketchDistribution,
    pub seed: u64,
}

impl SketchBatch {
    pub fn len(&self) -> usize {
        self.vectors.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.cols() == 0
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn fill(out: &mut [f64], distribution: SketchDistribution, rng: &mut ChaCha8Rng) {
    match distribution {
        SketchDistribution::Gaussian => {
            for x in out.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
        }
        SketchDistribution::Rademacher => {
            for x in out.iter_mut() {
                *x = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
        }
    }
}

/// Column `index` of the batch `sample_sketch(n, _, distribution, seed)`.
/// Column `i` is a function of `(seed, i)` only, so smaller batches are
/// prefixes of larger ones.
pub fn sketch_column(n: usize, index: usize, distribution: SketchDistribution, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    fill(&mut v, distribution, &mut stream_rng(seed, index as u64));
    v
}

pub fn sample_sketch(n: usize, s: usize, distribution: SketchDistribution, seed: u64) -> SketchBatch {
    let mut vectors = ColumnBlock::zeros(n, s);
    if n > 0 {
        vectors
            .as_mut_slice()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(j, col)| fill(col, distribution, &mut stream_rng(seed, j as u64)));
    }
    SketchBatch {
        vectors,
        distribution,
        seed,
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

/// `forms[p - 1][i] = g_i^T G^p g_i` for `p = 1..=max_power`, computed by
/// repeated application of `op` to the whole batch.
pub fn power_quadratic_forms(
    op: &impl SpectralOperator,
    batch: &SketchBatch,
    max_power: usize,
) -> Result<Vec<Vec<f64>>> {
    check_batch(op, batch)?;
    let (n, s) = (op.order(), batch.len());
    let mut current = batch.vectors.clone();
    let mut next = ColumnBlock::zeros(n, s);
    let mut forms = Vec::with_capacity(max_power);
    for _ in 0..max_power {
        op.apply_block(&current, &mut next);
        std::mem::swap(&mut current, &mut next);
        let row: Vec<f64> = batch
            .vectors
            .columns()
            .zip(current.columns())
            .map(|(g, w)| dot(g, w))
            .collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "quadratic form",
            });
        }
        forms.push(row);
    }
    Ok(forms)
}

/// `(1/s) sum_i g_i^T G^power g_i`.
pub fn hutchinson_trace(op: &impl SpectralOperator, power: usize, batch: &SketchBatch) -> Result<f64> {
    if power == 0 {
        return Err(invalid("power must be positive"));
    }
    let forms = power_quadratic_forms(op, batch, power)?;
    Ok(mean(&forms[power - 1]))
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSettings {
    pub max_iters: usize,
    /// Relative tolerance on successive Rayleigh quotients and on the
    /// eigen-residual.
    pub tol: f64,
}

impl Default for PowerSettings {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-8,
        }
    }
}

/// Inflation applied to the Rayleigh quotient so `[0, bound]` covers the
/// true top eigenvalue.
pub const POWER_INFLATION: f64 = 1.0 + 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerEstimate {
    /// Inflated estimate, the value series estimators should use.
    pub bound: f64,
    pub rayleigh: f64,
    pub iterations: usize,
}

const MAX_START_ATTEMPTS: usize = 3;

/// Largest eigenvalue of a symmetric PSD operator.
///
/// Stops when successive Rayleigh quotients agree to `tol` (relative) or the
/// residual `|Gv - rho v|` drops below `tol * rho`.
pub fn power_iteration(op: &impl SpectralOperator, settings: PowerSettings, seed: u64) -> Result<PowerEstimate> {
    let n = op.order();
    if n == 0 {
        return Err(invalid("operator has order zero"));
    }
    'attempt: for attempt in 0..MAX_START_ATTEMPTS {
        let stream = u64::MAX - attempt as u64;
        let mut v = vec![0.0; n];
        fill(&mut v, SketchDistribution::Gaussian, &mut stream_rng(seed, stream));
        let nv = norm(&v);
        if nv == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nv);

        let mut previous = f64::NAN;
        let mut rho = 0.0;
        for it in 1..=settings.max_iters.max(1) {
            let w = op.apply(&v);
            rho = dot(&v, &w);
            let nw = norm(&w);
            if !nw.is_finite() || !rho.is_finite() {
                return Err(Error::NonFinite {
                    context: "power iteration",
                });
            }
            if nw == 0.0 {
                continue 'attempt;
            }
            let residual = w
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - rho * b).powi(2))
                .sum::<f64>()
                .sqrt();
            let converged = residual <= settings.tol * rho.abs()
                || (rho - previous).abs() <= settings.tol * rho.abs();
            if converged || it == settings.max_iters {
                return Ok(PowerEstimate {
                    bound: rho * POWER_INFLATION,
                    rayleigh: rho,
                    iterations: it,
                });
            }
            previous = rho;
            v = w.into_iter().map(|x| x / nw).collect();
        }
        return Ok(PowerEstimate {
            bound: rho * POWER_INFLATION,
            rayleigh: rho,
            iterations: settings.max_iters,
        });
    }
    Err(Error::ZeroVector {
        attempts: MAX_START_ATTEMPTS,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    /// Integer-order Hutchinson estimator.
    Trace,
    Taylor,
    Chebyshev,
    Lanczos,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Exact,
        Method::Trace,
        Method::Taylor,
        Method::Chebyshev,
        Method::Lanczos,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Trace => "trace",
            Method::Taylor => "taylor",
            Method::Chebyshev => "chebyshev",
            Method::Lanczos => "lanczos",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Method::Exact),
            "trace" | "integer" => Ok(Method::Trace),
            "taylor" => Ok(Method::Taylor),
            "chebyshev" => Ok(Method::Chebyshev),
            "lanczos" => Ok(Method::Lanczos),
            other => Err(invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Checks `alpha > 0`, finite, and away from 1.
pub fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && (alpha - 1.0).abs() >= 1e-6 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub alpha: f64,
    pub sketches: usize,
    /// Polynomial degree or Lanczos steps. Ignored by the integer estimator.
    pub degree: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub power: PowerSettings,
}

impl EstimatorConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            sketches: 100,
            degree: 30,
            delta: 0.1,
            epsilon: 0.1,
            seed: 0,
            power: PowerSettings::default(),
        }
    }

    pub fn with_sketches(mut self, s: usize) -> Self {
        self.sketches = s;
        self
    }

    pub fn with_degree(mut self, m: usize) -> Self {
        self.degree = m;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_accuracy(mut self, epsilon: f64, delta: f64) -> Self {
        self.epsilon = epsilon;
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_alpha(self.alpha)?;
        if self.sketches < 1 {
            return Err(invalid("need at least one sketch vector"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// `alpha` as an integer `>= 2`, if it is one.
    pub fn integer_alpha(&self) -> Option<usize> {
        integer_order(self.alpha)
    }
}

pub(crate) fn integer_order(alpha: f64) -> Option<usize> {
    (alpha >= 2.0 && alpha.fract() == 0.0 && alpha < 1e6).then_some(alpha as usize)
}

/// `ceil(8 ln(2/delta) / epsilon^2)`: sketch count for the integer and
/// polynomial estimators.
pub fn integer_sketch_count(epsilon: f64, delta: f64) -> usize {
    (8.0 * (2.0 / delta).ln() / (epsilon * epsilon)).ceil() as usize
}

/// `ceil(24 ln(2/delta) / epsilon^2)`: sketch count for Lanczos quadrature.
pub fn lanczos_sketch_count(epsilon: f64, delta: f64) -> usize {
    (24.0 * (2.0 / delta).ln() / (epsilon * epsilon)).ceil() as usize
}

/// `|log2(1 - epsilon) / (1 - alpha)|`, the entropy error implied by a
/// relative trace error of `epsilon`.
pub fn entropy_error_bound(alpha: f64, epsilon: f64) -> f64 {
    ((1.0 - epsilon).log2() / (1.0 - alpha)).abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// Entropy in bits.
    pub value: f64,
    /// Estimated `tr(G^alpha)`.
    pub trace: f64,
    pub method: Method,
    pub alpha: f64,
    pub sketches: usize,
    pub degree: usize,
    pub lambda_max: Option<f64>,
    pub elapsed_secs: f64,
}

/// `log2(trace) / (1 - alpha)`, failing on a non-positive trace.
pub fn entropy_from_trace(trace: f64, alpha: f64) -> Result<f64> {
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::CollapsedEstimate { value: trace });
    }
    Ok(trace.log2() / (1.0 - alpha))
}

/// Integer-order estimator: `log2((1/s) sum g^T G^alpha g) / (1 - alpha)`
/// with Gaussian probes.
pub fn integer_entropy(op: &impl SpectralOperator, config: &EstimatorConfig) -> Result<EntropyEstimate> {
    Ok(integer_entropy_grid(op, config, &[config.alpha])?.remove(0))
}

/// [`integer_entropy`] for several integer orders sharing one sketch batch
/// and one chain of products. `config.alpha` is ignored.
pub fn integer_entropy_grid(
    op: &impl SpectralOperator,
    config: &EstimatorConfig,
    alphas: &[f64],
) -> Result<Vec<EntropyEstimate>> {
    let orders = alphas
        .iter()
        .map(|&a| integer_order(a).ok_or_else(|| invalid(format!("alpha = {a} is not an integer >= 2"))))
        .collect::<Result<Vec<_>>>()?;
    EstimatorConfig { alpha: 2.0, ..*config }.validate()?;
    let start = Instant::now();
    let batch = sample_sketch(op.order(), config.sketches, SketchDistribution::Gaussian, config.seed);
    let max_power = orders.iter().copied().max().unwrap_or(2);
    let forms = power_quadratic_forms(op, &batch, max_power)?;
    let elapsed = start.elapsed().as_secs_f64();
    orders
        .iter()
        .zip(alphas)
        .map(|(&p, &alpha)| {
            let trace = mean(&forms[p - 1]);
            Ok(EntropyEstimate {
                value: entropy_from_trace(trace, alpha)?,
                trace,
                method: Method::Trace,
                alpha,
                sketches: config.sketches,
                degree: p,
                lambda_max: None,
                elapsed_secs: elapsed,
            })
        })
        .collect()
}
