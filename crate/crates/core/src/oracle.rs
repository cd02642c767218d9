//! Exact entropies by full eigendecomposition. O(n^3); the reference every
//! estimator is checked against.

use crate::error::{Error, Result};
use crate::kernel::{hadamard_joint, GramMatrix};
use crate::linalg::{symmetric_eigenvalues, DenseSymmetric};
use crate::sketch::validate_alpha;

/// Eigenvalues below zero but above this are treated as round-off.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Eigenvalues sorted non-increasing, round-off negatives clamped to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    /// Sorts and clamps raw eigenvalues. Values at or below
    /// `n * f64::EPSILON * lambda_max`, the resolution of a dense symmetric
    /// eigensolver, become zero.
    pub fn from_eigenvalues(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "eigenvalues",
            });
        }
        if let Some(&bad) = values.iter().find(|&&v| v < -PSD_TOLERANCE) {
            return Err(Error::NotPsd { eigenvalue: bad });
        }
        let top = values.iter().copied().fold(0.0, f64::max);
        let floor = values.len() as f64 * f64::EPSILON * top;
        for v in values.iter_mut() {
            if *v <= floor {
                *v = 0.0;
            }
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self {
            eigenvalues: values,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// `lambda_max / lambda_min`; infinite for a singular spectrum.
    pub fn condition_number(&self) -> f64 {
        let lo = self.lambda_min();
        if lo > 0.0 {
            self.lambda_max() / lo
        } else {
            f64::INFINITY
        }
    }

    /// `sum lambda^alpha` with `0^alpha = 0`.
    pub fn trace_power(&self, alpha: f64) -> f64 {
        self.eigenvalues
            .iter()
            .rev()
            .filter(|&&l| l > 0.0)
            .map(|l| l.powf(alpha))
            .sum()
    }

    /// `log2(sum lambda^alpha) / (1 - alpha)` for a unit-trace spectrum,
    /// clipped to `[0, log2 n]`. Eigenvalues are rescaled by their sum first,
    /// which only removes rounding from the trace.
    pub fn entropy(&self, alpha: f64) -> Result<f64> {
        validate_alpha(alpha)?;
        let t = self.trace_power(alpha);
        if !(t > 0.0) {
            return Err(Error::CollapsedEstimate { value: t });
        }
        let total: f64 = self.eigenvalues.iter().rev().filter(|&&l| l > 0.0).sum();
        let h = (t / total.powf(alpha)).log2() / (1.0 - alpha);
        Ok(h.clamp(0.0, (self.len() as f64).log2()))
    }

    /// Same as [`Spectrum::entropy`] without clipping, for spectra that are
    /// not unit-trace.
    pub fn raw_entropy(&self, alpha: f64) -> Result<f64> {
        validate_alpha(alpha)?;
        let t = self.trace_power(alpha);
        if !(t > 0.0) {
            return Err(Error::CollapsedEstimate { value: t });
        }
        Ok(t.log2() / (1.0 - alpha))
    }
}

pub fn eigen_spectrum(g: &GramMatrix) -> Result<Spectrum> {
    Spectrum::from_eigenvalues(symmetric_eigenvalues(g.view())?)
}

pub fn symmetric_spectrum(m: &DenseSymmetric) -> Result<Spectrum> {
    Spectrum::from_eigenvalues(symmetric_eigenvalues(m.view())?)
}

/// `log2(tr(G^alpha)) / (1 - alpha)` in bits.
pub fn exact_entropy(g: &GramMatrix, alpha: f64) -> Result<f64> {
    validate_alpha(alpha)?;
    eigen_spectrum(g)?.entropy(alpha)
}

/// `S(X_1..X_L) + S(Y) - S(X_1..X_L, Y)`; joints by normalized Hadamard
/// product.
pub fn exact_mutual_information(gram_x: &[&GramMatrix], gram_y: &GramMatrix, alpha: f64) -> Result<f64> {
    validate_alpha(alpha)?;
    let joint_x = hadamard_joint(gram_x)?;
    let mut all = gram_x.to_vec();
    all.push(gram_y);
    let joint = hadamard_joint(&all)?;
    Ok(exact_entropy(&joint_x, alpha)? + exact_entropy(gram_y, alpha)? - exact_entropy(&joint, alpha)?)
}

/// `sum_i S(X_i) - S(X_1..X_L)`.
pub fn exact_total_correlation(grams: &[&GramMatrix], alpha: f64) -> Result<f64> {
    validate_alpha(alpha)?;
    if grams.len() < 2 {
        return Err(crate::error::invalid("total correlation needs at least two variables"));
    }
    let mut parts = grams
        .iter()
        .map(|g| exact_entropy(g, alpha))
        .collect::<Result<Vec<_>>>()?;
    parts.sort_by(f64::total_cmp);
    let joint = hadamard_joint(grams)?;
    Ok(parts.iter().sum::<f64>() - exact_entropy(&joint, alpha)?)
}
