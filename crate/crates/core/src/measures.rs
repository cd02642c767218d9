//! Mutual information, total correlation and greedy feature selection on top
//! of any entropy backend.

use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{build_gram, hadamard_joint, GramMatrix, KernelSpec, SampleSet};
use crate::lanczos::lanczos_entropy;
use crate::lowrank::{build_block_lowrank, default_clusters, default_rank};
use crate::oracle::{eigen_spectrum, symmetric_spectrum};
use crate::poly::{chebyshev_entropy, taylor_entropy};
use crate::sketch::{integer_entropy, EntropyEstimate, EstimatorConfig, Method, SpectralOperator};

/// One random variable: its samples and the kernel used for its Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub samples: SampleSet,
    pub kernel: KernelSpec,
}

impl Variable {
    pub fn new(samples: SampleSet, kernel: KernelSpec) -> Self {
        Self { samples, kernel }
    }

    pub fn gram(&self) -> Result<GramMatrix> {
        build_gram(&self.samples, &self.kernel)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Representation {
    #[default]
    Dense,
    /// `None` picks `ceil(n^(1/4))` clusters and rank `ceil(sqrt(n))`.
    BlockLowRank {
        clusters: Option<usize>,
        rank: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Backend {
    pub method: Method,
    pub representation: Representation,
}

impl Backend {
    pub fn dense(method: Method) -> Self {
        Self {
            method,
            representation: Representation::Dense,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeasureRequest {
    pub variables: Vec<Variable>,
    pub target: Option<Variable>,
    pub backend: Backend,
    pub config: EstimatorConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    /// Bits.
    pub value: f64,
    pub alpha: f64,
    pub method: Method,
    /// Entropy terms in the order they enter the formula.
    pub terms: Vec<EntropyEstimate>,
}

/// Entropy of `op` with any non-exact method.
pub fn estimate_entropy(op: &impl SpectralOperator, method: Method, config: &EstimatorConfig) -> Result<EntropyEstimate> {
    match method {
        Method::Exact => Err(invalid("the exact method needs a dense matrix")),
        Method::Trace => integer_entropy(op, config),
        Method::Taylor => taylor_entropy(op, config),
        Method::Chebyshev => chebyshev_entropy(op, config),
        Method::Lanczos => lanczos_entropy(op, config),
    }
}

fn exact_estimate(trace: f64, value: f64, alpha: f64, elapsed: f64) -> EntropyEstimate {
    EntropyEstimate {
        value,
        trace,
        method: Method::Exact,
        alpha,
        sketches: 0,
        degree: 0,
        lambda_max: None,
        elapsed_secs: elapsed,
    }
}

/// Entropy of a Gram matrix with any method, including the exact oracle.
pub fn gram_entropy(g: &GramMatrix, method: Method, config: &EstimatorConfig) -> Result<EntropyEstimate> {
    if method != Method::Exact {
        return estimate_entropy(g, method, config);
    }
    crate::sketch::validate_alpha(config.alpha)?;
    let start = Instant::now();
    let spectrum = eigen_spectrum(g)?;
    let value = spectrum.entropy(config.alpha)?;
    Ok(exact_estimate(
        spectrum.trace_power(config.alpha),
        value,
        config.alpha,
        start.elapsed().as_secs_f64(),
    ))
}

fn check_rows(vars: &[&Variable]) -> Result<usize> {
    let n = vars.first().ok_or_else(|| invalid("no variables given"))?.samples.rows();
    if let Some(v) = vars.iter().find(|v| v.samples.rows() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: v.samples.rows(),
        });
    }
    Ok(n)
}

fn canonical_cmp(a: &Variable, b: &Variable) -> Ordering {
    let key = |v: &Variable| match v.kernel {
        KernelSpec::Gaussian { sigma } => sigma,
        KernelSpec::Polynomial { .. } => f64::NAN,
    };
    key(a)
        .total_cmp(&key(b))
        .then(a.samples.cols().cmp(&b.samples.cols()))
        .then_with(|| {
            a.samples
                .values()
                .iter()
                .zip(b.samples.values())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Product of gaussian kernels as one gaussian kernel (bandwidth 1) on the
/// concatenated, bandwidth-scaled features. Variables are put in a
/// canonical order first so the result does not depend on list order.
fn joint_samples(vars: &[&Variable]) -> Result<(SampleSet, KernelSpec)> {
    if vars.iter().any(|v| !v.kernel.is_shift_invariant()) {
        return Err(Error::NotShiftInvariant);
    }
    if let [only] = vars {
        return Ok((only.samples.clone(), only.kernel));
    }
    let mut sorted = vars.to_vec();
    sorted.sort_by(|a, b| canonical_cmp(a, b));
    let scaled = sorted
        .iter()
        .map(|v| match v.kernel {
            KernelSpec::Gaussian { sigma } => v.samples.scaled(1.0 / sigma),
            KernelSpec::Polynomial { .. } => unreachable!("checked above"),
        })
        .collect::<Vec<_>>();
    let refs: Vec<&SampleSet> = scaled.iter().collect();
    Ok((SampleSet::concat(&refs)?, KernelSpec::gaussian(1.0)))
}

/// `S(X_1, ..., X_L)` with the joint taken as a normalized Hadamard product.
pub fn joint_entropy(vars: &[&Variable], backend: &Backend, config: &EstimatorConfig) -> Result<EntropyEstimate> {
    let n = check_rows(vars)?;
    match backend.representation {
        Representation::Dense => {
            let grams = vars.iter().map(|v| v.gram()).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&GramMatrix> = grams.iter().collect();
            let joint = hadamard_joint(&refs)?;
            gram_entropy(&joint, backend.method, config)
        }
        Representation::BlockLowRank { clusters, rank } => {
            let (samples, kernel) = joint_samples(vars)?;
            let c = clusters.unwrap_or_else(|| default_clusters(n));
            let k = rank.unwrap_or_else(|| default_rank(n));
            let blr = build_block_lowrank(&samples, &kernel, c, k, config.seed)?;
            if backend.method == Method::Exact {
                crate::sketch::validate_alpha(config.alpha)?;
                let start = Instant::now();
                let spectrum = symmetric_spectrum(&blr.materialize())?;
                let value = spectrum.raw_entropy(config.alpha)?;
                Ok(exact_estimate(
                    spectrum.trace_power(config.alpha),
                    value,
                    config.alpha,
                    start.elapsed().as_secs_f64(),
                ))
            } else {
                estimate_entropy(&blr, backend.method, config)
            }
        }
    }
}

/// `S(X_1..X_L) + S(Y) - S(X_1..X_L, Y)`. Every term uses `config.seed`, so
/// all three share their sketch vectors.
pub fn mutual_information(req: &MeasureRequest) -> Result<MeasureEstimate> {
    let target = req.target.as_ref().ok_or_else(|| invalid("mutual information needs a target"))?;
    if req.variables.is_empty() {
        return Err(invalid("mutual information needs at least one variable"));
    }
    let xs: Vec<&Variable> = req.variables.iter().collect();
    let mut all = xs.clone();
    all.push(target);
    check_rows(&all)?;
    let hx = joint_entropy(&xs, &req.backend, &req.config)?;
    let hy = joint_entropy(&[target], &req.backend, &req.config)?;
    let hxy = joint_entropy(&all, &req.backend, &req.config)?;
    Ok(MeasureEstimate {
        value: hx.value + hy.value - hxy.value,
        alpha: req.config.alpha,
        method: req.backend.method,
        terms: vec![hx, hy, hxy],
    })
}

/// `sum_i S(X_i) - S(X_1..X_L)`. Individual entropies are summed in sorted
/// order so the value does not depend on the order of the variables.
pub fn total_correlation(req: &MeasureRequest) -> Result<MeasureEstimate> {
    if req.variables.len() < 2 {
        return Err(invalid("total correlation needs at least two variables"));
    }
    let xs: Vec<&Variable> = req.variables.iter().collect();
    check_rows(&xs)?;
    let mut terms = xs
        .iter()
        .map(|v| joint_entropy(&[v], &req.backend, &req.config))
        .collect::<Result<Vec<_>>>()?;
    let joint = joint_entropy(&xs, &req.backend, &req.config)?;
    let mut parts: Vec<f64> = terms.iter().map(|t| t.value).collect();
    parts.sort_by(f64::total_cmp);
    let value = parts.iter().sum::<f64>() - joint.value;
    terms.push(joint);
    Ok(MeasureEstimate {
        value,
        alpha: req.config.alpha,
        method: req.backend.method,
        terms,
    })
}

/// Settings shared by every mutual-information evaluation of a greedy
/// selection run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionTemplate {
    pub feature_kernel: KernelSpec,
    pub label_kernel: KernelSpec,
    pub backend: Backend,
    pub config: EstimatorConfig,
}

/// Forward selection of `count` feature columns, each step adding the
/// column that maximizes `I(selected + candidate; labels)`. Ties go to the
/// lowest column index.
pub fn greedy_feature_selection(
    features: &SampleSet,
    labels: &SampleSet,
    count: usize,
    template: &SelectionTemplate,
) -> Result<Vec<usize>> {
    let d = features.cols();
    if count > d {
        return Err(invalid(format!("cannot select {count} of {d} features")));
    }
    if features.rows() != labels.rows() {
        return Err(Error::DimensionMismatch {
            expected: features.rows(),
            found: labels.rows(),
        });
    }
    let columns = (0..d)
        .map(|j| Ok(Variable::new(features.select_columns(&[j])?, template.feature_kernel)))
        .collect::<Result<Vec<_>>>()?;
    let target = Variable::new(labels.clone(), template.label_kernel);

    let mut selected: Vec<usize> = Vec::with_capacity(count);
    while selected.len() < count {
        let candidates: Vec<usize> = (0..d).filter(|j| !selected.contains(j)).collect();
        let scores = candidates
            .par_iter()
            .map(|&j| {
                let mut vars: Vec<Variable> = selected.iter().map(|&i| columns[i].clone()).collect();
                vars.push(columns[j].clone());
                let req = MeasureRequest {
                    variables: vars,
                    target: Some(target.clone()),
                    backend: template.backend,
                    config: template.config,
                };
                mutual_information(&req).map(|m| m.value)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut best = 0;
        for (pos, &score) in scores.iter().enumerate() {
            if score > scores[best] {
                best = pos;
            }
        }
        selected.push(candidates[best]);
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(values: Vec<f64>, cols: usize) -> Variable {
        let rows = values.len() / cols;
        Variable::new(SampleSet::new(rows, cols, values).unwrap(), KernelSpec::gaussian(1.0))
    }

    fn exact_request(variables: Vec<Variable>, target: Option<Variable>) -> MeasureRequest {
        MeasureRequest {
            variables,
            target,
            backend: Backend::dense(Method::Exact),
            config: EstimatorConfig::new(2.0),
        }
    }

    #[test]
    fn exact_method_needs_dense_input() {
        let g = GramMatrix::scaled_identity(3);
        assert!(estimate_entropy(&g, Method::Exact, &EstimatorConfig::new(2.0)).is_err());
        let e = gram_entropy(&g, Method::Exact, &EstimatorConfig::new(2.0)).unwrap();
        assert!((e.value - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_needs_target() {
        let x = var((0..10).map(f64::from).collect(), 1);
        assert!(mutual_information(&exact_request(vec![x], None)).is_err());
    }

    #[test]
    fn pair_total_correlation_equals_mutual_information() {
        let x = var((0..12).map(|i| (i as f64 * 0.7).sin()).collect(), 1);
        let y = var((0..12).map(|i| (i as f64 * 0.3).cos() * 2.0).collect(), 1);
        let mi = mutual_information(&exact_request(vec![x.clone()], Some(y.clone()))).unwrap();
        let tc = total_correlation(&exact_request(vec![x, y], None)).unwrap();
        assert!((mi.value - tc.value).abs() < 1e-12);
        assert_eq!(mi.terms.len(), 3);
    }

    #[test]
    fn rows_must_agree() {
        let x = var(vec![0.0, 1.0, 2.0], 1);
        let y = var(vec![0.0, 1.0], 1);
        assert!(matches!(
            mutual_information(&exact_request(vec![x], Some(y))),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn block_low_rank_refuses_polynomial() {
        let x = Variable::new(SampleSet::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap(), KernelSpec::polynomial(1.0, 2));
        let backend = Backend {
            method: Method::Chebyshev,
            representation: Representation::BlockLowRank {
                clusters: Some(2),
                rank: Some(1),
            },
        };
        assert!(matches!(
            joint_entropy(&[&x], &backend, &EstimatorConfig::new(1.5)),
            Err(Error::NotShiftInvariant)
        ));
    }

    #[test]
    fn selection_count_is_checked() {
        let f = SampleSet::new(3, 2, vec![0.0; 6]).unwrap();
        let l = SampleSet::new(3, 1, vec![0.0; 3]).unwrap();
        let t = SelectionTemplate {
            feature_kernel: KernelSpec::gaussian(1.0),
            label_kernel: KernelSpec::gaussian(1.0),
            backend: Backend::dense(Method::Exact),
            config: EstimatorConfig::new(2.0),
        };
        assert!(greedy_feature_selection(&f, &l, 3, &t).is_err());
    }
}
