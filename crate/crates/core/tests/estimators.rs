mod common;

use common::{jacobi_eigen, lcg_samples, matmul, mean, mixture_gram, rel, rows, std_dev};
use proptest::prelude::*;
use renyi_core::kernel::{build_gram, GramMatrix, KernelSpec};
use renyi_core::lanczos::{
    lanczos_entropy, lanczos_factorize, lanczos_quadratic_forms, lanczos_steps, tridiag_alpha_first_column,
};
use renyi_core::linalg::{dot, DenseMatrix, DenseSymmetric};
use renyi_core::oracle::{eigen_spectrum, exact_entropy};
use renyi_core::poly::{
    chebyshev_coefficients, chebyshev_degree, chebyshev_entropy, chebyshev_entropy_grid, taylor_degree,
    taylor_entropy, Conditioning, TaylorPlan,
};
use renyi_core::sketch::{
    hutchinson_trace, integer_entropy, integer_entropy_grid, power_iteration, sample_sketch, EstimatorConfig,
    PowerSettings, SketchDistribution,
};
use renyi_core::special::gamma;

fn scaled(g: &GramMatrix, a: f64) -> DenseSymmetric {
    let n = g.order();
    DenseSymmetric::new(DenseMatrix::from_fn(n, n, |i, j| a * g.get(i, j))).unwrap()
}

fn mre(values: &[f64], exact: f64) -> f64 {
    mean(&values.iter().map(|&v| rel(v, exact)).collect::<Vec<_>>())
}

/// Binomial coefficients `C(alpha, k)` for `k = 0..len`.
fn binomials(alpha: f64, len: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for k in 0..len.saturating_sub(1) {
        let next = c[k] * (alpha - k as f64) / (k as f64 + 1.0);
        c.push(next);
    }
    c
}

// sketch core

#[test]
fn integer_estimate_of_scaled_identity() {
    let g = GramMatrix::scaled_identity(1024);
    let e = integer_entropy(&g, &EstimatorConfig::new(2.0).with_sketches(100)).unwrap();
    assert!((e.value - 10.0).abs() <= 0.01, "{}", e.value);
}

#[test]
fn integer_orders_on_mixture() {
    let g = mixture_gram(256, 10, 0);
    let alphas = [2.0, 3.0, 5.0, 8.0];
    let exact: Vec<f64> = alphas.iter().map(|&a| exact_entropy(&g, a).unwrap()).collect();
    let mut errors = vec![Vec::new(); alphas.len()];
    for seed in 0..100 {
        let config = EstimatorConfig::new(2.0).with_sketches(200).with_seed(seed);
        for (a, e) in integer_entropy_grid(&g, &config, &alphas).unwrap().iter().enumerate() {
            errors[a].push(rel(e.value, exact[a]));
        }
    }
    for (a, errs) in errors.iter().enumerate() {
        assert!(mean(errs) <= 1e-2, "alpha {}: MRE {}", alphas[a], mean(errs));
    }
}

#[test]
fn integer_error_shrinks_with_order() {
    // a spectrum away from I/n; near the identity the relative error is not
    // monotone in alpha
    let g = mixture_gram(256, 5, 0);
    let alphas = [2.0, 8.0];
    let exact: Vec<f64> = alphas.iter().map(|&a| exact_entropy(&g, a).unwrap()).collect();
    let mut errors = vec![Vec::new(); 2];
    for seed in 0..100 {
        let config = EstimatorConfig::new(2.0).with_sketches(200).with_seed(seed);
        for (a, e) in integer_entropy_grid(&g, &config, &alphas).unwrap().iter().enumerate() {
            errors[a].push(rel(e.value, exact[a]));
        }
    }
    assert!(mean(&errors[1]) <= mean(&errors[0]), "{} vs {}", mean(&errors[1]), mean(&errors[0]));
}

#[test]
fn hutchinson_is_linear_in_the_operator() {
    let g = mixture_gram(40, 3, 1);
    let batch = sample_sketch(40, 30, SketchDistribution::Gaussian, 5);
    let base = hutchinson_trace(&g, 1, &batch).unwrap();
    for a in [0.25, 2.0, 8.0] {
        // powers of two scale exactly
        assert_eq!(hutchinson_trace(&scaled(&g, a), 1, &batch).unwrap(), a * base);
    }
}

#[test]
fn hutchinson_matches_squared_trace() {
    let g = build_gram(&lcg_samples(16, 2, 3, 1.0), &KernelSpec::gaussian(0.7)).unwrap();
    let r = rows(&g);
    let sq = matmul(&r, &r);
    let exact: f64 = (0..16).map(|i| sq[i][i]).sum();
    let batch = sample_sketch(16, 10_000, SketchDistribution::Gaussian, 0);
    assert!(rel(hutchinson_trace(&g, 2, &batch).unwrap(), exact) <= 0.05);
}

#[test]
fn hutchinson_is_unbiased() {
    let g = build_gram(&lcg_samples(16, 2, 4, 1.0), &KernelSpec::gaussian(0.7)).unwrap();
    let r = rows(&g);
    let sq = matmul(&r, &r);
    let exact: f64 = (0..16).map(|i| sq[i][i]).sum();
    let estimates: Vec<f64> = (0..200)
        .map(|seed| hutchinson_trace(&g, 2, &sample_sketch(16, 10, SketchDistribution::Gaussian, seed)).unwrap())
        .collect();
    let bias = mean(&estimates) - exact;
    assert!(bias.abs() <= 2.0 * std_dev(&estimates) / 200f64.sqrt(), "bias {bias}");
}

#[test]
fn power_iteration_matches_oracle() {
    let g = build_gram(&lcg_samples(64, 2, 6, 1.0), &KernelSpec::gaussian(0.8)).unwrap();
    let p = power_iteration(&g, PowerSettings::default(), 0).unwrap();
    let lmax = eigen_spectrum(&g).unwrap().lambda_max();
    assert!(p.iterations <= 500);
    assert!((p.rayleigh - lmax).abs() <= 1e-4);
    assert!(p.bound >= lmax);

    let diag = DenseSymmetric::from_diagonal(&[1.0, 0.1, 0.01]);
    assert!((power_iteration(&diag, PowerSettings::default(), 0).unwrap().rayleigh - 1.0).abs() <= 1e-6);
}

#[test]
fn estimators_are_deterministic() {
    let g = mixture_gram(64, 3, 2);
    let c = EstimatorConfig::new(2.5).with_sketches(20).with_degree(12).with_seed(9);
    let ci = EstimatorConfig { alpha: 3.0, ..c };
    assert_eq!(integer_entropy(&g, &ci).unwrap().value, integer_entropy(&g, &ci).unwrap().value);
    assert_eq!(taylor_entropy(&g, &c).unwrap().value, taylor_entropy(&g, &c).unwrap().value);
    assert_eq!(chebyshev_entropy(&g, &c).unwrap().value, chebyshev_entropy(&g, &c).unwrap().value);
    assert_eq!(lanczos_entropy(&g, &c).unwrap().value, lanczos_entropy(&g, &c).unwrap().value);
}

// polynomial approximations

#[test]
fn taylor_degree_covers_scalar_truncation() {
    let (eps, alpha, kappa) = (0.1, 1.5, 10.0);
    let m = taylor_degree(eps, alpha, Conditioning::FullRank { kappa }).unwrap();
    let lmin = 1.0 / kappa;
    let target = lmin.powf(alpha);
    let c = binomials(alpha, 400);
    let f = |m: usize| (0..=m).map(|k| c[k] * (lmin - 1.0).powi(k as i32)).sum::<f64>();
    let smallest = (0..400).find(|&j| (target - f(j)).abs() <= eps * target).unwrap();
    assert!(m >= smallest, "formula {m} below brute-force minimum {smallest}");
    assert!((target - f(m)).abs() <= eps * target);
}

#[test]
fn rank_deficient_taylor_degree() {
    let g35 = 15.0 * std::f64::consts::PI.sqrt() / 8.0;
    let expected = (2.5 + (100.0 * g35 / (0.1 * std::f64::consts::PI)).powf(1.0 / 2.5)).ceil() as usize;
    assert_eq!(taylor_degree(0.1, 2.5, Conditioning::RankDeficient { n: 100 }).unwrap(), expected);
}

#[test]
fn taylor_scalar_truncation() {
    let (lambda, alpha, m) = (0.3, 0.5, 50);
    let plan = TaylorPlan::new(alpha, 1.0, m).unwrap();
    let c = binomials(alpha, 20_000);
    let tail: f64 = c[m + 1..].iter().enumerate().map(|(i, ck)| ck.abs() * 0.7f64.powi((m + 1 + i) as i32)).sum();
    // every tail term has the same sign here, so the bound is attained
    assert!((plan.evaluate(lambda) - lambda.sqrt()).abs() <= tail + 4.0 * f64::EPSILON);
}

#[test]
fn taylor_on_scaled_identity_is_hutchinson_noise() {
    let n = 1024;
    let g = GramMatrix::scaled_identity(n);
    let config = EstimatorConfig::new(1.5).with_sketches(100).with_degree(10);
    let e = taylor_entropy(&g, &config).unwrap();
    let batch = sample_sketch(n, 100, SketchDistribution::Gaussian, config.seed);
    let norms = mean(&batch.vectors.columns().map(|c| dot(c, c)).collect::<Vec<_>>());
    let expected = ((n as f64).powf(-1.5) * norms).log2() / (1.0 - 1.5);
    assert!((e.value - expected).abs() <= 1e-5, "{} vs {}", e.value, expected);
}

#[test]
fn fractional_estimators_on_mixture() {
    let g = mixture_gram(256, 10, 0);
    let cases: [(&str, f64, usize); 3] = [("taylor", 1.5, 30), ("chebyshev", 2.5, 40), ("lanczos", 1.5, 15)];
    for (name, alpha, m) in cases {
        let exact = exact_entropy(&g, alpha).unwrap();
        let values: Vec<f64> = (0..100)
            .map(|seed| {
                let c = EstimatorConfig::new(alpha).with_sketches(100).with_degree(m).with_seed(seed);
                match name {
                    "taylor" => taylor_entropy(&g, &c),
                    "chebyshev" => chebyshev_entropy(&g, &c),
                    _ => lanczos_entropy(&g, &c),
                }
                .unwrap()
                .value
            })
            .collect();
        assert!(mre(&values, exact) <= 1e-2, "{name}: MRE {}", mre(&values, exact));
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut s = f(a) + f(b);
    for i in 1..intervals {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn chebyshev_coefficients_match_quadrature() {
    use std::f64::consts::PI;
    for alpha in [0.5, 1.5, 2.5] {
        for lmax in [1.0, 0.3] {
            let plan = chebyshev_coefficients(alpha, lmax, 20).unwrap();
            for k in 0..=20 {
                let integral = simpson(
                    |t: f64| (lmax / 2.0 * (t.cos() + 1.0)).max(0.0).powf(alpha) * (k as f64 * t).cos(),
                    0.0,
                    PI,
                    400_000,
                );
                let expected = 2.0 / PI * integral;
                assert!(
                    (plan.coefficients()[k] - expected).abs() <= 1e-8,
                    "alpha {alpha} lmax {lmax} k {k}: {} vs {expected}",
                    plan.coefficients()[k]
                );
            }
        }
    }
}

#[test]
fn chebyshev_coefficients_match_closed_form() {
    let (alpha, lmax) = (1.3, 0.7);
    let plan = chebyshev_coefficients(alpha, lmax, 10).unwrap();
    let falling = |x: f64, k: usize| (0..k).map(|i| x - i as f64).product::<f64>();
    for k in 0..=10 {
        let direct = 2.0 * lmax.powf(alpha) * gamma(alpha + 0.5) * falling(alpha, k)
            / (std::f64::consts::PI.sqrt() * gamma(alpha + 1.0) * falling(alpha + k as f64, k));
        assert!(rel(plan.coefficients()[k], direct) <= 1e-12 || (plan.coefficients()[k] - direct).abs() <= 1e-15);
    }
    assert!((chebyshev_coefficients(0.5, 1.0, 0).unwrap().coefficients()[0] - 4.0 / std::f64::consts::PI).abs() < 1e-14);
}

#[test]
fn chebyshev_degree_covers_tail() {
    let (eps, alpha, kappa) = (0.1, 1.5, 10.0);
    let m = chebyshev_degree(eps, alpha, Conditioning::FullRank { kappa }).unwrap();
    let plan = chebyshev_coefficients(alpha, 1.0, 200_000).unwrap();
    let tail: f64 = plan.coefficients()[m + 1..].iter().map(|c| c.abs()).sum();
    assert!(tail <= eps * (1.0 / kappa).powf(alpha), "m {m}, tail {tail}");
}

#[test]
fn polynomial_estimators_converge_on_small_matrices() {
    let g = build_gram(&lcg_samples(48, 2, 11, 1.0), &KernelSpec::gaussian(0.3)).unwrap();
    for alpha in [1.5, 2.5] {
        let exact = exact_entropy(&g, alpha).unwrap();
        let c = EstimatorConfig::new(alpha).with_sketches(10_000).with_degree(100);
        let t = taylor_entropy(&g, &c).unwrap().value;
        let ch = chebyshev_entropy(&g, &c).unwrap().value;
        assert!(rel(t, exact) <= 5e-3, "taylor {t} vs {exact}");
        assert!(rel(ch, exact) <= 5e-3, "chebyshev {ch} vs {exact}");
    }
}

proptest! {
    #[test]
    fn degrees_grow_as_epsilon_shrinks(alpha in 0.1f64..5.0, kappa in 1.01f64..1e6, eps in 0.001f64..0.9) {
        prop_assume!(alpha.fract() != 0.0);
        let full = Conditioning::FullRank { kappa };
        prop_assert!(taylor_degree(eps / 2.0, alpha, full).unwrap() >= taylor_degree(eps, alpha, full).unwrap());
        prop_assert!(chebyshev_degree(eps / 2.0, alpha, full).unwrap() >= chebyshev_degree(eps, alpha, full).unwrap());
        prop_assert!(lanczos_steps(eps / 2.0, alpha, kappa).unwrap() >= lanczos_steps(eps, alpha, kappa).unwrap());
        prop_assert!(lanczos_steps(eps, alpha, kappa * 2.0).unwrap() >= lanczos_steps(eps, alpha, kappa).unwrap());
        prop_assert!(taylor_degree(eps, alpha, full).unwrap() as f64 > alpha);
    }

    #[test]
    fn chebyshev_coefficients_decay_past_alpha(alpha in 0.1f64..6.0, lmax in 0.01f64..2.0) {
        let plan = chebyshev_coefficients(alpha, lmax, 40).unwrap();
        let c = plan.coefficients();
        for k in (alpha.ceil() as usize)..40 {
            prop_assert!(c[k + 1].abs() <= c[k].abs());
        }
    }

    #[test]
    fn binomial_signs_alternate_past_alpha(alpha in 0.1f64..6.0) {
        prop_assume!(alpha.fract() != 0.0);
        let plan = TaylorPlan::new(alpha, 1.0, 30).unwrap();
        let c = plan.coefficients();
        for k in (alpha.ceil() as usize)..30 {
            prop_assert!(c[k] * c[k + 1] < 0.0);
        }
    }
}

// lanczos

#[test]
fn full_lanczos_reproduces_spectrum() {
    let g = build_gram(&lcg_samples(32, 3, 12, 1.0), &KernelSpec::gaussian(0.5)).unwrap();
    let start: Vec<f64> = (0..32).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
    let f = lanczos_factorize(&g, &start, 32).unwrap();
    assert_eq!(f.steps(), 32);
    let (ritz, _) = jacobi_eigen(&f.tridiagonal());
    let oracle = eigen_spectrum(&g).unwrap();
    for (a, b) in ritz.iter().zip(oracle.eigenvalues()) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

#[test]
fn lanczos_basis_and_recurrence() {
    let g = mixture_gram(64, 3, 13);
    let start: Vec<f64> = (0..64).map(|i| if i % 3 == 0 { 1.0 } else { -0.5 }).collect();
    let f = lanczos_factorize(&g, &start, 8).unwrap();
    let q: Vec<&[f64]> = f.basis.columns().collect();
    for i in 0..8 {
        for j in 0..8 {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((dot(q[i], q[j]) - expected).abs() <= 1e-8);
        }
    }
    // G Q - Q T vanishes except in the last column
    let t = f.tridiagonal();
    let gr = rows(&g);
    for j in 0..7 {
        let gq = common::matvec(&gr, q[j]);
        for r in 0..64 {
            let qt: f64 = (0..8).map(|l| q[l][r] * t[l][j]).sum();
            assert!((gq[r] - qt).abs() <= 1e-10);
        }
    }
    let spectrum = eigen_spectrum(&g).unwrap();
    for theta in jacobi_eigen(&t).0 {
        assert!(theta >= spectrum.lambda_min() - 1e-8 && theta <= spectrum.lambda_max() + 1e-8);
    }
}

#[test]
fn tridiagonal_power_matches_dense() {
    let (diag, off) = ([2.0, 3.0, 1.5], [0.5, -0.7]);
    let t = vec![
        vec![diag[0], off[0], 0.0],
        vec![off[0], diag[1], off[1]],
        vec![0.0, off[1], diag[2]],
    ];
    let (values, vectors) = jacobi_eigen(&t);
    for alpha in [0.5, 1.7, 3.0] {
        let p = tridiag_alpha_first_column(&diag, &off, alpha).unwrap();
        for (i, pi) in p.iter().enumerate() {
            let expected: f64 = (0..3).map(|l| vectors[i][l] * values[l].powf(alpha) * vectors[0][l]).sum();
            assert!((pi - expected).abs() <= 1e-10);
        }
    }
}

#[test]
fn lanczos_on_scaled_identity_is_exact() {
    let g = GramMatrix::scaled_identity(64);
    let e = lanczos_entropy(&g, &EstimatorConfig::new(1.5).with_sketches(5).with_degree(10)).unwrap();
    assert!((e.value - 6.0).abs() <= 1e-12);
}

#[test]
fn full_lanczos_equals_eigen_hutchinson() {
    let n = 32;
    let g = build_gram(&lcg_samples(n, 3, 14, 1.0), &KernelSpec::gaussian(0.5)).unwrap();
    let (values, vectors) = jacobi_eigen(&rows(&g));
    let batch = sample_sketch(n, 20, SketchDistribution::Rademacher, 3);
    for alpha in [0.5, 1.5, 2.5] {
        let forms = lanczos_quadratic_forms(&g, &batch, n, &[alpha]).unwrap();
        for (gi, form) in batch.vectors.columns().zip(&forms[0]) {
            let expected: f64 = (0..n)
                .map(|l| {
                    let proj: f64 = (0..n).map(|r| vectors[r][l] * gi[r]).sum();
                    values[l].max(0.0).powf(alpha) * proj * proj
                })
                .sum();
            assert!(rel(*form, expected) <= 1e-8, "{form} vs {expected}");
        }
    }
}

#[test]
fn lanczos_refines_with_more_steps() {
    let n = 128;
    let g = mixture_gram(n, 5, 15);
    let alpha = 1.5;
    let (values, vectors) = jacobi_eigen(&rows(&g));
    let exact = exact_entropy(&g, alpha).unwrap();
    let steps = [2usize, 4, 8, 16];
    let mut errors = vec![Vec::new(); steps.len()];
    let mut sketch_errors = Vec::new();
    for seed in 0..100 {
        let batch = sample_sketch(n, 10, SketchDistribution::Rademacher, seed);
        let hutch: f64 = mean(
            &batch
                .vectors
                .columns()
                .map(|gi| {
                    (0..n)
                        .map(|l| {
                            let proj: f64 = (0..n).map(|r| vectors[r][l] * gi[r]).sum();
                            values[l].max(0.0).powf(alpha) * proj * proj
                        })
                        .sum::<f64>()
                })
                .collect::<Vec<_>>(),
        );
        sketch_errors.push((hutch.log2() / (1.0 - alpha) - exact).abs());
        let forms = lanczos_quadratic_forms(&g, &batch, 16, &[alpha]);
        assert!(forms.is_ok());
        for (i, &m) in steps.iter().enumerate() {
            let f = lanczos_quadratic_forms(&g, &batch, m, &[alpha]).unwrap();
            errors[i].push((mean(&f[0]).log2() / (1.0 - alpha) - exact).abs());
        }
    }
    let noise = 2.0 * std_dev(&sketch_errors) / 10.0;
    for w in 0..steps.len() - 1 {
        assert!(
            mean(&errors[w + 1]) <= mean(&errors[w]) + noise,
            "m={} error {} vs m={} error {}",
            steps[w + 1],
            mean(&errors[w + 1]),
            steps[w],
            mean(&errors[w])
        );
    }
}

#[test]
fn lanczos_beats_chebyshev_at_equal_work() {
    let g = mixture_gram(256, 5, 16);
    let spectrum = eigen_spectrum(&g).unwrap();
    assert!(spectrum.condition_number() >= 100.0);
    let alpha = 1.5;
    let exact = exact_entropy(&g, alpha).unwrap();
    let (mut lz, mut ch) = (Vec::new(), Vec::new());
    for seed in 0..100 {
        let c = EstimatorConfig::new(alpha).with_sketches(50).with_degree(15).with_seed(seed);
        lz.push(lanczos_entropy(&g, &c).unwrap().value);
        ch.push(chebyshev_entropy_grid(&g, &c, &[alpha]).unwrap()[0].value);
    }
    assert!(mre(&lz, exact) <= mre(&ch, exact), "lanczos {} chebyshev {}", mre(&lz, exact), mre(&ch, exact));
}

#[test]
fn lanczos_step_counts() {
    assert_eq!(lanczos_steps(0.1, 0.5, 4.0).unwrap(), 2);
    let expected = (0.25 * 10.0 * (100f64.powf(2.5) / 0.01).ln()).ceil() as usize;
    assert_eq!(lanczos_steps(0.01, 2.0, 100.0).unwrap(), expected);
    assert_eq!(expected, 41);
    assert!(lanczos_steps(0.1, 0.5, 1.0).is_err());
}
