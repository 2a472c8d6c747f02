//! Dirichlet sampling and the analytic moment formulas.

use dirmix::rng::RngStream;
use dirmix::simplex::{dirichlet_cov, dirichlet_mean, dirichlet_third_central, sample_dirichlet, DirichletParam};
use proptest::prelude::*;

fn alpha_vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..20.0, 2..=8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn covariance_is_symmetric_psd_with_zero_row_sums(alpha in alpha_vector(), dirs in prop::collection::vec(-1.0f64..1.0, 8 * 20)) {
        let param = DirichletParam::new(alpha.clone()).unwrap();
        let cov = dirichlet_cov(&param);
        let n = alpha.len();
        for i in 0..n {
            prop_assert!(cov[i].iter().sum::<f64>().abs() < 1e-15);
            for j in 0..n {
                prop_assert_eq!(cov[i][j], cov[j][i]);
            }
        }
        for v in dirs.chunks(8).take(20) {
            let q: f64 = (0..n).map(|i| (0..n).map(|j| v[i] * cov[i][j] * v[j]).sum::<f64>()).sum();
            prop_assert!(q >= -1e-15, "quadratic form {q}");
        }
    }

    #[test]
    fn same_path_reproduces_samples(alpha in alpha_vector(), seed in any::<u64>(), path in 0u64..1000) {
        let param = DirichletParam::new(alpha).unwrap();
        let stream = RngStream::new(seed).split(path);
        let (mut a, mut b) = (stream.rng(), stream.rng());
        for _ in 0..5 {
            prop_assert_eq!(sample_dirichlet(&param, &mut a), sample_dirichlet(&param, &mut b));
        }
    }
}

/// Empirical mean and covariance over `10^5` draws within five standard errors.
#[test]
fn monte_carlo_moments_match_analytic() {
    const M: usize = 100_000;
    for (case, alpha) in [vec![1.0, 1.0, 1.0], vec![0.3, 2.0, 5.0, 0.7], vec![4.0, 0.0, 1.5]].into_iter().enumerate() {
        let param = DirichletParam::new(alpha).unwrap();
        let n = param.dim();
        let mean = dirichlet_mean(&param);
        let cov = dirichlet_cov(&param);
        let mut rng = RngStream::new(5).split(case as u64).rng();
        let draws: Vec<Vec<f64>> = (0..M).map(|_| sample_dirichlet(&param, &mut rng).into_vec()).collect();
        for i in 0..n {
            let xs: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let m = dirmix::stats::mean(&xs);
            let se = (dirmix::stats::sample_variance(&xs) / M as f64).sqrt();
            assert!((m - mean[i]).abs() <= 5.0 * se + 1e-15, "case {case} mean {i}: {m} vs {}", mean[i]);
            for j in 0..n {
                let prods: Vec<f64> = draws.iter().map(|d| (d[i] - mean[i]) * (d[j] - mean[j])).collect();
                let c = dirmix::stats::mean(&prods);
                let se = (dirmix::stats::sample_variance(&prods) / M as f64).sqrt();
                assert!((c - cov[i][j]).abs() <= 5.0 * se + 1e-15, "case {case} cov {i}{j}: {c} vs {}", cov[i][j]);
            }
        }
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// For `n = 2` the first coordinate is `Beta(a, b)`; integrate its third
/// central moment with the midpoint rule on `10^4` points.
#[test]
fn third_central_moment_matches_quadrature() {
    const GRID: usize = 10_000;
    for (a, b) in [(1u32, 1u32), (2, 3), (4, 1), (3, 7), (5, 5)] {
        let beta = factorial(a - 1) * factorial(b - 1) / factorial(a + b - 1);
        let m = f64::from(a) / f64::from(a + b);
        let h = 1.0 / GRID as f64;
        let integral: f64 = (0..GRID)
            .map(|k| {
                let x = (k as f64 + 0.5) * h;
                x.powi(a as i32 - 1) * (1.0 - x).powi(b as i32 - 1) / beta * (x - m).powi(3) * h
            })
            .sum();
        let param = DirichletParam::new(vec![f64::from(a), f64::from(b)]).unwrap();
        let closed = dirichlet_third_central(&param, 0, 0, 0);
        assert!((closed - integral).abs() < 1e-6, "({a},{b}): {closed} vs {integral}");
        // d_2 = -d_1 on the two-point simplex.
        assert!((dirichlet_third_central(&param, 0, 0, 1) + integral).abs() < 1e-6);
        assert!((dirichlet_third_central(&param, 1, 1, 1) + integral).abs() < 1e-6);
    }
}
