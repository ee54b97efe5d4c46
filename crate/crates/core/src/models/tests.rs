use super::*;
use crate::fd;
use crate::geometry::Point;
use approx::assert_relative_eq;
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn pt(x: &[f64]) -> Point {
    Point::from_slice(x).unwrap()
}

fn gaussian_pair() -> ModelPair {
    builtin_location_scale(LocationScalePairSpec {
        phi: SymmetricBase::standard_normal(),
        phi_tilde: SymmetricBase::standard_normal(),
    })
    .unwrap()
}

fn mixed_pair() -> ModelPair {
    builtin_location_scale(LocationScalePairSpec {
        phi: SymmetricBase::standard_normal(),
        phi_tilde: SymmetricBase::logistic(),
    })
    .unwrap()
}

#[test]
fn gaussian_location_scale_constants() {
    let pair = gaussian_pair();
    let c = pair.ls_constants().unwrap();
    assert_relative_eq!(c.a, 1.0, max_relative = 1e-9);
    assert_relative_eq!(c.b, 2.0, max_relative = 1e-9);
    assert_relative_eq!(c.a_tilde, 1.0, max_relative = 1e-9);
    assert_relative_eq!(c.b_tilde, 2.0, max_relative = 1e-9);
}

#[test]
fn logistic_location_information_is_one_third() {
    let pair = mixed_pair();
    let c = pair.ls_constants().unwrap();
    assert_relative_eq!(c.a_tilde, 1.0 / 3.0, max_relative = 1e-8);
    assert!(c.b_tilde > 0.0);
}

#[test]
fn location_scale_metric_shape() {
    let pair = gaussian_pair();
    for sigma in [0.5, 1.0, 2.0] {
        let g = pair.x_model().tensors().metric(&[0.3, sigma]);
        assert_relative_eq!(g[(0, 0)], 1.0 / (sigma * sigma), max_relative = 1e-9);
        assert_relative_eq!(g[(1, 1)], 2.0 / (sigma * sigma), max_relative = 1e-9);
        assert!(g[(0, 1)].abs() <= 1e-8);
    }
}

#[test]
fn poisson_builtin_metrics() {
    let pair = builtin_poisson(PoissonPairSpec::new(vec![0.1, 0.2]).unwrap()).unwrap();
    let g = pair.x_model().tensors().metric(&[1.0, 1.0]);
    let gt = pair.y_model().tensors().metric(&[1.0, 1.0]);
    assert!((g - nalgebra::DMatrix::identity(2, 2)).norm() < 1e-14);
    assert_relative_eq!(gt[(0, 0)], 0.1, max_relative = 1e-14);
    assert_relative_eq!(gt[(1, 1)], 0.2, max_relative = 1e-14);
    // predictive metric diag(1/(s_i lambda_i))
    let gring = pair.predictive_metric().eval(&pt(&[1.0, 1.0])).unwrap();
    assert_relative_eq!(gring[(0, 0)], 10.0, max_relative = 1e-12);
    assert_relative_eq!(gring[(1, 1)], 5.0, max_relative = 1e-12);
}

#[test]
fn identical_normal_models_share_metric() {
    let sigma = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let pair = builtin_normal(NormalPairSpec::new(sigma.clone(), sigma).unwrap()).unwrap();
    let p = [0.4, -1.0];
    let g = pair.x_model().tensors().metric(&p);
    let gt = pair.y_model().tensors().metric(&p);
    assert!((g - gt).norm() < 1e-14);
}

#[test]
fn normal_fisher_metric_numeric_scalar() {
    let pair = builtin_normal(
        NormalPairSpec::new(
            nalgebra::DMatrix::from_element(1, 1, 1.0),
            nalgebra::DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap(),
    )
    .unwrap();
    let scheme = ExpectationScheme::GaussHermite {
        chol: nalgebra::DMatrix::from_element(1, 1, 1.0),
        nodes: 40,
    };
    let g = fisher_metric_numeric(pair.x_model(), &[0.7], &scheme, pair.domain()).unwrap();
    assert_relative_eq!(g[(0, 0)], 1.0, max_relative = 1e-6);
}

#[test]
fn location_scale_fisher_metric_numeric() {
    let pair = gaussian_pair();
    let scheme = ExpectationScheme::RealLineQuadrature { tol: 1e-9 };
    for theta in [[0.0, 1.0], [1.0, 0.7], [-2.0, 2.5]] {
        let g = fisher_metric_numeric(pair.x_model(), &theta, &scheme, pair.domain()).unwrap();
        let s2 = theta[1] * theta[1];
        assert_relative_eq!(g[(0, 0)], 1.0 / s2, max_relative = 1e-6);
        assert_relative_eq!(g[(1, 1)], 2.0 / s2, max_relative = 1e-6);
        assert!(g[(0, 1)].abs() < 1e-8 / s2);
    }
}

#[test]
fn poisson_fisher_metric_numeric_target_model() {
    let pair = builtin_poisson(PoissonPairSpec::new(vec![1.0]).unwrap()).unwrap();
    let scheme = ExpectationScheme::CountLattice { mass_tol: 1e-12 };
    let g = fisher_metric_numeric(pair.y_model(), &[4.0], &scheme, pair.domain()).unwrap();
    assert_relative_eq!(g[(0, 0)], 0.25, max_relative = 1e-6);
}

#[test]
fn fisher_metric_monte_carlo_within_three_se() {
    let pair = builtin_normal(
        NormalPairSpec::new(
            nalgebra::DMatrix::from_element(1, 1, 2.0),
            nalgebra::DMatrix::from_element(1, 1, 2.0),
        )
        .unwrap(),
    )
    .unwrap();
    let (mean, se) =
        fisher_metric_mc_with_se(pair.x_model(), &[0.0], 20_000, 99, pair.domain()).unwrap();
    assert!(
        (mean[(0, 0)] - 0.5).abs() <= 3.0 * se[(0, 0)] + 1e-6,
        "MC estimate {} +- {} vs 0.5",
        mean[(0, 0)],
        se[(0, 0)]
    );
}

#[test]
fn poisson_skewness_matches_series_oracle() {
    // Brute-force series for E[(x/lambda - 1)^3] under Po(lambda), and the
    // same sum with a 50% longer truncation to confirm convergence.
    let series = |lam: f64, cutoff: usize| -> f64 {
        let mut acc = 0.0;
        for x in 0..=cutoff {
            let log_p = super::poisson::log_poisson_pmf(x as f64, lam);
            acc += log_p.exp() * (x as f64 / lam - 1.0).powi(3);
        }
        acc
    };
    let pair = builtin_poisson(PoissonPairSpec::new(vec![1.0]).unwrap()).unwrap();
    for lam in [0.5f64, 1.0, 3.0] {
        let cutoff = (lam + 12.0 * lam.sqrt() + 30.0) as usize;
        let oracle = series(lam, cutoff);
        let longer = series(lam, cutoff + cutoff / 2);
        assert!((oracle - longer).abs() < 1e-10, "truncation not converged");
        assert_relative_eq!(oracle, 1.0 / (lam * lam), max_relative = 1e-9);
        let t = pair.x_model().tensors().skewness(&[lam]);
        assert_relative_eq!(t.get(0, 0, 0), oracle, max_relative = 1e-9);
    }
}

#[test]
fn normal_location_tensors_vanish() {
    let sigma = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    let pair = builtin_normal(NormalPairSpec::new(sigma.clone(), sigma).unwrap()).unwrap();
    let p = pt(&[0.1, 0.2]);
    let (t, ge, gm) = t_tensor_and_connections(pair.x_model().tensors(), &p).unwrap();
    assert_eq!(t.max_abs(), 0.0);
    assert_eq!(ge.max_abs(), 0.0);
    assert_eq!(gm.max_abs(), 0.0);
}

#[test]
fn location_scale_gamma_e_against_quadrature_oracle() {
    // Gamma^e_{mu mu sigma} = E[(log phi)''(z) * -(1+z (log phi)'(z))] / sigma^3;
    // for the Gaussian base the integrand is -(z^2 - 1) phi(z) with mean 0.
    let oracle = crate::quad::real_line(
        &|z: f64| {
            let phi = (-(z * z) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            -(z * z - 1.0) * phi
        },
        1e-12,
        1e-12,
    )
    .unwrap();
    let pair = gaussian_pair();
    let ge = pair.x_model().tensors().gamma_e(&[0.0, 1.0]);
    assert_relative_eq!(ge.get(0, 0, 1), oracle, epsilon = 1e-9);
    assert!(oracle.abs() < 1e-10);
}

fn duality_defect(provider: &TensorProvider, domain: &crate::geometry::Domain, x: &[f64]) -> f64 {
    let d = provider.dim();
    let metric = provider.clone();
    let dg = fd::matrix_derivatives(
        &move |y: &[f64]| metric.metric(y),
        x,
        &fd::FdScales::unit(d),
        domain,
    )
    .unwrap();
    let ge = provider.gamma_e(x);
    let gm = provider.gamma_m(x);
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let lhs = dg[i][(j, k)];
                let rhs = ge.get(i, j, k) + gm.get(i, k, j);
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    worst
}

#[test]
fn duality_holds_for_builtins() {
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    let ls = mixed_pair();
    let po = builtin_poisson(PoissonPairSpec::new(vec![0.5, 1.7]).unwrap()).unwrap();
    let no = builtin_normal(
        NormalPairSpec::new(
            nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]),
            nalgebra::DMatrix::from_row_slice(2, 2, &[0.8, -0.1, -0.1, 0.6]),
        )
        .unwrap(),
    )
    .unwrap();
    for pair in [&ls, &po, &no] {
        for _ in 0..20 {
            let x = match pair.family() {
                Family::LocationScale(_) => {
                    vec![rng.random_range(-2.0..2.0), rng.random_range(0.3..3.0)]
                }
                _ => vec![rng.random_range(0.3..3.0), rng.random_range(0.3..3.0)],
            };
            for model in [pair.x_model(), pair.y_model()] {
                let defect = duality_defect(model.tensors(), pair.domain(), &x);
                assert!(
                    defect < 1e-6,
                    "duality defect {defect:.3e} for {} at {x:?}",
                    model.label()
                );
            }
        }
    }
}

#[test]
fn gamma0_matches_riemannian_connection() {
    // (gamma_e + gamma_m) / 2 agrees with the connection derived from metric
    // derivatives.
    let pair = mixed_pair();
    let p = pt(&[0.4, 1.3]);
    let m = pair.metric_x();
    let from_metric = crate::geometry::riemannian_connection(&m, &p).unwrap();
    let t = pair.x_model().tensors();
    let ge = t.gamma_e(p.coords());
    let gm = t.gamma_m(p.coords());
    let avg = &(&ge + &gm) * 0.5;
    let diff = (&avg - &from_metric).max_abs();
    assert!(diff < 1e-6, "gamma0 defect {diff:.3e}");
}

#[test]
fn numeric_provider_matches_analytic_tensors() {
    // the integrands carry finite-difference score noise of order 1e-8, so
    // the quadrature tolerance sits just above it
    let pair = gaussian_pair();
    let scheme = ExpectationScheme::RealLineQuadrature { tol: 3e-8 };
    let numeric = numeric_provider(pair.x_model(), scheme, 2, pair.domain().clone());
    assert_eq!(numeric.mode(), TensorMode::Quadrature);
    let theta = [0.5, 1.2];
    let g_num = numeric.metric(&theta);
    let g_ana = pair.x_model().tensors().metric(&theta);
    assert!(
        (g_num.clone() - g_ana.clone()).norm() < 1e-5,
        "metric defect {:.3e}",
        (g_num - g_ana).norm()
    );
    let ge_num = numeric.gamma_e(&theta);
    let ge_ana = pair.x_model().tensors().gamma_e(&theta);
    let defect = (&ge_num - &ge_ana).max_abs();
    assert!(defect < 1e-4, "gamma_e defect {defect:.3e}");
}

#[test]
fn numeric_matches_analytic_at_random_points() {
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let ls = gaussian_pair();
    let po = builtin_poisson(PoissonPairSpec::new(vec![0.7]).unwrap()).unwrap();
    for _ in 0..50 {
        let theta_ls = [rng.random_range(-1.5..1.5), rng.random_range(0.4..2.5)];
        let g = fisher_metric_numeric(
            ls.x_model(),
            &theta_ls,
            &ExpectationScheme::RealLineQuadrature { tol: 1e-9 },
            ls.domain(),
        )
        .unwrap();
        let ga = ls.x_model().tensors().metric(&theta_ls);
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (g[(i, j)] - ga[(i, j)]).abs() <= 1e-4 * (1.0 + ga[(i, j)].abs()),
                    "location-scale metric mismatch at {theta_ls:?}"
                );
            }
        }

        let theta_po = [rng.random_range(0.4..4.0)];
        let g = fisher_metric_numeric(
            po.x_model(),
            &theta_po,
            &ExpectationScheme::CountLattice { mass_tol: 1e-12 },
            po.domain(),
        )
        .unwrap();
        let ga = po.x_model().tensors().metric(&theta_po);
        assert!((g[(0, 0)] - ga[(0, 0)]).abs() <= 1e-4 * ga[(0, 0)]);
    }
}

#[test]
fn samplers_produce_finite_log_density() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let pairs = [
        gaussian_pair(),
        mixed_pair(),
        builtin_poisson(PoissonPairSpec::new(vec![0.3, 2.0]).unwrap()).unwrap(),
    ];
    for pair in &pairs {
        let theta = match pair.family() {
            Family::LocationScale(_) => vec![0.5, 1.5],
            _ => vec![1.0, 2.0],
        };
        for model in [pair.x_model(), pair.y_model()] {
            for _ in 0..50 {
                let obs = model.sample(&theta, &mut rng);
                assert!(model.log_density(&obs, &theta).is_finite());
            }
        }
    }
}

#[test]
fn log_volume_element_of_poisson_pair() {
    // |g| |gt|^{-1/2} for the Poisson pair is prod (s_i lambda_i)^{-1/2}
    let pair = builtin_poisson(PoissonPairSpec::new(vec![0.5, 2.0]).unwrap()).unwrap();
    let p = pt(&[1.3, 0.8]);
    let v = pair.log_volume_element(&p).unwrap();
    let expected = -0.5 * ((0.5 * 1.3f64).ln() + (2.0 * 0.8f64).ln());
    assert_relative_eq!(v, expected, max_relative = 1e-12);
}

#[test]
fn information_gain_approaches_predictive_metric() {
    let g = nalgebra::DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.9]);
    let gt = nalgebra::DMatrix::from_row_slice(2, 2, &[0.7, -0.1, -0.1, 1.1]);
    let gring = predictive_metric_matrix(&g, &gt).unwrap();
    for n in [1e2, 1e3, 1e4] {
        let gain = information_gain(&g, &gt, n).unwrap();
        let residual = (&gain - &gring * (n * n)).norm() / n;
        // residual/n tends to |g| as n grows; twice that is a safe bound
        assert!(residual <= 2.0 * g.norm(), "residual {residual} at n={n}");
    }
}

#[test]
fn spec_validation_errors() {
    assert!(PoissonPairSpec::new(vec![1.0, -2.0]).is_err());
    assert!(PoissonPairSpec::new(vec![]).is_err());
    let bad = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(NormalPairSpec::new(bad.clone(), bad).is_err());
    // asymmetric base density rejected
    let skewed = SymmetricBase::new(
        "shifted-gaussian",
        |z: f64| -0.5 * (z - 0.5) * (z - 0.5) - 0.5 * (2.0 * std::f64::consts::PI).ln(),
        |rng: &mut dyn rand::RngCore| {
            let v: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            v + 0.5
        },
    );
    let res = builtin_location_scale(LocationScalePairSpec {
        phi: skewed,
        phi_tilde: SymmetricBase::standard_normal(),
    });
    assert!(matches!(res, Err(crate::error::Error::Spec(_))));
}

#[test]
fn gauss_hermite_expectation_normal_pair_2d() {
    let sigma = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
    let pair = builtin_normal(NormalPairSpec::new(sigma.clone(), sigma.clone()).unwrap()).unwrap();
    let chol = sigma.clone().cholesky().unwrap().l().clone_owned();
    let scheme = ExpectationScheme::GaussHermite { chol, nodes: 24 };
    let g = fisher_metric_numeric(pair.x_model(), &[0.2, -0.4], &scheme, pair.domain()).unwrap();
    let ga = sigma.try_inverse().unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert!(
                (g[(i, j)] - ga[(i, j)]).abs() <= 1e-4 * (1.0 + ga[(i, j)].abs()),
                "GH mismatch {} vs {}",
                g[(i, j)],
                ga[(i, j)]
            );
        }
    }
}

#[test]
fn mean_vector_recovered_by_sampling() {
    let pair = gaussian_pair();
    let mut rng = ChaCha12Rng::seed_from_u64(123);
    let n = 4000;
    let mut acc: DVector<f64> = DVector::zeros(1);
    for _ in 0..n {
        let obs = pair.x_model().sample(&[2.0, 0.5], &mut rng);
        acc[0] += obs[0];
    }
    assert!((acc[0] / n as f64 - 2.0).abs() < 0.05);
}
