//! Asymptotic Kullback–Leibler risk differences between Bayesian predictive
//! densities, computed by two independent routes.
//!
//! The expansion route assembles the covariant risk expansion from the
//! u-vector of a prior (score of the log prior against the e-connection
//! trace, plus the m-connection gap between the two models). The Laplacian
//! route evaluates `2 Delta sqrt(f) / sqrt(f)` for the ratio f of the prior
//! to the volume-element prior, with the Laplacian taken in the predictive
//! metric. Both return the squared-sample-size-scaled limit; finite-sample
//! residuals belong to the simulation module.
//!
//! All connection coefficients with a raised index are raised with their own
//! model's inverse metric.

use crate::error::{Error, Result};
use crate::fd;
use crate::geometry::{laplace_beltrami, Point};
use crate::models::{ModelPair, TensorMode};
use crate::par;
use crate::priors::PriorSpec;
use nalgebra::DMatrix;

/// Smallest Monte Carlo tensor sample count the risk formulas accept.
pub const MC_TENSOR_SAMPLE_FLOOR: usize = 10_000;

/// The vector field driving the risk expansion, with its decomposition into
/// the prior-ratio gradient part, the volume-element/connection trace part
/// and the m-connection gap part.
#[derive(Clone, Debug)]
pub struct UVector {
    pub components: Vec<f64>,
    pub gradient_part: Vec<f64>,
    pub trace_part: Vec<f64>,
    pub gap_part: Vec<f64>,
}

fn ensure_tensor_quality(pair: &ModelPair) -> Result<()> {
    for model in [pair.x_model(), pair.y_model()] {
        if let TensorMode::MonteCarlo { samples } = model.tensors().mode() {
            if samples < MC_TENSOR_SAMPLE_FLOOR {
                return Err(Error::Spec(format!(
                    "tensor provider of {} uses {samples} Monte Carlo samples, below the floor {MC_TENSOR_SAMPLE_FLOOR}",
                    model.label()
                )));
            }
        }
    }
    Ok(())
}

struct UParts {
    grad: Vec<f64>,
    trace: Vec<f64>,
    gap: Vec<f64>,
}

fn u_parts(pair: &ModelPair, prior: &PriorSpec, p: &Point) -> Result<UParts> {
    let d = pair.dim();
    let x = p.coords();
    let (_, ginv, _) = pair.metric_x().inverse_and_det(p)?;
    let (_, gtinv, _) = pair.metric_y().inverse_and_det(p)?;
    let tx = pair.x_model().tensors();
    let ty = pair.y_model().tensors();

    // e-connection trace of the data model, all indices its own metric
    let trace_e = tx.gamma_e(x).raise_last(&ginv).trace_mixed();

    // m-connection gap r^i = g^{kl} (Gt^m_{kl}{}^i - G^m_{kl}{}^i)
    let gm_x = tx.gamma_m(x).raise_last(&ginv);
    let gm_y = ty.gamma_m(x).raise_last(&gtinv);
    let mut gap = vec![0.0; d];
    for i in 0..d {
        let mut acc = 0.0;
        for k in 0..d {
            for l in 0..d {
                acc += ginv[(k, l)] * (gm_y.get(k, l, i) - gm_x.get(k, l, i));
            }
        }
        gap[i] = acc;
    }

    // gradient of the log volume element, d_k (log|g| - (1/2) log|gt|)
    let txc = tx.clone();
    let tyc = ty.clone();
    let log_volume = move |y: &[f64]| {
        txc.metric(y).determinant().ln() - 0.5 * tyc.metric(y).determinant().ln()
    };
    let grad_log_pi_p = fd::gradient(&log_volume, x, pair.fd_scales(), pair.domain())?;

    let grad_log_f = prior.ratio().log_gradient(p)?;

    let raise = |v: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|i| (0..d).map(|k| ginv[(i, k)] * v[k]).sum())
            .collect()
    };
    let grad = raise(&grad_log_f);
    let trace: Vec<f64> = raise(
        &(0..d)
            .map(|k| grad_log_pi_p[k] - trace_e[k])
            .collect::<Vec<f64>>(),
    );
    Ok(UParts { grad, trace, gap })
}

fn assemble(parts: UParts, gap_coeff: f64) -> Result<UVector> {
    let d = parts.grad.len();
    let components: Vec<f64> = (0..d)
        .map(|i| parts.grad[i] + parts.trace[i] + gap_coeff * parts.gap[i])
        .collect();
    if components.iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal(format!(
            "non-finite u-vector components {components:?}"
        )));
    }
    Ok(UVector {
        components,
        gradient_part: parts.grad,
        trace_part: parts.trace,
        gap_part: parts.gap,
    })
}

/// The u-vector of a prior at a point:
/// `u^i = g^{ik} (d_k log pi - sum_j Ge_{kj}{}^j) + g^{kl}(Gt^m_{kl}{}^i - G^m_{kl}{}^i)`.
pub fn u_vector(pair: &ModelPair, prior: &PriorSpec, p: &Point) -> Result<UVector> {
    ensure_tensor_quality(pair)?;
    assemble(u_parts(pair, prior, p)?, 1.0)
}

/// The Bayes-estimator shift vector: identical to [`u_vector`] except the
/// m-connection gap enters with coefficient 1/2, so `u = w + r/2`.
pub fn w_vector(pair: &ModelPair, prior: &PriorSpec, p: &Point) -> Result<UVector> {
    ensure_tensor_quality(pair)?;
    assemble(u_parts(pair, prior, p)?, 0.5)
}

/// The risk functional whose difference between two priors is the asymptotic
/// risk difference: `(1/2) gt_ij u^i u^j + gt_ij g^{jk} (d_k u^i + Gte_{kl}{}^i u^l)`.
fn risk_functional(pair: &ModelPair, prior: &PriorSpec, p: &Point) -> Result<f64> {
    let d = pair.dim();
    let x = p.coords();
    let u = u_vector(pair, prior, p)?;
    let (gt, gtinv, _) = pair.metric_y().inverse_and_det(p)?;
    let (_, ginv, _) = pair.metric_x().inverse_and_det(p)?;

    // d_k u^i by finite differences on the u-vector map
    let pair_c = pair.clone();
    let prior_c = prior.clone();
    let u_map = move |y: &[f64]| -> Vec<f64> {
        Point::from_slice(y)
            .and_then(|q| u_vector(&pair_c, &prior_c, &q))
            .map(|u| u.components)
            .unwrap_or_else(|_| vec![f64::NAN; d])
    };
    let du = fd::jacobian(&u_map, x, pair.fd_scales(), pair.domain())?;
    if du.iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal(
            "finite differences of the u-vector hit an evaluation failure".into(),
        ));
    }

    let ge_y = pair.y_model().tensors().gamma_e(x).raise_last(&gtinv);

    let mut quad_term = 0.0;
    for i in 0..d {
        for j in 0..d {
            quad_term += gt[(i, j)] * u.components[i] * u.components[j];
        }
    }

    let m = &gt * &ginv; // M_{ik} = gt_ij g^{jk}
    let mut deriv_term = 0.0;
    for i in 0..d {
        for k in 0..d {
            let mut cov = du[(i, k)];
            for l in 0..d {
                cov += ge_y.get(k, l, i) * u.components[l];
            }
            deriv_term += m[(i, k)] * cov;
        }
    }
    Ok(0.5 * quad_term + deriv_term)
}

/// Asymptotic risk difference between priors by the covariant expansion route.
pub fn risk_diff_expansion(
    pair: &ModelPair,
    prior: &PriorSpec,
    baseline: &PriorSpec,
    p: &Point,
) -> Result<f64> {
    Ok(risk_functional(pair, prior, p)? - risk_functional(pair, baseline, p)?)
}

/// Asymptotic risk difference against the volume-element prior by the
/// Laplacian route: `2 Dring sqrt(f) / sqrt(f)` for f the prior ratio.
///
/// The algebraically equivalent form `Dring f / f - (1/2) gring^{ij} d_i f
/// d_j f / f^2` is evaluated alongside; disagreement flags an internal error.
pub fn risk_diff_laplacian(pair: &ModelPair, prior: &PriorSpec, p: &Point) -> Result<f64> {
    ensure_tensor_quality(pair)?;
    let f = prior.ratio();
    let v = prior.ratio_at(p)?;
    let mring = pair.predictive_metric();

    let sqrt_form = 2.0 * laplace_beltrami(&mring, &f.powf(0.5), p)? / v.sqrt();

    let lap_f = laplace_beltrami(&mring, f, p)?;
    let grad = f.gradient(p)?;
    let (_, ring_inv, _) = mring.inverse_and_det(p)?;
    let mut quad = 0.0;
    for i in 0..pair.dim() {
        for j in 0..pair.dim() {
            quad += ring_inv[(i, j)] * grad[i] * grad[j];
        }
    }
    let direct_form = lap_f / v - 0.5 * quad / (v * v);

    if (sqrt_form - direct_form).abs() > 1e-6 * (1.0 + sqrt_form.abs()) {
        return Err(Error::Internal(format!(
            "Laplacian risk forms disagree at {:?}: {sqrt_form} vs {direct_form}",
            p.coords()
        )));
    }
    Ok(sqrt_form)
}

/// Largest relative deviation between the two models' tensors at a point;
/// used to decide whether a pair is in the conventional setting.
fn model_mismatch(pair: &ModelPair, p: &Point) -> f64 {
    let x = p.coords();
    let tx = pair.x_model().tensors();
    let ty = pair.y_model().tensors();
    let g = tx.metric(x);
    let gt = ty.metric(x);
    let scale = g.norm().max(gt.norm()).max(1e-300);
    let mut worst = (g - gt).norm() / scale;
    let te = (&tx.gamma_e(x) - &ty.gamma_e(x)).max_abs();
    let tm = (&tx.gamma_m(x) - &ty.gamma_m(x)).max_abs();
    let tscale = 1.0 + tx.gamma_e(x).max_abs().max(tx.gamma_m(x).max_abs());
    worst = worst.max(te / tscale).max(tm / tscale);
    worst
}

/// Risk difference against the Jeffreys prior in the conventional setting
/// where the data and target models coincide. Asserts agreement with the
/// predictive-metric route, to which it reduces.
pub fn conventional_risk_diff(pair: &ModelPair, prior: &PriorSpec, p: &Point) -> Result<f64> {
    if model_mismatch(pair, p) > 1e-10 {
        return Err(Error::Spec(format!(
            "conventional risk difference requires identical data and target models; {} differs at {:?}",
            pair.label(),
            p.coords()
        )));
    }
    let f = prior.ratio();
    let v = prior.ratio_at(p)?;
    let g = pair.metric_x();
    let value = 2.0 * laplace_beltrami(&g, &f.powf(0.5), p)? / v.sqrt();
    let ring = risk_diff_laplacian(pair, prior, p)?;
    if (value - ring).abs() > 1e-8 * (1.0 + value.abs()) {
        return Err(Error::Internal(format!(
            "conventional reduction failed at {:?}: {value} vs {ring}",
            p.coords()
        )));
    }
    Ok(value)
}

/// The prior-independent leading risk term `(1/(2n)) sum_ij gt_ij g^{ij}`.
pub fn leading_risk_term(pair: &ModelPair, p: &Point, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Range("sample size must be positive".into()));
    }
    let (_, ginv, _) = pair.metric_x().inverse_and_det(p)?;
    let gt = pair.metric_y().eval(p)?;
    Ok((gt * ginv).trace() / (2.0 * n as f64))
}

/// Closed-form asymptotic risk difference of the right invariant prior for
/// location-scale pairs, as a function of b_tilde/b^2.
pub fn ls_risk_right_invariant(b_ratio: f64) -> f64 {
    -b_ratio / 2.0
}

/// Closed-form asymptotic risk difference of the shrinkage family at
/// unit-curvature distance rho from the shrinkage center.
pub fn ls_risk_shrinkage(b_ratio: f64, c: f64, rho: f64) -> f64 {
    let b = rho.cosh() + c;
    -b_ratio * (0.5 + c / b + 1.5 * (1.0 - c * c) / (b * b))
}

/// Closed-form asymptotic risk difference of the Poisson Stein-type prior:
/// `-(1/2) (d/2 - 1)^2 / sum_i lambda_i/s_i`.
pub fn poisson_risk_stein(dim: usize, sum_lambda_over_s: f64) -> f64 {
    let nu = dim as f64 / 2.0 - 1.0;
    -0.5 * nu * nu / sum_lambda_over_s
}

/// Both risk routes for a set of priors over a probe grid, parallel over
/// probes. Entry `[point][prior]`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct RiskSample {
    pub laplacian_route: f64,
    pub expansion_route: f64,
    pub gap: f64,
}

pub fn risk_sweep(
    pair: &ModelPair,
    priors: &[PriorSpec],
    baseline: &PriorSpec,
    points: &[Point],
) -> Result<Vec<Vec<RiskSample>>> {
    let rows = par::map_collect(points.len(), |i| -> Result<Vec<RiskSample>> {
        let p = &points[i];
        priors
            .iter()
            .map(|prior| {
                let lap = risk_diff_laplacian(pair, prior, p)?
                    - risk_diff_laplacian(pair, baseline, p)?;
                let exp = risk_diff_expansion(pair, prior, baseline, p)?;
                Ok(RiskSample {
                    laplacian_route: lap,
                    expansion_route: exp,
                    gap: (lap - exp).abs(),
                })
            })
            .collect()
    });
    rows.into_iter().collect()
}

/// Column-materialized view of a matrix for callers that need plain data.
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
