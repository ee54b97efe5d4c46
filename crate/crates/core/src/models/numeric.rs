//! Numeric tensor estimation for user-supplied log-densities.
//!
//! Expectations over the observation space are taken by adaptive quadrature
//! (continuous scalar observations), windowed Gauss–Hermite tensor grids
//! (continuous vector observations with a roughly Gaussian spread), exact
//! truncated lattice sums (count observations) or plain Monte Carlo.

use super::{Model, TensorMode, TensorProvider};
use crate::error::{Error, Result};
use crate::fd::{self, FdScales};
use crate::geometry::Domain;
use crate::quad;
use crate::tensor::Tensor3;
use nalgebra::DMatrix;
use rand::SeedableRng;
use std::sync::Arc;

/// How to take expectations over the observation space of a model.
#[derive(Clone, Debug)]
pub enum ExpectationScheme {
    /// Adaptive quadrature over a scalar observation on the real line.
    RealLineQuadrature { tol: f64 },
    /// Tensor-product Gauss–Hermite nodes at `theta + sqrt(2) L u`; suits
    /// models whose observation is approximately N(theta, L L^T).
    GaussHermite { chol: DMatrix<f64>, nodes: usize },
    /// Exact truncated sum over a nonnegative-integer lattice; the box grows
    /// until the outermost layers carry less than `mass_tol` of the mass.
    CountLattice { mass_tol: f64 },
    /// Sample average over `samples` draws from the model sampler.
    MonteCarlo { samples: usize, seed: u64 },
}

impl ExpectationScheme {
    fn mode(&self) -> TensorMode {
        match self {
            ExpectationScheme::MonteCarlo { samples, .. } => {
                TensorMode::MonteCarlo { samples: *samples }
            }
            _ => TensorMode::Quadrature,
        }
    }
}

/// Expectation of a vector-valued statistic of the observation under
/// p(.|theta). All components are integrated on a shared grid.
fn expect_vec(
    model: &Model,
    theta: &[f64],
    scheme: &ExpectationScheme,
    n_out: usize,
    stat: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
) -> Result<Vec<f64>> {
    match scheme {
        ExpectationScheme::RealLineQuadrature { tol } => {
            if model.obs_dim() != 1 {
                return Err(Error::Integration(format!(
                    "real-line quadrature needs scalar observations, model has dim {}",
                    model.obs_dim()
                )));
            }
            let mut out = vec![0.0; n_out];
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = quad::real_line(
                    &|x: f64| {
                        let obs = [x];
                        let w = model.log_density(&obs, theta).exp();
                        if w == 0.0 {
                            0.0
                        } else {
                            stat(&obs)[k] * w
                        }
                    },
                    *tol,
                    *tol,
                )?;
            }
            Ok(out)
        }
        ExpectationScheme::GaussHermite { chol, nodes } => {
            let d = model.obs_dim();
            if chol.nrows() != d {
                return Err(Error::Integration(format!(
                    "Gauss–Hermite window dimension {} does not match observation dimension {d}",
                    chol.nrows()
                )));
            }
            let rule = quad::gauss_hermite(*nodes);
            let mut out = vec![0.0; n_out];
            let mut norm = 0.0;
            let mut idx = vec![0usize; d];
            let sqrt2 = std::f64::consts::SQRT_2;
            loop {
                let mut w = 1.0;
                let mut u = vec![0.0; d];
                for (axis, &i) in idx.iter().enumerate() {
                    w *= rule.1[i];
                    u[axis] = rule.0[i];
                }
                let mut obs = theta.to_vec();
                for r in 0..d {
                    let mut acc = 0.0;
                    for c in 0..=r {
                        acc += chol[(r, c)] * u[c];
                    }
                    obs[r] += sqrt2 * acc;
                }
                // weight ratio: true density over the Hermite weight
                let gauss_w = (-u.iter().map(|v| v * v).sum::<f64>()).exp();
                let ratio = model.log_density(&obs, theta).exp() / gauss_w.max(f64::MIN_POSITIVE);
                let total = w * ratio;
                norm += total;
                let s = stat(&obs);
                for k in 0..n_out {
                    out[k] += total * s[k];
                }
                // advance the tensor-product index
                let mut axis = 0;
                loop {
                    if axis == d {
                        let inv = 1.0 / norm;
                        return Ok(out.into_iter().map(|v| v * inv).collect());
                    }
                    idx[axis] += 1;
                    if idx[axis] < rule.0.len() {
                        break;
                    }
                    idx[axis] = 0;
                    axis += 1;
                }
            }
        }
        ExpectationScheme::CountLattice { mass_tol } => {
            expect_lattice(model, theta, *mass_tol, n_out, stat)
        }
        ExpectationScheme::MonteCarlo { samples, seed } => {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(*seed);
            let mut out = vec![0.0; n_out];
            for _ in 0..*samples {
                let obs = model.sample(theta, &mut rng);
                let s = stat(&obs);
                for k in 0..n_out {
                    out[k] += s[k];
                }
            }
            let inv = 1.0 / *samples as f64;
            Ok(out.into_iter().map(|v| v * inv).collect())
        }
    }
}

fn expect_lattice(
    model: &Model,
    theta: &[f64],
    mass_tol: f64,
    n_out: usize,
    stat: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
) -> Result<Vec<f64>> {
    let d = model.obs_dim();
    let mut hi = vec![16usize; d];
    const MAX_POINTS: usize = 10_000_000;
    loop {
        if hi.iter().map(|&h| h + 1).product::<usize>() > MAX_POINTS {
            return Err(Error::Truncation(format!(
                "count lattice exceeded {MAX_POINTS} points at cutoffs {hi:?}"
            )));
        }
        let mut mass = 0.0;
        let mut out = vec![0.0; n_out];
        let mut boundary = vec![0.0; d];
        let mut idx = vec![0usize; d];
        'sweep: loop {
            let obs: Vec<f64> = idx.iter().map(|&i| i as f64).collect();
            let w = model.log_density(&obs, theta).exp();
            mass += w;
            let s = stat(&obs);
            for k in 0..n_out {
                out[k] += w * s[k];
            }
            for axis in 0..d {
                if idx[axis] == hi[axis] {
                    boundary[axis] += w;
                }
            }
            let mut axis = 0;
            loop {
                if axis == d {
                    break 'sweep;
                }
                idx[axis] += 1;
                if idx[axis] <= hi[axis] {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
        let mut grew = false;
        for axis in 0..d {
            if boundary[axis] > mass_tol * mass.max(f64::MIN_POSITIVE) {
                hi[axis] = hi[axis] + hi[axis] / 2 + 1;
                grew = true;
            }
        }
        if !grew {
            if (1.0 - mass).abs() > 1e-6 {
                return Err(Error::Truncation(format!(
                    "lattice mass {mass} far from 1 at cutoffs {hi:?}"
                )));
            }
            return Ok(out.into_iter().map(|v| v / mass).collect());
        }
    }
}

/// Score and second-derivative statistics of the log-density at fixed
/// observation, by finite differences in theta.
fn score_stats(model: &Model, theta: &[f64], obs: &[f64], domain: &Domain) -> (Vec<f64>, DMatrix<f64>) {
    let f = |th: &[f64]| model.log_density(obs, th);
    let scales = FdScales::unit(theta.len());
    let grad = fd::gradient(&f, theta, &scales, domain).unwrap_or_else(|_| vec![f64::NAN; theta.len()]);
    let hess = fd::hessian(&f, theta, &scales, domain)
        .unwrap_or_else(|_| DMatrix::from_element(theta.len(), theta.len(), f64::NAN));
    (grad, hess)
}

/// Numeric Fisher metric `E[d_i l d_j l]` of one model at a point.
pub fn fisher_metric_numeric(
    model: &Model,
    theta: &[f64],
    scheme: &ExpectationScheme,
    domain: &Domain,
) -> Result<DMatrix<f64>> {
    domain.require(theta)?;
    let d = theta.len();
    let vals = expect_vec(model, theta, scheme, d * d, &|obs: &[f64]| {
        let (grad, _) = score_stats(model, theta, obs, domain);
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = grad[i] * grad[j];
            }
        }
        out
    })?;
    let g = DMatrix::from_fn(d, d, |i, j| vals[i * d + j]);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration("non-finite Fisher metric estimate".into()));
    }
    Ok(g)
}

/// Monte Carlo Fisher metric together with elementwise standard errors.
pub fn fisher_metric_mc_with_se(
    model: &Model,
    theta: &[f64],
    samples: usize,
    seed: u64,
    domain: &Domain,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    domain.require(theta)?;
    let d = theta.len();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut sum: DMatrix<f64> = DMatrix::zeros(d, d);
    let mut sum_sq: DMatrix<f64> = DMatrix::zeros(d, d);
    for _ in 0..samples {
        let obs = model.sample(theta, &mut rng);
        let (grad, _) = score_stats(model, theta, &obs, domain);
        for i in 0..d {
            for j in 0..d {
                let v = grad[i] * grad[j];
                sum[(i, j)] += v;
                sum_sq[(i, j)] += v * v;
            }
        }
    }
    let n = samples as f64;
    let mean = sum / n;
    let se = DMatrix::from_fn(d, d, |i: usize, j: usize| {
        let var: f64 = (sum_sq[(i, j)] / n - mean[(i, j)] * mean[(i, j)]).max(0.0);
        (var / n).sqrt()
    });
    Ok((mean, se))
}

/// Builds a tensor provider for a user-supplied model by taking every
/// expectation numerically. Evaluation failures surface as NaN entries, which
/// downstream positive-definiteness checks reject.
pub fn numeric_provider(
    model: &Model,
    scheme: ExpectationScheme,
    param_dim: usize,
    domain: Domain,
) -> TensorProvider {
    let mode = scheme.mode();
    let model = Arc::new(model.clone());
    let scheme = Arc::new(scheme);

    // E[ d_i l d_j l ], E[ d_i d_j l d_k l ] and E[ d_i l d_j l d_k l ]
    // in one pass per point.
    let moments = {
        let model = model.clone();
        let scheme = scheme.clone();
        let domain = domain.clone();
        Arc::new(move |theta: &[f64]| -> Result<(DMatrix<f64>, Tensor3, Tensor3)> {
            let d = param_dim;
            let n_pair = d * d;
            let n_trip = d * d * d;
            let vals = expect_vec(&model, theta, &scheme, n_pair + 2 * n_trip, &|obs: &[f64]| {
                let (grad, hess) = score_stats(&model, theta, obs, &domain);
                let mut out = vec![0.0; n_pair + 2 * n_trip];
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = grad[i] * grad[j];
                        for k in 0..d {
                            out[n_pair + (i * d + j) * d + k] = hess[(i, j)] * grad[k];
                            out[n_pair + n_trip + (i * d + j) * d + k] =
                                grad[i] * grad[j] * grad[k];
                        }
                    }
                }
                out
            })?;
            let metric = DMatrix::from_fn(d, d, |i, j| vals[i * d + j]);
            let gamma_e = Tensor3::from_fn(d, |i, j, k| vals[n_pair + (i * d + j) * d + k]);
            let skew = Tensor3::from_fn(d, |i, j, k| vals[n_pair + n_trip + (i * d + j) * d + k]);
            Ok((metric, gamma_e, skew))
        })
    };

    let nan_matrix = move |d: usize| DMatrix::from_element(d, d, f64::NAN);
    let nan_tensor = move |d: usize| Tensor3::from_fn(d, |_, _, _| f64::NAN);

    let m1 = moments.clone();
    let m2 = moments.clone();
    let m3 = moments.clone();
    let m4 = moments;
    TensorProvider::new(
        param_dim,
        mode,
        move |th| m1(th).map(|(g, _, _)| g).unwrap_or_else(|_| nan_matrix(param_dim)),
        move |th| m2(th).map(|(_, _, t)| t).unwrap_or_else(|_| nan_tensor(param_dim)),
        move |th| m3(th).map(|(_, ge, _)| ge).unwrap_or_else(|_| nan_tensor(param_dim)),
        move |th| {
            m4(th)
                .map(|(_, ge, t)| &ge + &t)
                .unwrap_or_else(|_| nan_tensor(param_dim))
        },
    )
}
