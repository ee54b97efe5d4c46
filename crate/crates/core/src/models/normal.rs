//! Normal pairs: x ~ N_d(mu, Sigma), y ~ N_d(mu, Sigma_tilde) with the mean
//! vector as the shared unknown parameter and both covariances known.

use super::{Family, Model, ModelPair, ParamTransform, TensorMode, TensorProvider};
use crate::error::{Error, Result};
use crate::geometry::{Chart, Domain};
use crate::tensor::Tensor3;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug)]
pub struct NormalPairSpec {
    pub sigma: DMatrix<f64>,
    pub sigma_tilde: DMatrix<f64>,
}

impl NormalPairSpec {
    pub fn new(sigma: DMatrix<f64>, sigma_tilde: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() || sigma_tilde.nrows() != sigma_tilde.ncols() {
            return Err(Error::Spec("covariance matrices must be square".into()));
        }
        if sigma.nrows() != sigma_tilde.nrows() {
            return Err(Error::Spec(format!(
                "covariance dimensions differ: {} vs {}",
                sigma.nrows(),
                sigma_tilde.nrows()
            )));
        }
        spd_cholesky(&sigma, "sigma")?;
        spd_cholesky(&sigma_tilde, "sigma_tilde")?;
        Ok(NormalPairSpec { sigma, sigma_tilde })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }
}

fn spd_cholesky(m: &DMatrix<f64>, name: &str) -> Result<Cholesky<f64, Dyn>> {
    if (m - m.transpose()).norm() > 1e-12 * (1.0 + m.norm()) {
        return Err(Error::Spec(format!("{name} is not symmetric")));
    }
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::Spec(format!("{name} is not positive definite")))
}

struct GaussianDensity {
    chol: Cholesky<f64, Dyn>,
    log_norm: f64, // -(d/2) log(2 pi) - (1/2) log |Sigma|
}

impl GaussianDensity {
    fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let chol = spd_cholesky(cov, "covariance")?;
        let d = cov.nrows() as f64;
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        Ok(GaussianDensity {
            chol,
            log_norm: -0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det,
        })
    }

    fn log_density(&self, x: &[f64], mu: &[f64]) -> f64 {
        let diff = DVector::from_iterator(x.len(), x.iter().zip(mu.iter()).map(|(a, b)| a - b));
        let solved = self.chol.solve(&diff);
        self.log_norm - 0.5 * diff.dot(&solved)
    }

    fn sample(&self, mu: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let d = mu.len();
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        let x = self.chol.l() * z;
        mu.iter().zip(x.iter()).map(|(m, v)| m + v).collect()
    }
}

fn gaussian_model(label: &str, cov: &DMatrix<f64>) -> Result<Model> {
    let d = cov.nrows();
    let dens = std::sync::Arc::new(GaussianDensity::new(cov)?);
    let dens_sample = dens.clone();
    let info = cov
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Spec("covariance not invertible".into()))?;
    let tensors = TensorProvider::new(
        d,
        TensorMode::Analytic,
        move |_| info.clone(),
        move |_| Tensor3::zeros(d),
        move |_| Tensor3::zeros(d),
        move |_| Tensor3::zeros(d),
    );
    Ok(Model::new(
        label,
        d,
        move |obs: &[f64], theta: &[f64]| dens.log_density(obs, theta),
        move |theta: &[f64], rng: &mut dyn RngCore| dens_sample.sample(theta, rng),
        tensors,
    ))
}

/// Builds the normal pair; Fisher metrics are the inverse covariances and all
/// skewness and connection coefficients vanish.
pub fn builtin_normal(spec: NormalPairSpec) -> Result<ModelPair> {
    let d = spec.dim();
    let x_model = gaussian_model("normal-x", &spec.sigma)?;
    let y_model = gaussian_model("normal-y", &spec.sigma_tilde)?;
    let chart = Chart::identity(d, Domain::unconstrained(d), "mean");
    Ok(ModelPair::new(
        format!("normal(d={d})"),
        chart,
        x_model,
        y_model,
        Family::Normal(spec),
        ParamTransform::identity(),
    ))
}

/// The predictive metric as a matrix identity: `g gt^{-1} g`.
pub fn predictive_metric_matrix(g: &DMatrix<f64>, g_tilde: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let solved = g_tilde
        .clone()
        .lu()
        .solve(g)
        .ok_or_else(|| Error::NonSpd("g_tilde not invertible".into()))?;
    Ok(g * solved)
}

/// Inverse of the asymptotic-variance reduction from observing the target in
/// addition to n data draws: `((n g)^{-1} - (n g + gt)^{-1})^{-1}`.
///
/// Grows like `n^2 g gt^{-1} g + O(n)`.
pub fn information_gain(g: &DMatrix<f64>, g_tilde: &DMatrix<f64>, n: f64) -> Result<DMatrix<f64>> {
    let ng = g * n;
    let ng_inv = ng
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NonSpd("n g not invertible".into()))?;
    let total_inv = (&ng + g_tilde)
        .try_inverse()
        .ok_or_else(|| Error::NonSpd("n g + gt not invertible".into()))?;
    (ng_inv - total_inv)
        .try_inverse()
        .ok_or_else(|| Error::NonSpd("variance reduction not invertible".into()))
}
