//! Poisson pairs: x_i ~ Po(lambda_i) independently, y_i ~ Po(s_i lambda_i)
//! with known exposure constants s_i > 0.
//!
//! Both models are mixture-flat in the rate coordinates, so the m-connection
//! coefficients vanish identically; the e-connection and skewness tensors are
//! diagonal with entries -c_i/lambda_i^2 and c_i/lambda_i^2 (c_i = 1 for the
//! data model, s_i for the target model).

use super::{Family, Model, ModelPair, ParamTransform, TensorMode, TensorProvider};
use crate::error::{Error, Result};
use crate::geometry::{Chart, Domain};
use crate::tensor::Tensor3;
use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Poisson};
use statrs::function::gamma::ln_gamma;

#[derive(Clone, Debug)]
pub struct PoissonPairSpec {
    pub s: Vec<f64>,
}

impl PoissonPairSpec {
    pub fn new(s: Vec<f64>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::Spec("empty exposure vector".into()));
        }
        if let Some(bad) = s.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Spec(format!("exposure constants must be positive, got {bad}")));
        }
        Ok(PoissonPairSpec { s })
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }
}

pub(crate) fn log_poisson_pmf(count: f64, mean: f64) -> f64 {
    count * mean.ln() - mean - ln_gamma(count + 1.0)
}

/// Poisson model with rates `c_i * lambda_i`.
fn poisson_model(label: &str, c: Vec<f64>) -> Model {
    let d = c.len();
    let c_dens = c.clone();
    let c_samp = c.clone();
    let c_metric = c.clone();
    let c_skew = c.clone();
    let c_ge = c;
    let tensors = TensorProvider::new(
        d,
        TensorMode::Analytic,
        move |lam: &[f64]| {
            DMatrix::from_diagonal(&DVector::from_iterator(
                d,
                lam.iter().zip(c_metric.iter()).map(|(&l, &ci)| ci / l),
            ))
        },
        move |lam: &[f64]| {
            let mut t = Tensor3::zeros(d);
            for i in 0..d {
                t.set(i, i, i, c_skew[i] / (lam[i] * lam[i]));
            }
            t
        },
        move |lam: &[f64]| {
            let mut g = Tensor3::zeros(d);
            for i in 0..d {
                g.set(i, i, i, -c_ge[i] / (lam[i] * lam[i]));
            }
            g
        },
        move |_: &[f64]| Tensor3::zeros(d),
    );
    Model::new(
        label,
        d,
        move |obs: &[f64], lam: &[f64]| {
            obs.iter()
                .zip(lam.iter())
                .zip(c_dens.iter())
                .map(|((&x, &l), &ci)| log_poisson_pmf(x, ci * l))
                .sum()
        },
        move |lam: &[f64], rng: &mut dyn RngCore| {
            lam.iter()
                .zip(c_samp.iter())
                .map(|(&l, &ci)| {
                    Poisson::new(ci * l)
                        .expect("positive Poisson mean")
                        .sample(rng)
                })
                .collect()
        },
        tensors,
    )
}

pub fn builtin_poisson(spec: PoissonPairSpec) -> Result<ModelPair> {
    let d = spec.dim();
    let all: Vec<usize> = (0..d).collect();
    let x_model = poisson_model("poisson-x", vec![1.0; d]);
    let y_model = poisson_model("poisson-y", spec.s.clone());
    let chart = Chart::identity(d, Domain::positive(d, &all), "rates");
    Ok(ModelPair::new(
        format!("poisson(d={d})"),
        chart,
        x_model,
        y_model,
        Family::Poisson(spec),
        ParamTransform::log_coords(vec![true; d]),
    ))
}
