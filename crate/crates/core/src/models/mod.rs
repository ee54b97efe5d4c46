//! Paired parametric families over a shared parameter space.
//!
//! A [`ModelPair`] bundles the data model p(x|theta) and the target model
//! p~(y|theta) together with the reference chart of the parameter space and
//! per-model tensor providers (Fisher metric, skewness tensor, exponential
//! and mixture connection coefficients).

mod location_scale;
mod normal;
mod numeric;
pub(crate) mod poisson;

pub use location_scale::{builtin_location_scale, LocationScalePairSpec, LsConstants, SymmetricBase};
pub use normal::{builtin_normal, information_gain, predictive_metric_matrix, NormalPairSpec};
pub use numeric::{fisher_metric_mc_with_se, fisher_metric_numeric, numeric_provider, ExpectationScheme};
pub use poisson::{builtin_poisson, PoissonPairSpec};

use crate::error::{Error, Result};
use crate::fd::FdScales;
use crate::geometry::{Chart, Domain, MetricField, Point, Provenance};
use crate::tensor::Tensor3;
use nalgebra::DMatrix;
use rand::RngCore;
use std::sync::Arc;

/// How a provider computes its tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorMode {
    Analytic,
    Quadrature,
    MonteCarlo { samples: usize },
}

type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type Tensor3Fn = Arc<dyn Fn(&[f64]) -> Tensor3 + Send + Sync>;

/// Fisher metric, skewness tensor and dual connection coefficients of one
/// model at a point. All rank-3 arrays carry lower indices (i, j, k).
#[derive(Clone)]
pub struct TensorProvider {
    dim: usize,
    mode: TensorMode,
    metric: MatrixFn,
    skewness: Tensor3Fn,
    gamma_e: Tensor3Fn,
    gamma_m: Tensor3Fn,
}

impl TensorProvider {
    pub fn new(
        dim: usize,
        mode: TensorMode,
        metric: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        skewness: impl Fn(&[f64]) -> Tensor3 + Send + Sync + 'static,
        gamma_e: impl Fn(&[f64]) -> Tensor3 + Send + Sync + 'static,
        gamma_m: impl Fn(&[f64]) -> Tensor3 + Send + Sync + 'static,
    ) -> Self {
        TensorProvider {
            dim,
            mode,
            metric: Arc::new(metric),
            skewness: Arc::new(skewness),
            gamma_e: Arc::new(gamma_e),
            gamma_m: Arc::new(gamma_m),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> TensorMode {
        self.mode
    }

    pub fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        (self.metric)(x)
    }

    pub fn skewness(&self, x: &[f64]) -> Tensor3 {
        (self.skewness)(x)
    }

    pub fn gamma_e(&self, x: &[f64]) -> Tensor3 {
        (self.gamma_e)(x)
    }

    pub fn gamma_m(&self, x: &[f64]) -> Tensor3 {
        (self.gamma_m)(x)
    }
}

/// Skewness tensor and both connection coefficient arrays at a point, with
/// the defining relation `gamma_m = gamma_e + T` validated.
pub fn t_tensor_and_connections(
    provider: &TensorProvider,
    p: &Point,
) -> Result<(Tensor3, Tensor3, Tensor3)> {
    let x = p.coords();
    let t = provider.skewness(x);
    let ge = provider.gamma_e(x);
    let gm = provider.gamma_m(x);
    let scale = 1.0 + t.max_abs().max(gm.max_abs());
    if t.asymmetry() > 1e-8 * scale {
        return Err(Error::Internal(format!(
            "skewness tensor not symmetric at {x:?} (defect {:.3e})",
            t.asymmetry()
        )));
    }
    let defect = (&(&ge + &t) - &gm).max_abs();
    if defect > 1e-8 * scale {
        return Err(Error::Internal(format!(
            "gamma_m != gamma_e + T at {x:?} (defect {defect:.3e})"
        )));
    }
    Ok((t, ge, gm))
}

type LogDensityFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type SamplerFn = Arc<dyn Fn(&[f64], &mut dyn RngCore) -> Vec<f64> + Send + Sync>;

/// One parametric family: log-density, sampler and tensor provider.
#[derive(Clone)]
pub struct Model {
    label: String,
    obs_dim: usize,
    log_density: LogDensityFn,
    sampler: SamplerFn,
    tensors: TensorProvider,
}

impl Model {
    pub fn new(
        label: impl Into<String>,
        obs_dim: usize,
        log_density: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        sampler: impl Fn(&[f64], &mut dyn RngCore) -> Vec<f64> + Send + Sync + 'static,
        tensors: TensorProvider,
    ) -> Self {
        Model {
            label: label.into(),
            obs_dim,
            log_density: Arc::new(log_density),
            sampler: Arc::new(sampler),
            tensors,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn log_density(&self, obs: &[f64], theta: &[f64]) -> f64 {
        (self.log_density)(obs, theta)
    }

    pub fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        (self.sampler)(theta, rng)
    }

    pub fn tensors(&self) -> &TensorProvider {
        &self.tensors
    }
}

/// Map between the constrained parameter space and an unconstrained copy,
/// used to run posterior quadrature in coordinates without boundaries.
#[derive(Clone)]
pub struct ParamTransform {
    to_u: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    from_u: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    log_jac: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl ParamTransform {
    pub fn identity() -> Self {
        ParamTransform {
            to_u: Arc::new(|x: &[f64]| x.to_vec()),
            from_u: Arc::new(|u: &[f64]| u.to_vec()),
            log_jac: Arc::new(|_| 0.0),
        }
    }

    /// log-transform the coordinates where `log_mask` is true.
    pub fn log_coords(log_mask: Vec<bool>) -> Self {
        let m_to = log_mask.clone();
        let m_from = log_mask.clone();
        let m_jac = log_mask;
        ParamTransform {
            to_u: Arc::new(move |x: &[f64]| {
                x.iter()
                    .zip(m_to.iter())
                    .map(|(&v, &log)| if log { v.ln() } else { v })
                    .collect()
            }),
            from_u: Arc::new(move |u: &[f64]| {
                u.iter()
                    .zip(m_from.iter())
                    .map(|(&v, &log)| if log { v.exp() } else { v })
                    .collect()
            }),
            // |d theta / d u| = prod exp(u_i) over log coordinates
            log_jac: Arc::new(move |u: &[f64]| {
                u.iter()
                    .zip(m_jac.iter())
                    .filter(|(_, &log)| log)
                    .map(|(&v, _)| v)
                    .sum()
            }),
        }
    }

    pub fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        (self.to_u)(theta)
    }

    pub fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        (self.from_u)(u)
    }

    pub fn log_jacobian(&self, u: &[f64]) -> f64 {
        (self.log_jac)(u)
    }
}

/// Which builtin family a pair belongs to, carrying the family constants the
/// prior and predictive modules need.
#[derive(Clone, Debug)]
pub enum Family {
    Normal(NormalPairSpec),
    LocationScale(LsConstants),
    Poisson(PoissonPairSpec),
    Custom(String),
}

/// Two parametric families sharing one parameter space.
#[derive(Clone)]
pub struct ModelPair {
    label: String,
    dim: usize,
    chart: Chart,
    x_model: Model,
    y_model: Model,
    family: Family,
    transform: ParamTransform,
    fd_scales: FdScales,
}

impl ModelPair {
    pub fn new(
        label: impl Into<String>,
        chart: Chart,
        x_model: Model,
        y_model: Model,
        family: Family,
        transform: ParamTransform,
    ) -> Self {
        let dim = chart.dim();
        ModelPair {
            label: label.into(),
            dim,
            chart,
            x_model,
            y_model,
            family,
            transform,
            fd_scales: FdScales::unit(dim),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn domain(&self) -> &Domain {
        self.chart.domain()
    }

    pub fn x_model(&self) -> &Model {
        &self.x_model
    }

    pub fn y_model(&self) -> &Model {
        &self.y_model
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn transform(&self) -> &ParamTransform {
        &self.transform
    }

    pub fn fd_scales(&self) -> &FdScales {
        &self.fd_scales
    }

    pub fn ls_constants(&self) -> Option<LsConstants> {
        match &self.family {
            Family::LocationScale(c) => Some(*c),
            _ => None,
        }
    }

    /// Which coordinates are constrained to be positive.
    pub fn positivity_mask(&self) -> Vec<bool> {
        match &self.family {
            Family::LocationScale(_) => vec![false, true],
            Family::Poisson(_) => vec![true; self.dim],
            _ => vec![false; self.dim],
        }
    }

    /// Fisher metric of the data model as a field.
    pub fn metric_x(&self) -> MetricField {
        let t = self.x_model.tensors().clone();
        let prov = provenance_of(t.mode());
        MetricField::new(self.dim, self.domain().clone(), prov, move |x| t.metric(x))
            .with_scales(self.fd_scales.clone())
    }

    /// Fisher metric of the target model as a field.
    pub fn metric_y(&self) -> MetricField {
        let t = self.y_model.tensors().clone();
        let prov = provenance_of(t.mode());
        MetricField::new(self.dim, self.domain().clone(), prov, move |x| t.metric(x))
            .with_scales(self.fd_scales.clone())
    }

    /// The predictive metric `g gt^{-1} g` as a field.
    pub fn predictive_metric(&self) -> MetricField {
        let tx = self.x_model.tensors().clone();
        let ty = self.y_model.tensors().clone();
        MetricField::new(
            self.dim,
            self.domain().clone(),
            Provenance::DerivedByFormula,
            move |x| {
                let g = tx.metric(x);
                let gt = ty.metric(x);
                match gt.lu().solve(&g) {
                    // g * gt^{-1} * g, symmetric for SPD inputs
                    Some(gt_inv_g) => &g * gt_inv_g,
                    None => DMatrix::from_element(g.nrows(), g.ncols(), f64::NAN),
                }
            },
        )
        .with_scales(self.fd_scales.clone())
    }

    /// log of the volume element of the predictive metric,
    /// `log |g| - (1/2) log |gt|`, up to an additive constant.
    pub fn log_volume_element(&self, p: &Point) -> Result<f64> {
        let (_, _, det_x) = self.metric_x().inverse_and_det(p)?;
        let (_, _, det_y) = self.metric_y().inverse_and_det(p)?;
        Ok(det_x.ln() - 0.5 * det_y.ln())
    }
}

fn provenance_of(mode: TensorMode) -> Provenance {
    match mode {
        TensorMode::Analytic => Provenance::Analytic,
        TensorMode::Quadrature => Provenance::DerivedByFormula,
        TensorMode::MonteCarlo { .. } => Provenance::Numeric,
    }
}

#[cfg(test)]
mod tests;
