//! Riemannian machinery over a d-dimensional parameter domain: metric fields,
//! the Riemannian connection, Laplace–Beltrami operators and coordinate
//! charts.
//!
//! The Laplacian here is the positive-divergence form
//! `|g|^{-1/2} d_i (|g|^{1/2} g^{ij} d_j f)`; both sign conventions circulate,
//! and every formula downstream assumes this one.
//!
//! Metrics and priors are assumed C^2 on their admitted domain; the
//! differentiation backend is central finite differences unless a field
//! carries analytic derivatives.

pub mod chart;

pub use chart::{pushforward_metric, pushforward_scalar, Chart};

use crate::error::{Error, Result};
use crate::fd::{self, FdScales};
use crate::tensor::Tensor3;
use nalgebra::{DMatrix, SymmetricEigen};
use std::sync::Arc;

/// A point of the parameter domain in a fixed chart.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinates {coords:?}")));
        }
        Ok(Point { coords })
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Point::new(coords.to_vec())
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

/// Admissible region of a chart, e.g. sigma > 0 or all rates positive.
#[derive(Clone)]
pub struct Domain {
    dim: usize,
    desc: String,
    pred: Arc<dyn Fn(&[f64]) -> bool + Send + Sync>,
}

impl Domain {
    pub fn new(
        dim: usize,
        desc: impl Into<String>,
        pred: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        Domain {
            dim,
            desc: desc.into(),
            pred: Arc::new(pred),
        }
    }

    pub fn unconstrained(dim: usize) -> Self {
        Domain::new(dim, format!("R^{dim}"), |_| true)
    }

    /// The listed coordinates must be strictly positive.
    pub fn positive(dim: usize, coords: &[usize]) -> Self {
        let coords = coords.to_vec();
        let desc = format!("coordinates {coords:?} > 0");
        Domain::new(dim, desc, move |x: &[f64]| {
            coords.iter().all(|&i| x[i] > 0.0)
        })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|c| c.is_finite()) && (self.pred)(x)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn require(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!("{x:?} not in {}", self.desc)))
        }
    }
}

impl std::fmt::Debug for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Domain({}, {})", self.dim, self.desc)
    }
}

/// How the coefficients of a metric field were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    DerivedByFormula,
    Numeric,
}

/// A map from points to symmetric positive definite d x d matrices.
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    domain: Domain,
    provenance: Provenance,
    scales: FdScales,
    eval_fn: Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>,
}

/// Relative eigenvalue threshold for the positive-definiteness check.
const SPD_EIG_REL: f64 = 1e-12;
/// Relative tolerance for the symmetry check of metric coefficients.
const SYMMETRY_REL: f64 = 1e-12;

impl MetricField {
    pub fn new(
        dim: usize,
        domain: Domain,
        provenance: Provenance,
        eval: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        MetricField {
            dim,
            domain,
            provenance,
            scales: FdScales::unit(dim),
            eval_fn: Arc::new(eval),
        }
    }

    pub fn constant(matrix: DMatrix<f64>) -> Self {
        let dim = matrix.nrows();
        MetricField::new(
            dim,
            Domain::unconstrained(dim),
            Provenance::Analytic,
            move |_| matrix.clone(),
        )
    }

    pub fn with_scales(mut self, scales: FdScales) -> Self {
        self.scales = scales;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub(crate) fn scales(&self) -> &FdScales {
        &self.scales
    }

    /// Coefficient matrix without the symmetry/SPD validation.
    pub fn raw(&self, x: &[f64]) -> DMatrix<f64> {
        (self.eval_fn)(x)
    }

    /// Coefficient matrix, validated for domain membership and symmetry.
    pub fn eval(&self, p: &Point) -> Result<DMatrix<f64>> {
        self.domain.require(p.coords())?;
        let g = self.raw(p.coords());
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonSpd(format!(
                "non-finite metric coefficients at {:?}",
                p.coords()
            )));
        }
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                if (g[(i, j)] - g[(j, i)]).abs() > SYMMETRY_REL * scale {
                    return Err(Error::NonSpd(format!(
                        "asymmetric coefficients at {:?}: g[{i},{j}]={}, g[{j},{i}]={}",
                        p.coords(),
                        g[(i, j)],
                        g[(j, i)]
                    )));
                }
            }
        }
        Ok(g)
    }

    /// The metric, its inverse and its determinant, with an eigenvalue-based
    /// positive-definiteness gate.
    pub fn inverse_and_det(&self, p: &Point) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
        let g = self.eval(p)?;
        let sym = (&g + g.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let trace = g.trace();
        let floor = SPD_EIG_REL * trace.abs();
        if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l <= floor) {
            return Err(Error::NonSpd(format!(
                "eigenvalue {bad:.6e} below threshold {floor:.6e} at {:?}",
                p.coords()
            )));
        }
        let det = eig.eigenvalues.iter().product();
        let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
        let inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
        Ok((g, inv, det))
    }

    /// log |g|^{1/2} at a point.
    pub fn half_log_det(&self, p: &Point) -> Result<f64> {
        let (_, _, det) = self.inverse_and_det(p)?;
        Ok(0.5 * det.ln())
    }

    /// The field scaled by a positive constant.
    pub fn scaled(&self, c: f64) -> Result<MetricField> {
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::Range(format!("metric scale must be positive, got {c}")));
        }
        let inner = self.eval_fn.clone();
        Ok(MetricField {
            dim: self.dim,
            domain: self.domain.clone(),
            provenance: Provenance::DerivedByFormula,
            scales: self.scales.clone(),
            eval_fn: Arc::new(move |x| inner(x) * c),
        })
    }
}

/// A real-valued field with optional analytic derivatives; finite differences
/// fill in whatever is missing.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    domain: Domain,
    scales: FdScales,
    eval_fn: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    grad_fn: Option<Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
    hess_fn: Option<Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>>,
}

impl ScalarField {
    pub fn new(
        dim: usize,
        domain: Domain,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            dim,
            domain,
            scales: FdScales::unit(dim),
            eval_fn: Arc::new(eval),
            grad_fn: None,
            hess_fn: None,
        }
    }

    pub fn constant(dim: usize, v: f64) -> Self {
        let mut f = ScalarField::new(dim, Domain::unconstrained(dim), move |_| v);
        f.grad_fn = Some(Arc::new(move |x: &[f64]| vec![0.0; x.len()]));
        f.hess_fn = Some(Arc::new(move |x: &[f64]| {
            DMatrix::zeros(x.len(), x.len())
        }));
        f
    }

    pub fn with_gradient(
        mut self,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad_fn = Some(Arc::new(grad));
        self
    }

    pub fn with_hessian(
        mut self,
        hess: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hess_fn = Some(Arc::new(hess));
        self
    }

    pub fn with_scales(mut self, scales: FdScales) -> Self {
        self.scales = scales;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.grad_fn.is_some()
    }

    pub fn has_analytic_hessian(&self) -> bool {
        self.hess_fn.is_some()
    }

    pub fn raw(&self, x: &[f64]) -> f64 {
        (self.eval_fn)(x)
    }

    pub fn value(&self, p: &Point) -> Result<f64> {
        self.domain.require(p.coords())?;
        let v = self.raw(p.coords());
        if !v.is_finite() {
            return Err(Error::Domain(format!(
                "field evaluated non-finite at {:?}",
                p.coords()
            )));
        }
        Ok(v)
    }

    pub fn gradient(&self, p: &Point) -> Result<Vec<f64>> {
        self.domain.require(p.coords())?;
        match &self.grad_fn {
            Some(g) => Ok(g(p.coords())),
            None => {
                let eval = self.eval_fn.clone();
                fd::gradient(&move |x: &[f64]| eval(x), p.coords(), &self.scales, &self.domain)
            }
        }
    }

    pub fn hessian(&self, p: &Point) -> Result<DMatrix<f64>> {
        self.domain.require(p.coords())?;
        match &self.hess_fn {
            Some(h) => Ok(h(p.coords())),
            None => {
                let eval = self.eval_fn.clone();
                fd::hessian(&move |x: &[f64]| eval(x), p.coords(), &self.scales, &self.domain)
            }
        }
    }

    /// Gradient of log f, using the analytic gradient of f when present.
    pub fn log_gradient(&self, p: &Point) -> Result<Vec<f64>> {
        let v = self.value(p)?;
        if v <= 0.0 {
            return Err(Error::NonPositiveRatio(v));
        }
        Ok(self.gradient(p)?.into_iter().map(|g| g / v).collect())
    }

    /// The field raised to a power, with chain-rule derivatives when the base
    /// has analytic ones. The base must be positive where evaluated.
    pub fn powf(&self, c: f64) -> ScalarField {
        let eval = self.eval_fn.clone();
        let mut out = ScalarField::new(self.dim, self.domain.clone(), move |x| eval(x).powf(c));
        out.scales = self.scales.clone();
        if let Some(grad) = &self.grad_fn {
            let eval = self.eval_fn.clone();
            let grad = grad.clone();
            out.grad_fn = Some(Arc::new(move |x: &[f64]| {
                let v = eval(x);
                let s = c * v.powf(c - 1.0);
                grad(x).into_iter().map(|g| s * g).collect()
            }));
            if let Some(hess) = &self.hess_fn {
                let eval = self.eval_fn.clone();
                let grad = self.grad_fn.clone().unwrap();
                let hess = hess.clone();
                out.hess_fn = Some(Arc::new(move |x: &[f64]| {
                    let v = eval(x);
                    let g = grad(x);
                    let h = hess(x);
                    let d = g.len();
                    let mut out = h * (c * v.powf(c - 1.0));
                    let s2 = c * (c - 1.0) * v.powf(c - 2.0);
                    for i in 0..d {
                        for j in 0..d {
                            out[(i, j)] += s2 * g[i] * g[j];
                        }
                    }
                    out
                }));
            }
        }
        out
    }
}

/// Riemannian connection coefficients with all indices down:
/// `G_{ijk} = (d_i g_jk + d_j g_ki - d_k g_ij) / 2`.
pub fn riemannian_connection(m: &MetricField, p: &Point) -> Result<Tensor3> {
    m.domain().require(p.coords())?;
    let eval = m.eval_fn.clone();
    let dg = fd::matrix_derivatives(
        &move |x: &[f64]| eval(x),
        p.coords(),
        m.scales(),
        m.domain(),
    )?;
    let d = m.dim();
    Ok(Tensor3::from_fn(d, |i, j, k| {
        0.5 * (dg[i][(j, k)] + dg[j][(k, i)] - dg[k][(i, j)])
    }))
}

/// Connection coefficients with the last index raised by the inverse metric.
pub fn riemannian_connection_raised(m: &MetricField, p: &Point) -> Result<Tensor3> {
    let gamma = riemannian_connection(m, p)?;
    let (_, ginv, _) = m.inverse_and_det(p)?;
    Ok(gamma.raise_last(&ginv))
}

/// The traces `sum_i G_{ki}{}^i`, equal to `d_k log |g|^{1/2}`.
pub fn connection_trace(m: &MetricField, p: &Point) -> Result<Vec<f64>> {
    Ok(riemannian_connection_raised(m, p)?.trace_mixed())
}

/// Laplace–Beltrami operator of the metric applied to f at a point, in the
/// covariant form `g^{ij} (d_i d_j f - G_{ij}{}^k d_k f)`.
pub fn laplace_beltrami(m: &MetricField, f: &ScalarField, p: &Point) -> Result<f64> {
    if m.dim() != f.dim() {
        return Err(Error::ChartMismatch(m.dim(), f.dim()));
    }
    let (_, ginv, _) = m.inverse_and_det(p)?;
    let gamma = riemannian_connection_raised(m, p)?;
    let grad = f.gradient(p)?;
    let hess = f.hessian(p)?;
    let d = m.dim();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let correction: f64 = (0..d).map(|k| gamma.get(i, j, k) * grad[k]).sum();
            acc += ginv[(i, j)] * (hess[(i, j)] - correction);
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests;
