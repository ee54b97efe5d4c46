//! Coordinate charts and pushforwards of metric and scalar fields.
//!
//! Every chart maps to a designated reference chart for its model family
//! (e.g. (mu, sigma) for location-scale families, the rate vector for Poisson
//! families); composing through the reference chart gives arbitrary
//! chart-to-chart transport.

use super::{Domain, MetricField, Provenance, ScalarField};
use crate::error::{Error, Result};
use crate::fd::{self, FdScales};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::sync::Arc;

type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type JacFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A smooth bijection between chart coordinates and the reference chart.
#[derive(Clone)]
pub struct Chart {
    name: String,
    dim: usize,
    domain: Domain,
    to_ref: MapFn,
    from_ref: MapFn,
    jac_to_ref: Option<JacFn>,
}

impl Chart {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        domain: Domain,
        to_ref: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        from_ref: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Chart {
            name: name.into(),
            dim,
            domain,
            to_ref: Arc::new(to_ref),
            from_ref: Arc::new(from_ref),
            jac_to_ref: None,
        }
    }

    /// Attaches the analytic Jacobian of `to_ref` (reference rows, chart columns).
    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jac_to_ref = Some(Arc::new(jac));
        self
    }

    pub fn identity(dim: usize, domain: Domain, name: impl Into<String>) -> Self {
        Chart::new(
            name,
            dim,
            domain,
            |x: &[f64]| x.to_vec(),
            |x: &[f64]| x.to_vec(),
        )
        .with_jacobian(move |_| DMatrix::identity(dim, dim))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.domain.contains(x)
    }

    pub fn to_reference(&self, x: &[f64]) -> Vec<f64> {
        (self.to_ref)(x)
    }

    pub fn from_reference(&self, r: &[f64]) -> Vec<f64> {
        (self.from_ref)(r)
    }

    /// Jacobian of the chart-to-reference map at a chart point.
    pub fn jacobian_to_reference(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.jac_to_ref {
            Some(j) => Ok(j(x)),
            None => {
                let map = self.to_ref.clone();
                fd::jacobian(
                    &move |y: &[f64]| map(y),
                    x,
                    &FdScales::unit(self.dim),
                    &self.domain,
                )
            }
        }
    }

    /// max |from_ref(to_ref(x)) - x|, for validating chart implementations.
    pub fn roundtrip_error(&self, x: &[f64]) -> f64 {
        let back = self.from_reference(&self.to_reference(x));
        back.iter()
            .zip(x.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Re-expresses a metric given in `chart_from` coordinates in `chart_to`
/// coordinates: `g'_{i'j'} = (d th^i / d xi^i') g_ij (d th^j / d xi^j')`.
pub fn pushforward_metric(
    m: &MetricField,
    chart_from: &Chart,
    chart_to: &Chart,
) -> Result<MetricField> {
    if chart_from.dim() != chart_to.dim() {
        return Err(Error::ChartMismatch(chart_from.dim(), chart_to.dim()));
    }
    if m.dim() != chart_from.dim() {
        return Err(Error::ChartMismatch(m.dim(), chart_from.dim()));
    }
    let dim = m.dim();
    let from = chart_from.clone();
    let to = chart_to.clone();
    let metric = m.clone();

    let dom_from = chart_from.clone();
    let dom_to = chart_to.clone();
    let metric_dom = m.domain().clone();
    let domain = Domain::new(
        dim,
        format!("{} pulled back through {}", chart_to.name(), chart_from.name()),
        move |xi: &[f64]| {
            if !dom_to.contains(xi) {
                return false;
            }
            let r = dom_to.to_reference(xi);
            let th = dom_from.from_reference(&r);
            dom_from.contains(&th) && metric_dom.contains(&th)
        },
    );

    Ok(MetricField::new(
        dim,
        domain,
        Provenance::DerivedByFormula,
        move |xi: &[f64]| {
            let r = to.to_reference(xi);
            let th = from.from_reference(&r);
            // d th / d xi through the reference chart
            let j_to = to
                .jacobian_to_reference(xi)
                .expect("jacobian inside admitted domain");
            let j_from_inv = from
                .jacobian_to_reference(&th)
                .expect("jacobian inside admitted domain")
                .try_inverse()
                .expect("chart jacobian must be nonsingular");
            let j = j_from_inv * j_to;
            let g = metric.raw(&th);
            j.transpose() * g * j
        },
    ))
}

/// Re-expresses a scalar field in another chart (evaluation only; derivatives
/// fall back to finite differences in the new coordinates).
pub fn pushforward_scalar(
    f: &ScalarField,
    chart_from: &Chart,
    chart_to: &Chart,
) -> Result<ScalarField> {
    if chart_from.dim() != chart_to.dim() {
        return Err(Error::ChartMismatch(chart_from.dim(), chart_to.dim()));
    }
    let from = chart_from.clone();
    let to = chart_to.clone();
    let field = f.clone();
    Ok(ScalarField::new(
        f.dim(),
        chart_to.domain().clone(),
        move |xi: &[f64]| {
            let r = to.to_reference(xi);
            let th = from.from_reference(&r);
            field.raw(&th)
        },
    ))
}

/// Location-scale reference chart (mu, sigma), sigma > 0.
pub fn location_scale_reference() -> Chart {
    Chart::identity(2, Domain::positive(2, &[1]), "mu_sigma")
}

/// Upper-half-plane coordinates (u, v) for a location-scale pair:
/// `u = sqrt(b_tilde/a_tilde) (a/b) mu`, `v = sigma`. In these coordinates
/// the predictive metric is `(b^2/b_tilde) / v^2` times the identity.
pub fn upper_half_plane(a: f64, b: f64, a_tilde: f64, b_tilde: f64) -> Chart {
    let scale = (b_tilde / a_tilde).sqrt() * a / b;
    let inv = 1.0 / scale;
    Chart::new(
        "upper_half_plane",
        2,
        Domain::positive(2, &[1]),
        move |uv: &[f64]| vec![inv * uv[0], uv[1]],
        move |ms: &[f64]| vec![scale * ms[0], ms[1]],
    )
    .with_jacobian(move |_| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![inv, 1.0])))
}

/// Geodesic polar coordinates (rho, tau) around the point (mu, sigma) =
/// (0, kappa) of the hyperbolic structure carried by a location-scale pair.
/// rho is the unit-curvature distance; the metric distance is
/// `(b/sqrt(b_tilde)) rho`.
pub fn geodesic_polar(a: f64, b: f64, a_tilde: f64, b_tilde: f64, kappa: f64) -> Chart {
    let mu_scale = (a_tilde / b_tilde).sqrt() * b / a; // mu = mu_scale * u
    let center = Complex64::new(0.0, kappa);

    let to_ref = move |rt: &[f64]| {
        let (rho, tau) = (rt[0], rt[1]);
        let w = Complex64::from_polar((rho / 2.0).tanh(), tau);
        let z = center * (1.0 + w) / (1.0 - w);
        vec![mu_scale * z.re, z.im]
    };
    let from_ref = move |ms: &[f64]| {
        let z = Complex64::new(ms[0] / mu_scale, ms[1]);
        let w = (z - center) / (z + center);
        let r = w.norm();
        vec![2.0 * r.atanh(), w.arg()]
    };
    let jac = move |rt: &[f64]| {
        let (rho, tau) = (rt[0], rt[1]);
        let half = rho / 2.0;
        let w = Complex64::from_polar(half.tanh(), tau);
        let dz_dw = center * 2.0 / ((1.0 - w) * (1.0 - w));
        let sech2 = 1.0 / (half.cosh() * half.cosh());
        let dw_drho = Complex64::from_polar(0.5 * sech2, tau);
        let dw_dtau = Complex64::new(0.0, 1.0) * w;
        let dz_drho = dz_dw * dw_drho;
        let dz_dtau = dz_dw * dw_dtau;
        DMatrix::from_row_slice(
            2,
            2,
            &[
                mu_scale * dz_drho.re,
                mu_scale * dz_dtau.re,
                dz_drho.im,
                dz_dtau.im,
            ],
        )
    };
    Chart::new(
        "geodesic_polar",
        2,
        Domain::positive(2, &[0]),
        to_ref,
        from_ref,
    )
    .with_jacobian(jac)
}

/// Flattening chart for Poisson pairs: `xi_i = 2 sqrt(lambda_i / s_i)`.
/// The predictive metric becomes the identity on the first orthant.
pub fn poisson_sqrt(s: &[f64]) -> Chart {
    let d = s.len();
    let s_to = s.to_vec();
    let s_from = s.to_vec();
    let s_jac = s.to_vec();
    let all: Vec<usize> = (0..d).collect();
    Chart::new(
        "sqrt_rates",
        d,
        Domain::positive(d, &all),
        move |xi: &[f64]| {
            xi.iter()
                .zip(s_to.iter())
                .map(|(&x, &si)| si * x * x / 4.0)
                .collect()
        },
        move |lam: &[f64]| {
            lam.iter()
                .zip(s_from.iter())
                .map(|(&l, &si)| 2.0 * (l / si).sqrt())
                .collect()
        },
    )
    .with_jacobian(move |xi: &[f64]| {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            xi.len(),
            xi.iter().zip(s_jac.iter()).map(|(&x, &si)| si * x / 2.0),
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn upper_half_plane_roundtrip() {
        let c = upper_half_plane(1.0, 2.0, 1.5, 0.7);
        for p in [[0.3, 1.2], [-2.0, 0.4], [5.0, 3.0]] {
            assert!(c.roundtrip_error(&p) < 1e-12);
        }
    }

    #[test]
    fn polar_chart_roundtrip_and_center() {
        let c = geodesic_polar(1.0, 2.0, 1.0, 2.0, 1.5);
        for p in [[0.5, 0.3], [2.0, -2.5], [0.01, 1.0]] {
            assert!(c.roundtrip_error(&p) < 1e-10, "roundtrip at {p:?}");
        }
        // rho -> 0 approaches the center (0, kappa) in reference coordinates
        let r = c.to_reference(&[1e-9, 0.7]);
        assert_relative_eq!(r[0], 0.0, epsilon = 1e-8);
        assert_relative_eq!(r[1], 1.5, epsilon = 1e-8);
    }

    #[test]
    fn polar_jacobian_matches_finite_differences() {
        let c = geodesic_polar(1.2, 1.7, 0.8, 2.3, 1.0);
        let p = [0.8, 0.6];
        let j = c.jacobian_to_reference(&p).unwrap();
        let map = |x: &[f64]| c.to_reference(x);
        let j_fd = crate::fd::jacobian(
            &map,
            &p,
            &crate::fd::FdScales::unit(2),
            &Domain::positive(2, &[0]),
        )
        .unwrap();
        for i in 0..2 {
            for k in 0..2 {
                assert_relative_eq!(j[(i, k)], j_fd[(i, k)], max_relative = 1e-7, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn sqrt_chart_nonsingular_jacobian() {
        let c = poisson_sqrt(&[0.5, 2.0]);
        let j = c.jacobian_to_reference(&[1.0, 3.0]).unwrap();
        assert!(j.determinant().abs() > 0.0);
        assert!(c.roundtrip_error(&[0.7, 4.0]) < 1e-14);
    }
}
