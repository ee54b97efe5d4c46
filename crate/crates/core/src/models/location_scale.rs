//! Location-scale pairs: p(x|mu,sigma) = phi((x-mu)/sigma)/sigma and
//! p~(y|mu,sigma) = phi~((y-mu)/sigma)/sigma with symmetric base densities.
//!
//! Every tensor of such a model reduces to sigma-independent moments of the
//! standardized variable z: with w1 = (log phi)'(z) and w2 = (log phi)''(z),
//!
//!   d_mu l = A/sigma,            A = -w1
//!   d_sigma l = B/sigma,         B = -(1 + z w1)
//!   d^2_mumu l = C/sigma^2,      C = w2
//!   d^2_musigma l = D/sigma^2,   D = z w2 + w1
//!   d^2_sigmasigma l = E/sigma^2, E = z^2 w2 + 2 z w1 + 1
//!
//! so the metric is diag(a, b)/sigma^2 with a = E[A^2], b = E[B^2], and all
//! connection coefficients are fixed z-moments divided by sigma^3. The
//! moments are computed once by quadrature at construction.

use super::{Family, Model, ModelPair, ParamTransform, TensorMode, TensorProvider};
use crate::error::{Error, Result};
use crate::geometry::chart::location_scale_reference;
use crate::quad;
use crate::tensor::Tensor3;
use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use std::sync::Arc;

type ZFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type ZSampler = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// A symmetric probability density on the real line, given through its
/// log-density, the first two log-density derivatives and a sampler.
#[derive(Clone)]
pub struct SymmetricBase {
    label: String,
    log_density: ZFn,
    dlog: ZFn,
    d2log: ZFn,
    sampler: ZSampler,
    analytic_derivatives: bool,
}

impl SymmetricBase {
    pub fn new(
        label: impl Into<String>,
        log_density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sampler: impl Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let ld: ZFn = Arc::new(log_density);
        let h = f64::EPSILON.powf(1.0 / 3.0);
        let ld1 = ld.clone();
        let dlog: ZFn = Arc::new(move |z: f64| {
            let step = h * z.abs().max(1.0);
            (ld1(z + step) - ld1(z - step)) / (2.0 * step)
        });
        let ld2 = ld.clone();
        let h2 = f64::EPSILON.powf(1.0 / 4.0);
        let d2log: ZFn = Arc::new(move |z: f64| {
            let step = h2 * z.abs().max(1.0);
            (ld2(z + step) - 2.0 * ld2(z) + ld2(z - step)) / (step * step)
        });
        SymmetricBase {
            label: label.into(),
            log_density: ld,
            dlog,
            d2log,
            sampler: Arc::new(sampler),
            analytic_derivatives: false,
        }
    }

    /// Overrides the finite-difference log-density derivatives.
    pub fn with_derivatives(
        mut self,
        dlog: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2log: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.dlog = Arc::new(dlog);
        self.d2log = Arc::new(d2log);
        self.analytic_derivatives = true;
        self
    }

    pub fn standard_normal() -> Self {
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        SymmetricBase::new(
            "gaussian",
            move |z: f64| -0.5 * z * z - half_log_2pi,
            |rng: &mut dyn RngCore| StandardNormal.sample(rng),
        )
        .with_derivatives(|z| -z, |_| -1.0)
    }

    pub fn logistic() -> Self {
        // density exp(-z) / (1 + exp(-z))^2; log via softplus for stability
        let softplus = |t: f64| t.max(0.0) + (-t.abs()).exp().ln_1p();
        SymmetricBase::new(
            "logistic",
            move |z: f64| -z - 2.0 * softplus(-z),
            |rng: &mut dyn RngCore| {
                let u: f64 = rng.random_range(1e-16..1.0 - 1e-16);
                (u / (1.0 - u)).ln()
            },
        )
        .with_derivatives(
            |z| -(z / 2.0).tanh(),
            |z| {
                let c = (z / 2.0).cosh();
                -0.5 / (c * c)
            },
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn log_density(&self, z: f64) -> f64 {
        (self.log_density)(z)
    }

    pub fn dlog(&self, z: f64) -> f64 {
        (self.dlog)(z)
    }

    pub fn d2log(&self, z: f64) -> f64 {
        (self.d2log)(z)
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        (self.sampler)(rng)
    }
}

#[derive(Clone)]
pub struct LocationScalePairSpec {
    pub phi: SymmetricBase,
    pub phi_tilde: SymmetricBase,
}

/// The metric constants of a location-scale pair: the data-model metric is
/// diag(a, b)/sigma^2 and the target-model metric diag(a_tilde, b_tilde)/sigma^2.
#[derive(Clone, Copy, Debug)]
pub struct LsConstants {
    pub a: f64,
    pub b: f64,
    pub a_tilde: f64,
    pub b_tilde: f64,
}

impl LsConstants {
    /// b_tilde / b^2, the scale factor of every closed-form risk expression.
    pub fn b_ratio(&self) -> f64 {
        self.b_tilde / (self.b * self.b)
    }

    /// a^2 b_tilde / (b^2 a_tilde), the mu^2 coefficient in the hyperbolic
    /// distance from the shrinkage center.
    pub fn q(&self) -> f64 {
        self.a * self.a * self.b_tilde / (self.b * self.b * self.a_tilde)
    }
}

/// z-moments of one location-scale model (see the module comment).
#[derive(Clone, Copy, Debug)]
struct ZMoments {
    a: f64,  // E[A^2]
    b: f64,  // E[B^2]
    ab: f64, // E[A B], ~0 by symmetry
    t_aab: f64,
    t_bbb: f64,
    e_cb: f64,
    e_da: f64,
    e_eb: f64,
    t_aaa: f64,
    t_abb: f64,
    e_ca: f64,
    e_db: f64,
    e_ea: f64,
}

fn z_moments(base: &SymmetricBase) -> Result<ZMoments> {
    // finite-difference log-density derivatives carry ~1e-8 noise from the
    // second-derivative stencil; don't ask the quadrature for more
    let tol = if base.analytic_derivatives { 1e-12 } else { 3e-8 };
    let expect = |h: &dyn Fn(f64, f64, f64) -> f64| -> Result<f64> {
        let f = |z: f64| {
            let w1 = base.dlog(z);
            let w2 = base.d2log(z);
            h(z, w1, w2) * base.log_density(z).exp()
        };
        quad::real_line(&f, tol, tol)
    };
    let mass = expect(&|_, _, _| 1.0)?;
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::Spec(format!(
            "base density '{}' integrates to {mass}, expected 1",
            base.label()
        )));
    }
    let a_fn = |_z: f64, w1: f64, _w2: f64| -w1;
    let b_fn = |z: f64, w1: f64, _w2: f64| -(1.0 + z * w1);
    let c_fn = |_z: f64, _w1: f64, w2: f64| w2;
    let d_fn = |z: f64, w1: f64, w2: f64| z * w2 + w1;
    let e_fn = |z: f64, w1: f64, w2: f64| z * z * w2 + 2.0 * z * w1 + 1.0;

    let m = ZMoments {
        a: expect(&|z, w1, w2| a_fn(z, w1, w2).powi(2))?,
        b: expect(&|z, w1, w2| b_fn(z, w1, w2).powi(2))?,
        ab: expect(&|z, w1, w2| a_fn(z, w1, w2) * b_fn(z, w1, w2))?,
        t_aab: expect(&|z, w1, w2| a_fn(z, w1, w2).powi(2) * b_fn(z, w1, w2))?,
        t_bbb: expect(&|z, w1, w2| b_fn(z, w1, w2).powi(3))?,
        e_cb: expect(&|z, w1, w2| c_fn(z, w1, w2) * b_fn(z, w1, w2))?,
        e_da: expect(&|z, w1, w2| d_fn(z, w1, w2) * a_fn(z, w1, w2))?,
        e_eb: expect(&|z, w1, w2| e_fn(z, w1, w2) * b_fn(z, w1, w2))?,
        t_aaa: expect(&|z, w1, w2| a_fn(z, w1, w2).powi(3))?,
        t_abb: expect(&|z, w1, w2| a_fn(z, w1, w2) * b_fn(z, w1, w2).powi(2))?,
        e_ca: expect(&|z, w1, w2| c_fn(z, w1, w2) * a_fn(z, w1, w2))?,
        e_db: expect(&|z, w1, w2| d_fn(z, w1, w2) * b_fn(z, w1, w2))?,
        e_ea: expect(&|z, w1, w2| e_fn(z, w1, w2) * a_fn(z, w1, w2))?,
    };
    if m.a <= 0.0 || m.b <= 0.0 {
        return Err(Error::Spec(format!(
            "base density '{}' has non-positive information constants a={}, b={}",
            base.label(),
            m.a,
            m.b
        )));
    }
    // Symmetry of phi forces the odd moments to vanish.
    let odd_tol = if base.analytic_derivatives { 1e-8 } else { 1e-6 };
    for (name, v) in [("E[AB]", m.ab), ("E[A^3]", m.t_aaa), ("E[AB^2]", m.t_abb)] {
        if v.abs() > odd_tol {
            return Err(Error::Spec(format!(
                "base density '{}' is not symmetric: {name} = {v:.3e}",
                base.label()
            )));
        }
    }
    Ok(m)
}

fn location_scale_model(label: &str, base: SymmetricBase, m: ZMoments) -> Model {
    let dens_base = base.clone();
    let sample_base = base.clone();
    let tensors = TensorProvider::new(
        2,
        TensorMode::Quadrature,
        move |th: &[f64]| {
            let s2 = th[1] * th[1];
            DMatrix::from_row_slice(2, 2, &[m.a / s2, m.ab / s2, m.ab / s2, m.b / s2])
        },
        move |th: &[f64]| {
            let s3 = th[1].powi(3);
            let mut t = Tensor3::zeros(2);
            t.set(0, 0, 0, m.t_aaa / s3);
            for (i, j, k) in [(0, 0, 1), (0, 1, 0), (1, 0, 0)] {
                t.set(i, j, k, m.t_aab / s3);
            }
            for (i, j, k) in [(0, 1, 1), (1, 0, 1), (1, 1, 0)] {
                t.set(i, j, k, m.t_abb / s3);
            }
            t.set(1, 1, 1, m.t_bbb / s3);
            t
        },
        move |th: &[f64]| {
            let s3 = th[1].powi(3);
            let mut g = Tensor3::zeros(2);
            g.set(0, 0, 0, m.e_ca / s3);
            g.set(0, 0, 1, m.e_cb / s3);
            g.set(0, 1, 0, m.e_da / s3);
            g.set(1, 0, 0, m.e_da / s3);
            g.set(0, 1, 1, m.e_db / s3);
            g.set(1, 0, 1, m.e_db / s3);
            g.set(1, 1, 0, m.e_ea / s3);
            g.set(1, 1, 1, m.e_eb / s3);
            g
        },
        move |th: &[f64]| {
            let s3 = th[1].powi(3);
            let mut g = Tensor3::zeros(2);
            g.set(0, 0, 0, (m.e_ca + m.t_aaa) / s3);
            g.set(0, 0, 1, (m.e_cb + m.t_aab) / s3);
            g.set(0, 1, 0, (m.e_da + m.t_aab) / s3);
            g.set(1, 0, 0, (m.e_da + m.t_aab) / s3);
            g.set(0, 1, 1, (m.e_db + m.t_abb) / s3);
            g.set(1, 0, 1, (m.e_db + m.t_abb) / s3);
            g.set(1, 1, 0, (m.e_ea + m.t_abb) / s3);
            g.set(1, 1, 1, (m.e_eb + m.t_bbb) / s3);
            g
        },
    );
    Model::new(
        label,
        1,
        move |obs: &[f64], th: &[f64]| {
            let z = (obs[0] - th[0]) / th[1];
            dens_base.log_density(z) - th[1].ln()
        },
        move |th: &[f64], rng: &mut dyn RngCore| vec![th[0] + th[1] * sample_base.sample(rng)],
        tensors,
    )
}

/// Builds a location-scale pair; the constants a, b, a_tilde, b_tilde are
/// computed by quadrature once, here.
pub fn builtin_location_scale(spec: LocationScalePairSpec) -> Result<ModelPair> {
    let mx = z_moments(&spec.phi)?;
    let my = z_moments(&spec.phi_tilde)?;
    let consts = LsConstants {
        a: mx.a,
        b: mx.b,
        a_tilde: my.a,
        b_tilde: my.b,
    };
    let x_label = format!("location-scale-x({})", spec.phi.label());
    let y_label = format!("location-scale-y({})", spec.phi_tilde.label());
    let x_model = location_scale_model(&x_label, spec.phi.clone(), mx);
    let y_model = location_scale_model(&y_label, spec.phi_tilde.clone(), my);
    Ok(ModelPair::new(
        format!("location-scale({}/{})", spec.phi.label(), spec.phi_tilde.label()),
        location_scale_reference(),
        x_model,
        y_model,
        Family::LocationScale(consts),
        ParamTransform::log_coords(vec![false, true]),
    ))
}
