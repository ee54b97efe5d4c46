//! Prior construction and analysis.
//!
//! Priors are stored as the positive ratio f = pi / pi_P to the volume-element
//! prior of the predictive metric, never as absolute densities: every risk
//! formula consumes the ratio, and improper priors have no normalizer. Priors
//! that differ by a positive constant are identified.

use crate::error::{Error, Result};
use crate::geometry::{laplace_beltrami, Domain, MetricField, Point, ScalarField};
use crate::models::{Family, LsConstants, ModelPair};
use crate::par;
use nalgebra::DMatrix;

/// Which builder produced a prior; lets closed-form predictive densities be
/// matched to the priors they integrate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    VolumeElement,
    RightInvariant,
    Ckappa,
    Cauchy,
    Stein,
    Power,
    Custom,
}

/// A prior expressed as its ratio to the volume-element prior.
#[derive(Clone)]
pub struct PriorSpec {
    name: String,
    kind: PriorKind,
    ratio: ScalarField,
    closed_form: Option<String>,
}

impl PriorSpec {
    pub fn new(name: impl Into<String>, ratio: ScalarField) -> Self {
        PriorSpec {
            name: name.into(),
            kind: PriorKind::Custom,
            ratio,
            closed_form: None,
        }
    }

    pub fn with_closed_form(mut self, text: impl Into<String>) -> Self {
        self.closed_form = Some(text.into());
        self
    }

    fn with_kind(mut self, kind: PriorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ratio(&self) -> &ScalarField {
        &self.ratio
    }

    pub fn closed_form(&self) -> Option<&str> {
        self.closed_form.as_deref()
    }

    /// Ratio value, guarded to be strictly positive.
    pub fn ratio_at(&self, p: &Point) -> Result<f64> {
        let v = self.ratio.value(p)?;
        if v <= 0.0 {
            return Err(Error::NonPositiveRatio(v));
        }
        Ok(v)
    }

    /// log pi(theta) up to an additive constant:
    /// log f(theta) + log |g| - (1/2) log |gt|.
    pub fn log_density(&self, pair: &ModelPair, p: &Point) -> Result<f64> {
        Ok(self.ratio_at(p)?.ln() + pair.log_volume_element(p)?)
    }

    /// Whether two priors agree up to a positive constant, judged by the
    /// coefficient of variation of the pointwise ratio over the probes.
    pub fn equivalent_up_to_constant(
        &self,
        other: &PriorSpec,
        probes: &[Point],
        tol: f64,
    ) -> Result<bool> {
        let mut vals = Vec::with_capacity(probes.len());
        for p in probes {
            vals.push(self.ratio_at(p)? / other.ratio_at(p)?);
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        Ok(var.sqrt() / mean.abs() <= tol)
    }
}

/// The volume-element prior of the predictive metric: density proportional to
/// |g| |gt|^{-1/2}; its ratio field is the constant 1.
pub fn volume_element_prior(pair: &ModelPair) -> PriorSpec {
    let closed = match pair.family() {
        Family::Normal(_) => "uniform",
        Family::LocationScale(_) => "1/sigma^2",
        Family::Poisson(_) => "prod lambda_j^{-1/2}",
        Family::Custom(_) => "|g| |gt|^{-1/2}",
    };
    PriorSpec::new(
        "volume_element",
        ScalarField::constant(pair.dim(), 1.0),
    )
    .with_kind(PriorKind::VolumeElement)
    .with_closed_form(closed)
}

fn ls_constants(pair: &ModelPair) -> Result<LsConstants> {
    pair.ls_constants().ok_or_else(|| {
        Error::Spec(format!(
            "prior family requires a location-scale pair, got {}",
            pair.label()
        ))
    })
}

/// The right invariant prior of the location-scale group, pi proportional to
/// 1/sigma; its ratio to the volume element is sigma.
pub fn prior_right_invariant(pair: &ModelPair) -> Result<PriorSpec> {
    ls_constants(pair)?;
    let ratio = ScalarField::new(2, Domain::positive(2, &[1]), |th: &[f64]| th[1])
        .with_gradient(|_| vec![0.0, 1.0])
        .with_hessian(|_| DMatrix::zeros(2, 2));
    Ok(PriorSpec::new("right_invariant", ratio)
        .with_kind(PriorKind::RightInvariant)
        .with_closed_form("1/sigma"))
}

/// Parameters of the shrinkage family bridging the right invariant prior
/// (kappa -> inf) and the Cauchy prior (kappa -> 0).
#[derive(Clone, Copy, Debug)]
pub struct CkappaParams {
    pub c: f64,
    pub kappa: f64,
}

impl CkappaParams {
    pub fn new(c: f64, kappa: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Range(format!("c must be in [0, inf), got {c}")));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Range(format!("kappa must be positive, got {kappa}")));
        }
        Ok(CkappaParams { c, kappa })
    }
}

/// Hyperbolic distance factor: cosh(rho) between (mu, sigma) and the
/// shrinkage center (0, kappa), with q = a^2 b_tilde / (b^2 a_tilde).
pub fn cosh_rho(consts: &LsConstants, kappa: f64, mu: f64, sigma: f64) -> f64 {
    let q = consts.q();
    (q * mu * mu + sigma * sigma + kappa * kappa) / (2.0 * sigma * kappa)
}

/// The shrinkage prior ratio `2 kappa sigma / (q mu^2 + c (sigma+kappa)^2 +
/// (1-c)(sigma^2+kappa^2))`, equal to `1/(cosh rho + c)`.
pub fn prior_ckappa(pair: &ModelPair, params: CkappaParams) -> Result<PriorSpec> {
    let consts = ls_constants(pair)?;
    let q = consts.q();
    let CkappaParams { c, kappa } = params;
    // f = 1/B with B = cosh(rho) + c; write B = (q mu^2 + s^2 + k^2)/(2 s k) + c.
    let b_val = move |mu: f64, s: f64| (q * mu * mu + s * s + kappa * kappa) / (2.0 * s * kappa) + c;
    let b_grad = move |mu: f64, s: f64| {
        [
            q * mu / (s * kappa),
            (s * s - q * mu * mu - kappa * kappa) / (2.0 * s * s * kappa),
        ]
    };
    let eval = move |th: &[f64]| 1.0 / b_val(th[0], th[1]);
    let grad = move |th: &[f64]| {
        let (mu, s) = (th[0], th[1]);
        let b = b_val(mu, s);
        let g = b_grad(mu, s);
        vec![-g[0] / (b * b), -g[1] / (b * b)]
    };
    let hess = move |th: &[f64]| {
        let (mu, s) = (th[0], th[1]);
        let b = b_val(mu, s);
        let g = b_grad(mu, s);
        // second derivatives of B
        let b_mm = q / (s * kappa);
        let b_ms = -q * mu / (s * s * kappa);
        let b_ss = (q * mu * mu + kappa * kappa) / (kappa * s * s * s);
        let b2 = b * b;
        let b3 = b2 * b;
        DMatrix::from_row_slice(
            2,
            2,
            &[
                2.0 * g[0] * g[0] / b3 - b_mm / b2,
                2.0 * g[0] * g[1] / b3 - b_ms / b2,
                2.0 * g[0] * g[1] / b3 - b_ms / b2,
                2.0 * g[1] * g[1] / b3 - b_ss / b2,
            ],
        )
    };
    let ratio = ScalarField::new(2, Domain::positive(2, &[1]), eval)
        .with_gradient(grad)
        .with_hessian(hess);
    Ok(
        PriorSpec::new(format!("ckappa(c={c},kappa={kappa})"), ratio)
            .with_kind(PriorKind::Ckappa)
            .with_closed_form("2 kappa sigma / (q mu^2 + c (sigma+kappa)^2 + (1-c)(sigma^2+kappa^2)) * pi_P"),
    )
}

/// The kappa -> 0 limit of the shrinkage family: a Cauchy prior for the
/// rescaled location, ratio sigma / (q mu^2 + sigma^2).
pub fn prior_cauchy(pair: &ModelPair) -> Result<PriorSpec> {
    let consts = ls_constants(pair)?;
    let q = consts.q();
    let eval = move |th: &[f64]| {
        let (mu, s) = (th[0], th[1]);
        s / (q * mu * mu + s * s)
    };
    let grad = move |th: &[f64]| {
        let (mu, s) = (th[0], th[1]);
        let e = q * mu * mu + s * s;
        vec![-2.0 * q * mu * s / (e * e), (q * mu * mu - s * s) / (e * e)]
    };
    let hess = move |th: &[f64]| {
        let (mu, s) = (th[0], th[1]);
        let e = q * mu * mu + s * s;
        let e3 = e * e * e;
        let f_mm = 2.0 * q * s * (4.0 * q * mu * mu - e) / e3;
        let f_ms = -2.0 * q * mu * (e - 4.0 * s * s) / e3;
        let f_ss = 2.0 * s * (s * s - 3.0 * q * mu * mu) / e3;
        DMatrix::from_row_slice(2, 2, &[f_mm, f_ms, f_ms, f_ss])
    };
    let ratio = ScalarField::new(2, Domain::positive(2, &[1]), eval)
        .with_gradient(grad)
        .with_hessian(hess);
    Ok(PriorSpec::new("cauchy", ratio)
        .with_kind(PriorKind::Cauchy)
        .with_closed_form("sigma/(q mu^2 + sigma^2) * pi_P"))
}

/// Stein-type shrinkage prior for Poisson pairs: ratio
/// `(lambda_1/s_1 + ... + lambda_d/s_d)^{-(d/2 - 1)}`.
pub fn prior_stein_poisson(pair: &ModelPair) -> Result<PriorSpec> {
    let spec = match pair.family() {
        Family::Poisson(spec) => spec.clone(),
        _ => {
            return Err(Error::Spec(format!(
                "Stein prior requires a Poisson pair, got {}",
                pair.label()
            )))
        }
    };
    let d = spec.dim();
    let nu = d as f64 / 2.0 - 1.0;
    let s_eval = spec.s.clone();
    let s_grad = spec.s.clone();
    let s_hess = spec.s.clone();
    let all: Vec<usize> = (0..d).collect();
    let sum = move |lam: &[f64], s: &[f64]| -> f64 {
        lam.iter().zip(s.iter()).map(|(&l, &si)| l / si).sum()
    };
    let sum_g = sum;
    let sum_h = sum;
    let eval = move |lam: &[f64]| sum(lam, &s_eval).powf(-nu);
    let grad = move |lam: &[f64]| {
        let t = sum_g(lam, &s_grad).powf(-nu - 1.0);
        s_grad.iter().map(|&si| -nu * t / si).collect()
    };
    let hess = move |lam: &[f64]| {
        let t = sum_h(lam, &s_hess).powf(-nu - 2.0);
        DMatrix::from_fn(d, d, |i, j| nu * (nu + 1.0) * t / (s_hess[i] * s_hess[j]))
    };
    let ratio = ScalarField::new(d, Domain::positive(d, &all), eval)
        .with_gradient(grad)
        .with_hessian(hess);
    Ok(PriorSpec::new("stein", ratio)
        .with_kind(PriorKind::Stein)
        .with_closed_form("(sum_j lambda_j/s_j)^{-(d/2-1)} * pi_P"))
}

/// Replaces the ratio f by f^c for c in (0, 1].
pub fn power_prior(prior: &PriorSpec, c: f64) -> Result<PriorSpec> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Range(format!("power must lie in (0, 1], got {c}")));
    }
    let kind = if c == 1.0 { prior.kind() } else { PriorKind::Power };
    Ok(PriorSpec::new(format!("{}^{c}", prior.name()), prior.ratio().powf(c)).with_kind(kind))
}

/// Verdict of a pointwise superharmonicity scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum SuperharmonicVerdict {
    /// max Laplacian over the probes is within tolerance of zero or below.
    Superharmonic,
    /// Additionally strictly negative somewhere.
    StrictSomewhere,
    /// Positive Laplacian beyond tolerance at some probe.
    Violated,
}

/// Scan result; Laplacian values are normalized by `1 + |f|` per probe.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SuperharmonicReport {
    pub verdict: SuperharmonicVerdict,
    pub max_normalized: f64,
    pub argmax: Vec<f64>,
    pub min_normalized: f64,
    pub argmin: Vec<f64>,
    pub probes: usize,
}

/// Checks Delta f <= 0 over a probe set for the given metric. The verdict is
/// numerical at the probes, not a proof.
pub fn superharmonic_check(
    f: &ScalarField,
    metric: &MetricField,
    probes: &[Point],
    tol: f64,
) -> Result<SuperharmonicReport> {
    if probes.is_empty() {
        return Err(Error::Spec("superharmonic check needs probe points".into()));
    }
    let values = par::map_collect(probes.len(), |i| -> Result<f64> {
        let p = &probes[i];
        let v = f.value(p)?;
        if v <= 0.0 {
            return Err(Error::NonPositiveRatio(v));
        }
        Ok(laplace_beltrami(metric, f, p)? / (1.0 + v.abs()))
    });
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    let mut argmax = 0;
    let mut argmin = 0;
    for (i, v) in values.into_iter().enumerate() {
        let v = v?;
        if v > max {
            max = v;
            argmax = i;
        }
        if v < min {
            min = v;
            argmin = i;
        }
    }
    let verdict = if max <= tol {
        if min < -tol {
            SuperharmonicVerdict::StrictSomewhere
        } else {
            SuperharmonicVerdict::Superharmonic
        }
    } else {
        SuperharmonicVerdict::Violated
    };
    Ok(SuperharmonicReport {
        verdict,
        max_normalized: max,
        argmax: probes[argmax].coords().to_vec(),
        min_normalized: min,
        argmin: probes[argmin].coords().to_vec(),
        probes: probes.len(),
    })
}

/// A reproducible smooth positive test prior `1 + eps * sum_j alpha_j bump_j`,
/// built from Gaussian bumps in boundary-respecting coordinates. Carries
/// analytic gradient and Hessian.
pub fn bump_prior(pair: &ModelPair, seed: u64, eps: f64) -> Result<PriorSpec> {
    use rand::Rng;
    use rand::SeedableRng;
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::Range(format!("bump amplitude must be in (0, 0.5], got {eps}")));
    }
    let d = pair.dim();
    let log_mask: Vec<bool> = match pair.family() {
        Family::LocationScale(_) => vec![false, true],
        Family::Poisson(_) => vec![true; d],
        _ => vec![false; d],
    };
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let n_bumps = 3;
    let mut centers = Vec::new();
    let mut widths = Vec::new();
    let mut amps = Vec::new();
    for _ in 0..n_bumps {
        centers.push((0..d).map(|_| rng.random_range(-0.8..0.8)).collect::<Vec<f64>>());
        widths.push((0..d).map(|_| rng.random_range(0.6..1.6)).collect::<Vec<f64>>());
        amps.push(rng.random_range(-1.0..1.0));
    }
    let norm: f64 = amps.iter().map(|a: &f64| a.abs()).sum();
    for a in &mut amps {
        *a *= eps / norm.max(1e-12);
    }

    let mask_eval = log_mask.clone();
    let mask_grad = log_mask.clone();
    let mask_hess = log_mask;
    let (c_e, w_e, a_e) = (centers.clone(), widths.clone(), amps.clone());
    let (c_g, w_g, a_g) = (centers.clone(), widths.clone(), amps.clone());
    let (c_h, w_h, a_h) = (centers, widths, amps);

    // z_i = log(theta_i) on boundary-constrained coordinates, else theta_i
    let to_z = |th: &[f64], mask: &[bool]| -> Vec<f64> {
        th.iter()
            .zip(mask.iter())
            .map(|(&v, &log)| if log { v.ln() } else { v })
            .collect()
    };
    let bump = |z: &[f64], c: &[f64], w: &[f64]| -> f64 {
        let q: f64 = z
            .iter()
            .zip(c.iter())
            .zip(w.iter())
            .map(|((&zi, &ci), &wi)| ((zi - ci) / wi).powi(2))
            .sum();
        (-0.5 * q).exp()
    };

    let eval = move |th: &[f64]| -> f64 {
        let z = to_z(th, &mask_eval);
        1.0 + c_e
            .iter()
            .zip(w_e.iter())
            .zip(a_e.iter())
            .map(|((c, w), &a)| a * bump(&z, c, w))
            .sum::<f64>()
    };
    let grad = move |th: &[f64]| -> Vec<f64> {
        let z = to_z(th, &mask_grad);
        let mut g = vec![0.0; th.len()];
        for ((c, w), &a) in c_g.iter().zip(w_g.iter()).zip(a_g.iter()) {
            let b = a * bump(&z, c, w);
            for i in 0..th.len() {
                // d/d theta_i = (dz_i/d theta_i) d/d z_i
                let dz = if mask_grad[i] { 1.0 / th[i] } else { 1.0 };
                g[i] += b * (-(z[i] - c[i]) / (w[i] * w[i])) * dz;
            }
        }
        g
    };
    let hess = move |th: &[f64]| -> DMatrix<f64> {
        let d = th.len();
        let z = to_z(th, &mask_hess);
        let mut h = DMatrix::zeros(d, d);
        for ((c, w), &a) in c_h.iter().zip(w_h.iter()).zip(a_h.iter()) {
            let b = a * bump(&z, c, w);
            let u: Vec<f64> = (0..d).map(|i| -(z[i] - c[i]) / (w[i] * w[i])).collect();
            for i in 0..d {
                let dzi = if mask_hess[i] { 1.0 / th[i] } else { 1.0 };
                for j in 0..d {
                    let dzj = if mask_hess[j] { 1.0 / th[j] } else { 1.0 };
                    // d^2/dz_i dz_j of the bump
                    let mut v = b * u[i] * u[j];
                    if i == j {
                        v -= b / (w[i] * w[i]);
                    }
                    h[(i, j)] += v * dzi * dzj;
                }
                if mask_hess[i] {
                    // curvature of the z(theta) map: d^2 z/d theta^2 = -1/theta^2
                    h[(i, i)] += b * u[i] * (-1.0 / (th[i] * th[i]));
                }
            }
        }
        h
    };

    let domain = pair.domain().clone();
    let ratio = ScalarField::new(d, domain, eval)
        .with_gradient(grad)
        .with_hessian(hess);
    Ok(PriorSpec::new(format!("bump(seed={seed})"), ratio))
}
