//! Finite-sample Monte Carlo estimation of expected Kullback–Leibler risk.
//!
//! The design is paired throughout: every prior's predictive density is
//! evaluated on the same simulated datasets, so risk differences are
//! estimated with common random numbers and their standard errors shrink far
//! below those of independent runs. Replicates draw from per-index random
//! substreams derived from the master seed before dispatch, so reports are
//! bit-identical for any worker count.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::models::{Family, ModelPair};
use crate::par;
use crate::predictive::{
    gaussian_kl, normal_predictive_uniform, poisson_marginal_cutoffs, poisson_predictive_p_n,
    poisson_predictive_s_n, quadrature_predictive_density, PoissonConjugate, PredictiveDensity,
    QuadratureConfig,
};
use crate::priors::{PriorKind, PriorSpec};
use crate::quad;
use crate::risk_asym;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// How the inner expectation over the target variable is evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KlScheme {
    /// Closed forms and exact truncated sums only; errors where unavailable.
    Exact,
    /// Deterministic quadrature over continuous target spaces, exact sums
    /// over count spaces.
    Quadrature,
    /// Sample average over draws from the true target density.
    MonteCarlo { draws: usize, seed: u64 },
}

/// One Monte Carlo experiment: fixed truth, sample size and replicate budget.
#[derive(Clone, Debug)]
pub struct SimPlan {
    pub theta: Vec<f64>,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub kl: KlScheme,
    pub quadrature: QuadratureConfig,
}

impl SimPlan {
    pub fn new(theta: Vec<f64>, n: usize, replicates: usize, seed: u64) -> Self {
        SimPlan {
            theta,
            n,
            replicates,
            seed,
            kl: KlScheme::Quadrature,
            quadrature: QuadratureConfig::default(),
        }
    }

    fn validate(&self, pair: &ModelPair) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Spec("at least 2 replicates required".into()));
        }
        if self.n < 1 {
            return Err(Error::Spec("sample size must be at least 1".into()));
        }
        pair.domain().require(&self.theta)
    }
}

/// Mean risk of one prior with its standard error.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PriorRisk {
    pub prior: String,
    pub mean: f64,
    pub se: f64,
}

/// Paired risk difference of one prior against the baseline prior.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PairedDifference {
    pub prior: String,
    pub mean: f64,
    pub se: f64,
    pub n2_mean: f64,
    pub n2_se: f64,
    pub asymptote: f64,
}

/// Full result of a Monte Carlo risk experiment. The baseline prior is the
/// last of the plan's prior list.
#[derive(Clone, Debug, serde::Serialize)]
pub struct RiskReport {
    pub pair: String,
    pub theta: Vec<f64>,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub baseline: String,
    pub risks: Vec<PriorRisk>,
    pub differences: Vec<PairedDifference>,
    pub wall_clock_secs: f64,
}

fn is_constant_ratio(pair: &ModelPair, prior: &PriorSpec) -> bool {
    if prior.kind() == PriorKind::VolumeElement {
        return true;
    }
    let probes = match crate::probes::probe_points(pair, 3, 1, 0.5) {
        Ok(p) => p,
        Err(_) => return false,
    };
    let vals: Vec<f64> = probes
        .iter()
        .filter_map(|p| prior.ratio_at(p).ok())
        .collect();
    vals.len() == 3 && vals.iter().all(|v| (v - vals[0]).abs() <= 1e-12 * vals[0].abs())
}

fn column_sums(data: &[Vec<f64>]) -> Vec<f64> {
    let d = data[0].len();
    let mut out = vec![0.0; d];
    for obs in data {
        for i in 0..d {
            out[i] += obs[i];
        }
    }
    out
}

/// Builds the predictive density of one prior for one dataset, choosing a
/// closed form whenever the (family, prior) combination has one.
pub fn build_predictive(
    pair: &ModelPair,
    prior: &PriorSpec,
    data: &[Vec<f64>],
    cfg: &QuadratureConfig,
) -> Result<PredictiveDensity> {
    match pair.family() {
        Family::Normal(spec) => {
            if is_constant_ratio(pair, prior) {
                let sums = column_sums(data);
                let n = data.len() as f64;
                let xbar: Vec<f64> = sums.iter().map(|v| v / n).collect();
                normal_predictive_uniform(spec, data.len(), &xbar)
            } else if pair.dim() <= 2 {
                quadrature_predictive_density(pair, prior, data, cfg)
            } else {
                Err(Error::Spec(format!(
                    "no closed form for prior '{}' on a {}-dimensional normal pair and quadrature only covers d <= 2",
                    prior.name(),
                    pair.dim()
                )))
            }
        }
        Family::Poisson(spec) => match prior.kind() {
            PriorKind::VolumeElement => {
                poisson_predictive_p_n(spec, &column_sums(data), data.len())
            }
            PriorKind::Stein => poisson_predictive_s_n(spec, &column_sums(data), data.len()),
            _ if pair.dim() <= 2 => quadrature_predictive_density(pair, prior, data, cfg),
            _ => Err(Error::Spec(format!(
                "no closed form for prior '{}' on a {}-dimensional Poisson pair",
                prior.name(),
                pair.dim()
            ))),
        },
        _ => quadrature_predictive_density(pair, prior, data, cfg),
    }
}

const LS_Z_RANGE: f64 = 10.0;
const LS_PANELS: usize = 24;
const LS_NODES: usize = 12;

fn kl_continuous_scalar(pair: &ModelPair, theta: &[f64], pred: &PredictiveDensity) -> f64 {
    // composite Gauss–Legendre panels over the standardized target variable
    let (mu, sigma) = match pair.family() {
        Family::LocationScale(_) => (theta[0], theta[1]),
        _ => (theta[0], 1.0),
    };
    let rule = quad::gauss_legendre(LS_NODES);
    let width = 2.0 * LS_Z_RANGE / LS_PANELS as f64;
    let mut acc = 0.0;
    for panel in 0..LS_PANELS {
        let a = -LS_Z_RANGE + panel as f64 * width;
        let half = 0.5 * width;
        let mid = a + half;
        for (&t, &w) in rule.0.iter().zip(rule.1.iter()) {
            let z = mid + half * t;
            let y = [mu + sigma * z];
            let log_true = pair.y_model().log_density(&y, theta);
            let p_true = log_true.exp();
            if p_true == 0.0 {
                continue;
            }
            acc += w * half * sigma * p_true * (log_true - pred.log_density(&y));
        }
    }
    acc
}

fn poisson_true_cutoffs(spec: &crate::models::PoissonPairSpec, theta: &[f64], tail: f64) -> Vec<usize> {
    spec.s
        .iter()
        .zip(theta.iter())
        .map(|(&si, &lam)| {
            let mean = si * lam;
            let mut cum = 0.0;
            let mut y = 0usize;
            loop {
                cum += crate::models::poisson::log_poisson_pmf(y as f64, mean).exp();
                if 1.0 - cum <= tail || y > 100_000 {
                    return y + 3;
                }
                y += 1;
            }
        })
        .collect()
}

fn kl_poisson(
    spec: &crate::models::PoissonPairSpec,
    pair: &ModelPair,
    theta: &[f64],
    pred: &PredictiveDensity,
) -> Result<f64> {
    // product-form fast path: both the truth and the predictive factorize
    if let PredictiveDensity::PoissonConjugate(conj) = pred {
        return Ok(kl_poisson_product(spec, theta, conj));
    }
    let cutoffs = poisson_true_cutoffs(spec, theta, 1e-13);
    let d = spec.dim();
    let mut acc = 0.0;
    let mut covered_mass = 1.0;
    // per-coordinate covered mass for the truncation bound
    for (i, &cut) in cutoffs.iter().enumerate() {
        let mean = spec.s[i] * theta[i];
        let mut cum = 0.0;
        for y in 0..=cut {
            cum += crate::models::poisson::log_poisson_pmf(y as f64, mean).exp();
        }
        covered_mass *= cum;
    }
    let mut idx = vec![0usize; d];
    'sweep: loop {
        let y: Vec<f64> = idx.iter().map(|&v| v as f64).collect();
        let log_true = pair.y_model().log_density(&y, theta);
        let p_true = log_true.exp();
        if p_true > 0.0 {
            acc += p_true * (log_true - pred.log_density(&y));
        }
        let mut axis = 0;
        loop {
            if axis == d {
                break 'sweep;
            }
            idx[axis] += 1;
            if idx[axis] <= cutoffs[axis] {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
    // 50 nats bounds |log true - log pred| over the discarded tail
    let tail_bound = (1.0 - covered_mass).max(0.0) * 50.0;
    if tail_bound > 1e-8 * (acc.abs() + 1e-6) {
        return Err(Error::Truncation(format!(
            "tail bound {tail_bound:.3e} too large for KL {acc:.3e}"
        )));
    }
    Ok(acc)
}

fn kl_poisson_product(
    spec: &crate::models::PoissonPairSpec,
    theta: &[f64],
    conj: &PoissonConjugate,
) -> f64 {
    let pred_cuts = poisson_marginal_cutoffs(conj, 1e-14);
    let mut acc = 0.0;
    for i in 0..spec.dim() {
        let mean = spec.s[i] * theta[i];
        let mut cut = pred_cuts[i];
        // also cover the truth's own tail
        let mut cum = 0.0;
        let mut y = 0usize;
        loop {
            cum += crate::models::poisson::log_poisson_pmf(y as f64, mean).exp();
            if 1.0 - cum <= 1e-14 || y > 100_000 {
                break;
            }
            y += 1;
        }
        cut = cut.max(y) + 3;
        for yi in 0..=cut {
            let log_true = crate::models::poisson::log_poisson_pmf(yi as f64, mean);
            let p_true = log_true.exp();
            if p_true > 0.0 {
                acc += p_true * (log_true - conj.log_density_coord(i, yi as f64));
            }
        }
    }
    acc
}

/// Expected Kullback–Leibler divergence from the true target density at
/// `theta` to a predictive density.
pub fn kl_divergence(
    pair: &ModelPair,
    theta: &Point,
    pred: &PredictiveDensity,
    scheme: &KlScheme,
) -> Result<f64> {
    pair.domain().require(theta.coords())?;
    let th = theta.coords();
    if let KlScheme::MonteCarlo { draws, seed } = scheme {
        if *draws == 0 {
            return Err(Error::Spec("Monte Carlo KL needs at least one draw".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(*seed);
        let mut acc = 0.0;
        for _ in 0..*draws {
            let y = pair.y_model().sample(th, &mut rng);
            acc += pair.y_model().log_density(&y, th) - pred.log_density(&y);
        }
        return Ok(acc / *draws as f64);
    }
    match (pair.family(), pred) {
        (Family::Normal(spec), PredictiveDensity::Gaussian(g)) => {
            let mean_p = DVector::from_row_slice(th);
            gaussian_kl(&mean_p, &spec.sigma_tilde, &g.mean, &g.cov)
        }
        (Family::Normal(spec), p) => {
            if *scheme == KlScheme::Exact {
                return Err(Error::Spec(
                    "exact KL unavailable for a non-conjugate normal predictive".into(),
                ));
            }
            if spec.dim() != 1 {
                return Err(Error::Spec(
                    "quadrature KL for normal pairs covers d = 1 only".into(),
                ));
            }
            Ok(kl_continuous_scalar_gauss(spec, th, p))
        }
        (Family::Poisson(spec), p) => kl_poisson(spec, pair, th, p),
        (Family::LocationScale(_), p) => {
            if *scheme == KlScheme::Exact {
                return Err(Error::Spec(
                    "exact KL unavailable for location-scale pairs; use quadrature".into(),
                ));
            }
            Ok(kl_continuous_scalar(pair, th, p))
        }
        (Family::Custom(_), _) => Err(Error::Spec(
            "KL evaluation for custom pairs requires the Monte Carlo scheme".into(),
        )),
    }
}

fn kl_continuous_scalar_gauss(
    spec: &crate::models::NormalPairSpec,
    theta: &[f64],
    pred: &PredictiveDensity,
) -> f64 {
    let sd = spec.sigma_tilde[(0, 0)].sqrt();
    let rule = quad::gauss_legendre(LS_NODES);
    let width = 2.0 * LS_Z_RANGE / LS_PANELS as f64;
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * spec.sigma_tilde[(0, 0)]).ln();
    let mut acc = 0.0;
    for panel in 0..LS_PANELS {
        let a = -LS_Z_RANGE + panel as f64 * width;
        let half = 0.5 * width;
        let mid = a + half;
        for (&t, &w) in rule.0.iter().zip(rule.1.iter()) {
            let z = mid + half * t;
            let y = [theta[0] + sd * z];
            let log_true = log_norm - 0.5 * z * z;
            acc += w * half * sd * log_true.exp() * (log_true - pred.log_density(&y));
        }
    }
    acc
}

/// Runs the paired Monte Carlo experiment. The last prior is the baseline
/// for all reported differences.
pub fn mc_risk(pair: &ModelPair, priors: &[PriorSpec], plan: &SimPlan) -> Result<RiskReport> {
    plan.validate(pair)?;
    if priors.is_empty() {
        return Err(Error::Spec("at least one prior required".into()));
    }
    let start = std::time::Instant::now();
    let theta = Point::from_slice(&plan.theta)?;
    let n_priors = priors.len();

    let per_replicate = par::map_collect(plan.replicates, |r| -> Result<Vec<f64>> {
        let mut rng = ChaCha12Rng::seed_from_u64(plan.seed);
        rng.set_stream(r as u64 + 1);
        let data: Vec<Vec<f64>> = (0..plan.n)
            .map(|_| pair.x_model().sample(&plan.theta, &mut rng))
            .collect();
        let mut kls = Vec::with_capacity(n_priors);
        for prior in priors {
            let pred = build_predictive(pair, prior, &data, &plan.quadrature)
                .map_err(|e| Error::Internal(format!("replicate {r}: {e}")))?;
            let scheme = match plan.kl {
                KlScheme::MonteCarlo { draws, seed } => KlScheme::MonteCarlo {
                    draws,
                    // independent inner stream per replicate
                    seed: seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(r as u64 + 1)),
                },
                other => other,
            };
            let kl = kl_divergence(pair, &theta, &pred, &scheme)
                .map_err(|e| Error::Internal(format!("replicate {r}: {e}")))?;
            if kl < -1e-10 {
                return Err(Error::Internal(format!(
                    "replicate {r}: negative KL {kl:.3e} for prior {}",
                    prior.name()
                )));
            }
            kls.push(kl);
        }
        Ok(kls)
    });

    let mut rows = Vec::with_capacity(plan.replicates);
    for row in per_replicate {
        rows.push(row?);
    }

    let r = plan.replicates as f64;
    let mean_se = |vals: &dyn Fn(usize) -> f64| -> (f64, f64) {
        let mut sum = 0.0;
        for i in 0..plan.replicates {
            sum += vals(i);
        }
        let mean = sum / r;
        let mut var = 0.0;
        for i in 0..plan.replicates {
            var += (vals(i) - mean).powi(2);
        }
        (mean, (var / (r - 1.0) / r).sqrt())
    };

    let risks: Vec<PriorRisk> = (0..n_priors)
        .map(|k| {
            let (mean, se) = mean_se(&|i| rows[i][k]);
            PriorRisk {
                prior: priors[k].name().to_string(),
                mean,
                se,
            }
        })
        .collect();

    let baseline_idx = n_priors - 1;
    let base_asym = risk_asym::risk_diff_laplacian(pair, &priors[baseline_idx], &theta)?;
    let n2 = (plan.n as f64) * (plan.n as f64);
    let differences: Vec<PairedDifference> = (0..n_priors - 1)
        .map(|k| -> Result<PairedDifference> {
            let (mean, se) = mean_se(&|i| rows[i][k] - rows[i][baseline_idx]);
            let asym = risk_asym::risk_diff_laplacian(pair, &priors[k], &theta)? - base_asym;
            Ok(PairedDifference {
                prior: priors[k].name().to_string(),
                mean,
                se,
                n2_mean: n2 * mean,
                n2_se: n2 * se,
                asymptote: asym,
            })
        })
        .collect::<Result<_>>()?;

    Ok(RiskReport {
        pair: pair.label().to_string(),
        theta: plan.theta.clone(),
        n: plan.n,
        replicates: plan.replicates,
        seed: plan.seed,
        baseline: priors[baseline_idx].name().to_string(),
        risks,
        differences,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// One row of a convergence table.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub differences: Vec<PairedDifference>,
    /// n times the baseline prior's mean risk, with its scaled standard error.
    pub n_times_baseline_risk: f64,
    pub n_times_baseline_se: f64,
    /// The prior-independent limit of n times the risk: half the trace of
    /// g^{-1} gt.
    pub half_trace: f64,
}

/// Sweeps the sample size and reports squared-size-scaled differences next to
/// their asymptotic values. Each row derives an independent master seed from
/// the plan seed and the row index.
pub fn asymptote_convergence(
    pair: &ModelPair,
    priors: &[PriorSpec],
    plan: &SimPlan,
    n_list: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Spec("sample sizes must be strictly increasing".into()));
    }
    let theta = Point::from_slice(&plan.theta)?;
    let mut rows = Vec::with_capacity(n_list.len());
    for (i, &n) in n_list.iter().enumerate() {
        let mut row_plan = plan.clone();
        row_plan.n = n;
        row_plan.seed = plan
            .seed
            .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1));
        let report = mc_risk(pair, priors, &row_plan)?;
        let base = report.risks.last().expect("at least one prior");
        rows.push(ConvergenceRow {
            n,
            differences: report.differences.clone(),
            n_times_baseline_risk: n as f64 * base.mean,
            n_times_baseline_se: n as f64 * base.se,
            half_trace: risk_asym::leading_risk_term(pair, &theta, 1)?,
        });
    }
    Ok(rows)
}
