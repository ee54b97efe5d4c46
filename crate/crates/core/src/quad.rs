//! Quadrature backends: Gauss–Legendre and Gauss–Hermite rules computed by
//! Golub–Welsch, plus an adaptive bisection scheme with an embedded low/high
//! order pair for the error estimate. Improper integrals are mapped to finite
//! intervals first: `u = t/(1-t)` for the half line and `x = t/(1-t^2)` for
//! the whole line.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of an n-point rule on its natural interval.
pub type Rule = Arc<(Vec<f64>, Vec<f64>)>;

fn golub_welsch(n: usize, beta: impl Fn(usize) -> f64, mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = beta(k);
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let w = mu0 * eig.eigenvectors[(0, i)].powi(2);
            (node, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn rule_cache() -> &'static Mutex<HashMap<(u8, usize), Rule>> {
    static CACHE: OnceLock<Mutex<HashMap<(u8, usize), Rule>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    let mut cache = rule_cache().lock().unwrap();
    cache
        .entry((0, n))
        .or_insert_with(|| {
            Arc::new(golub_welsch(
                n,
                |k| {
                    let k = k as f64;
                    k / (4.0 * k * k - 1.0).sqrt()
                },
                2.0,
            ))
        })
        .clone()
}

/// n-point Gauss–Hermite rule for the weight exp(-x^2) on the whole line.
pub fn gauss_hermite(n: usize) -> Rule {
    let mut cache = rule_cache().lock().unwrap();
    cache
        .entry((1, n))
        .or_insert_with(|| {
            Arc::new(golub_welsch(
                n,
                |k| (k as f64 / 2.0).sqrt(),
                std::f64::consts::PI.sqrt(),
            ))
        })
        .clone()
}

/// Integrates f on [a, b] with a fixed n-point Gauss–Legendre rule.
pub fn fixed_gl(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let rule = gauss_legendre(n);
    let c = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    rule.0
        .iter()
        .zip(rule.1.iter())
        .map(|(&x, &w)| w * f(m + c * x))
        .sum::<f64>()
        * c
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

fn eval_panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Panel {
    let lo = fixed_gl(f, a, b, 10);
    let hi = fixed_gl(f, a, b, 21);
    Panel {
        a,
        b,
        value: hi,
        err: (hi - lo).abs(),
    }
}

/// Adaptive integration of f over [a, b].
///
/// Bisects the panel with the worst error estimate until the summed estimate
/// meets `max(abs_tol, rel_tol * |integral|)` or the panel budget is spent.
pub fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    const MAX_PANELS: usize = 4000;
    let mut panels = vec![eval_panel(f, a, b)];
    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.err).sum();
        if !total.is_finite() {
            return Err(Error::Integration(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        // low/high order estimates plateau at roundoff; don't chase below it
        let roundoff: f64 = 100.0 * f64::EPSILON * panels.iter().map(|p| p.value.abs()).sum::<f64>();
        if err <= abs_tol.max(rel_tol * total.abs()).max(roundoff) {
            return Ok(total);
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::Integration(format!(
                "adaptive refinement stalled on [{a}, {b}]: error estimate {err:.3e} after {MAX_PANELS} panels"
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .map(|(i, _)| i)
            .unwrap();
        let Panel { a: pa, b: pb, .. } = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            return Err(Error::Integration(format!(
                "panel [{pa}, {pb}] cannot be bisected further"
            )));
        }
        panels.push(eval_panel(f, pa, mid));
        panels.push(eval_panel(f, mid, pb));
    }
}

/// Adaptive integral of f over the whole real line via x = t/(1-t^2).
pub fn real_line(f: &dyn Fn(f64) -> f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let g = move |t: f64| {
        let s = 1.0 - t * t;
        let x = t / s;
        let jac = (1.0 + t * t) / (s * s);
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v * jac
        }
    };
    adaptive(&g, -1.0 + 1e-15, 1.0 - 1e-15, abs_tol, rel_tol)
}

/// Adaptive integral of f over (0, inf) via u = t/(1-t).
pub fn half_line(f: &dyn Fn(f64) -> f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let g = move |t: f64| {
        let s = 1.0 - t;
        let u = t / s;
        let jac = 1.0 / (s * s);
        let v = f(u);
        if v == 0.0 {
            0.0
        } else {
            v * jac
        }
    };
    adaptive(&g, 1e-300, 1.0 - 1e-15, abs_tol, rel_tol)
}
