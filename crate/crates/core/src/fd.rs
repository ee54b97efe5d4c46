//! Central finite differences with per-coordinate adaptive steps.
//!
//! Step sizes follow the usual rounding/truncation balance: `eps^(1/3)` scaled
//! steps for first derivatives, `eps^(1/4)` for second derivatives, each
//! relative to `max(|x_i|, scale_i)`. Stencils that would leave the admitted
//! domain shrink at most twice before the point is rejected, so results near a
//! boundary are either accurate or an error, never silently one-sided.

use crate::error::{Error, Result};
use crate::geometry::Domain;
use nalgebra::DMatrix;

/// Per-coordinate scales for step selection. Defaults to 1 in each coordinate.
#[derive(Clone, Debug)]
pub struct FdScales(pub Vec<f64>);

impl FdScales {
    pub fn unit(dim: usize) -> Self {
        FdScales(vec![1.0; dim])
    }

    fn scale(&self, i: usize) -> f64 {
        self.0.get(i).copied().unwrap_or(1.0)
    }
}

fn grad_step(x: f64, scale: f64) -> f64 {
    f64::EPSILON.powf(1.0 / 3.0) * x.abs().max(scale)
}

fn hess_step(x: f64, scale: f64) -> f64 {
    f64::EPSILON.powf(1.0 / 4.0) * x.abs().max(scale)
}

/// Finds the largest step in {h, h/2, h/4} whose full stencil stays inside the
/// domain, or rejects the point.
fn admissible_step(
    x: &[f64],
    coord: usize,
    h0: f64,
    domain: &Domain,
    second: Option<usize>,
) -> Result<f64> {
    let mut h = h0;
    'outer: for _ in 0..3 {
        let mut probe = x.to_vec();
        let offsets: &[f64] = &[-1.0, 1.0];
        for &si in offsets {
            probe[coord] = x[coord] + si * h;
            if let Some(j) = second {
                for &sj in offsets {
                    let base_j = probe[j];
                    probe[j] = x[j] + sj * h0;
                    let ok = domain.contains(&probe);
                    probe[j] = base_j;
                    if !ok {
                        h *= 0.5;
                        continue 'outer;
                    }
                }
            } else if !domain.contains(&probe) {
                h *= 0.5;
                continue 'outer;
            }
        }
        if (x[coord] + h) - x[coord] == 0.0 {
            return Err(Error::Step { coord });
        }
        return Ok(h);
    }
    Err(Error::Domain(format!(
        "coordinate {coord} of {x:?} is within 4 finite-difference steps of the domain boundary"
    )))
}

/// Central-difference gradient of a scalar function.
pub fn gradient(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    scales: &FdScales,
    domain: &Domain,
) -> Result<Vec<f64>> {
    if !domain.contains(x) {
        return Err(Error::Domain(format!("{x:?} not admitted")));
    }
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = admissible_step(x, i, grad_step(x[i], scales.scale(i)), domain, None)?;
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Central-difference Hessian, symmetrized by construction.
pub fn hessian(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    scales: &FdScales,
    domain: &Domain,
) -> Result<DMatrix<f64>> {
    if !domain.contains(x) {
        return Err(Error::Domain(format!("{x:?} not admitted")));
    }
    let d = x.len();
    let f0 = f(x);
    let mut steps = vec![0.0; d];
    for i in 0..d {
        steps[i] = admissible_step(x, i, hess_step(x[i], scales.scale(i)), domain, None)?;
    }
    let mut h = DMatrix::zeros(d, d);
    let mut probe = x.to_vec();
    for i in 0..d {
        probe[i] = x[i] + steps[i];
        let fp = f(&probe);
        probe[i] = x[i] - steps[i];
        let fm = f(&probe);
        probe[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
        for j in (i + 1)..d {
            admissible_step(x, i, steps[i], domain, Some(j))?;
            let mut corner = |si: f64, sj: f64| {
                probe[i] = x[i] + si * steps[i];
                probe[j] = x[j] + sj * steps[j];
                let v = f(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                + corner(-1.0, -1.0))
                / (4.0 * steps[i] * steps[j]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// Jacobian of a vector-valued map by central differences, `out[(r, i)] = d f_r / d x_i`.
pub fn jacobian(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    scales: &FdScales,
    domain: &Domain,
) -> Result<DMatrix<f64>> {
    if !domain.contains(x) {
        return Err(Error::Domain(format!("{x:?} not admitted")));
    }
    let d = x.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut probe = x.to_vec();
    for i in 0..d {
        let h = admissible_step(x, i, grad_step(x[i], scales.scale(i)), domain, None)?;
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        cols.push(
            fp.iter()
                .zip(fm.iter())
                .map(|(p, m)| (p - m) / (2.0 * h))
                .collect(),
        );
    }
    let rows = cols[0].len();
    Ok(DMatrix::from_fn(rows, d, |r, c| cols[c][r]))
}

/// Coordinate derivatives of a matrix-valued field, `out[k][(i, j)] = d m_{ij} / d x_k`.
pub fn matrix_derivatives(
    m: &dyn Fn(&[f64]) -> DMatrix<f64>,
    x: &[f64],
    scales: &FdScales,
    domain: &Domain,
) -> Result<Vec<DMatrix<f64>>> {
    if !domain.contains(x) {
        return Err(Error::Domain(format!("{x:?} not admitted")));
    }
    let d = x.len();
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let h = admissible_step(x, k, grad_step(x[k], scales.scale(k)), domain, None)?;
        probe[k] = x[k] + h;
        let mp = m(&probe);
        probe[k] = x[k] - h;
        let mm = m(&probe);
        probe[k] = x[k];
        out.push((mp - mm) / (2.0 * h));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_gradient_and_hessian() {
        let f = |x: &[f64]| x[0] * x[0];
        let dom = Domain::unconstrained(1);
        let g = gradient(&f, &[3.0], &FdScales::unit(1), &dom).unwrap();
        assert_relative_eq!(g[0], 6.0, max_relative = 1e-9);
        let h = hessian(&f, &[3.0], &FdScales::unit(1), &dom).unwrap();
        assert_relative_eq!(h[(0, 0)], 2.0, max_relative = 1e-6);
    }

    #[test]
    fn log_gradient() {
        let f = |x: &[f64]| x[0].ln();
        let dom = Domain::positive(1, &[0]);
        let g = gradient(&f, &[2.0], &FdScales::unit(1), &dom).unwrap();
        assert_relative_eq!(g[0], 0.5, max_relative = 1e-9);
    }

    #[test]
    fn mixed_partials_symmetric() {
        let f = |x: &[f64]| x[0].powi(3) * x[1] + x[1].sin();
        let dom = Domain::unconstrained(2);
        let h = hessian(&f, &[0.7, -0.3], &FdScales::unit(2), &dom).unwrap();
        assert_eq!(h[(0, 1)], h[(1, 0)]);
        assert_relative_eq!(h[(0, 1)], 3.0 * 0.7f64.powi(2), max_relative = 1e-5);
    }

    #[test]
    fn boundary_point_rejected() {
        let f = |x: &[f64]| x[0].sqrt();
        let dom = Domain::positive(1, &[0]);
        // Within four shrunken steps of zero: must reject, not bias.
        let err = gradient(&f, &[1e-12], &FdScales::unit(1), &dom);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn jacobian_of_linear_map() {
        let f = |x: &[f64]| vec![2.0 * x[0] + x[1], -x[0]];
        let dom = Domain::unconstrained(2);
        let j = jacobian(&f, &[0.3, 0.4], &FdScales::unit(2), &dom).unwrap();
        assert_relative_eq!(j[(0, 0)], 2.0, max_relative = 1e-9);
        assert_relative_eq!(j[(0, 1)], 1.0, max_relative = 1e-9);
        assert_relative_eq!(j[(1, 0)], -1.0, max_relative = 1e-9);
        assert_relative_eq!(j[(1, 1)], 0.0, epsilon = 1e-9);
    }
}
