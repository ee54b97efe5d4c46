//! Dense rank-3 arrays used for connection coefficients and skewness tensors.

use nalgebra::DMatrix;

/// A dense `d x d x d` array of `f64`, indexed `(i, j, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Tensor3 {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    t.set(i, j, k, f(i, j, k));
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.dim + j) * self.dim + k] = v;
    }

    /// Contracts the last index with a matrix: `out_{ij}^k = sum_l t_{ijl} m_{lk}`.
    ///
    /// Raising the last index of lower-index connection coefficients with an
    /// inverse metric is the main use.
    pub fn raise_last(&self, m: &DMatrix<f64>) -> Tensor3 {
        let d = self.dim;
        Tensor3::from_fn(d, |i, j, k| {
            (0..d).map(|l| self.get(i, j, l) * m[(l, k)]).sum()
        })
    }

    /// Trace over the first and (raised) last slot: `out_k = sum_i t_{ki}{}^i`.
    ///
    /// Expects a tensor whose last index has already been raised.
    pub fn trace_mixed(&self) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|k| (0..d).map(|i| self.get(k, i, i)).sum())
            .collect()
    }

    /// Largest deviation from full symmetry over all index permutations.
    pub fn asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let v = self.get(i, j, k);
                    for w in [
                        self.get(i, k, j),
                        self.get(j, i, k),
                        self.get(j, k, i),
                        self.get(k, i, j),
                        self.get(k, j, i),
                    ] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest deviation from symmetry in the first two indices.
    pub fn asymmetry_first_pair(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    worst = worst.max((self.get(i, j, k) - self.get(j, i, k)).abs());
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Add for &Tensor3 {
    type Output = Tensor3;
    fn add(self, rhs: &Tensor3) -> Tensor3 {
        assert_eq!(self.dim, rhs.dim);
        Tensor3 {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(rhs.data.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl std::ops::Sub for &Tensor3 {
    type Output = Tensor3;
    fn sub(self, rhs: &Tensor3) -> Tensor3 {
        assert_eq!(self.dim, rhs.dim);
        Tensor3 {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(rhs.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl std::ops::Mul<f64> for &Tensor3 {
    type Output = Tensor3;
    fn mul(self, rhs: f64) -> Tensor3 {
        Tensor3 {
            dim: self.dim,
            data: self.data.iter().map(|a| a * rhs).collect(),
        }
    }
}
