//! Information geometry for Bayesian prediction when the observed data and
//! the quantity to be predicted follow different parametric families.
//!
//! The crate provides:
//!
//! - [`geometry`]: metric fields, Riemannian connections, Laplace–Beltrami
//!   operators and coordinate charts over a shared parameter space;
//! - [`models`]: paired parametric families (normal, location-scale, Poisson)
//!   with analytic Fisher metrics, skewness tensors and dual connections,
//!   plus numeric estimators for user-supplied densities;
//! - [`priors`]: the volume-element prior of the predictive metric, the named
//!   shrinkage families, and a pointwise superharmonicity checker;
//! - [`risk_asym`]: the asymptotic Kullback–Leibler risk difference between
//!   Bayesian predictive densities, by two independent routes that must agree;
//! - [`predictive`]: exact and quadrature Bayesian predictive densities;
//! - [`simulate`]: paired Monte Carlo estimation of finite-sample risk with
//!   deterministic per-replicate random streams.
//!
//! With the default `parallel` feature, replicate loops and probe sweeps run
//! on rayon; without it the same code paths run sequentially. Results are
//! bit-identical either way.

pub mod error;
pub mod fd;
pub mod geometry;
pub mod models;
pub mod predictive;
pub mod priors;
pub mod probes;
pub mod quad;
pub mod risk_asym;
pub mod simulate;
pub mod tensor;

pub use error::{Error, Result};
pub use geometry::{Chart, Domain, MetricField, Point, Provenance, ScalarField};
pub use models::{Family, Model, ModelPair, TensorMode, TensorProvider};
pub use priors::PriorSpec;
pub use tensor::Tensor3;

/// Ordered map over `0..n`, parallel when the `parallel` feature is enabled.
///
/// The output order is always the index order, so reductions over the result
/// are independent of the worker count.
pub(crate) mod par {
    #[cfg(feature = "parallel")]
    pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }

    #[cfg(not(feature = "parallel"))]
    pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
    where
        F: Fn(usize) -> T,
    {
        (0..n).map(f).collect()
    }
}
