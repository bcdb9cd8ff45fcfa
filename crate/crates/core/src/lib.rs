//! Norm-based Bregman density power divergences.
//!
//! The family is generated by a strictly increasing convex function `φ_γ`
//! applied to the `L_{1+γ}` norm of a density. Particular generators recover
//! the density power divergence (`φ(z) = z^{1+γ}`), the γ-divergence
//! (`φ(z) = z`), the Bregman–Hölder and bridge divergences, and mixtures of
//! them. Every member reduces to M-estimation, so the crate also provides the
//! estimating function `ψ`, a root-finding estimator, and influence analysis.
//!
//! Modules:
//! - [`quadrature`]: adaptive Gauss–Kronrod integration
//! - [`phi`]: generators and their validation
//! - [`density`]: parametric models, scores, powered moments, samplers
//! - [`divergence`]: every cross-entropy/divergence and the reductions between them
//! - [`estimation`]: empirical loss, `ψ`, and the M-estimation solver
//! - [`robustness`]: influence curves and contamination experiments
//! - [`verify`]: the identity-verification suite

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod density;
pub mod divergence;
pub mod error;
pub mod estimation;
pub mod phi;
pub mod quadrature;
pub mod robustness;
pub mod verify;

pub use density::{DensityModel, GridDensity, ModelFamily, PowerMoments};
pub use error::{Error, Result};
pub use phi::{PhiKind, PhiSpec};
pub use quadrature::{integrate, QuadConfig, Quadrature};

/// Below this `γ` the analytic `γ = 0` (Shannon/KL) branches are used.
pub const GAMMA_SWITCH: f64 = 1e-9;
