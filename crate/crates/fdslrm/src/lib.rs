//! Estimation of variance components in time-series regression models with a
//! finite discrete spectrum: deterministic trigonometric/polynomial trend,
//! random harmonic components and white noise.
//!
//! The crate provides
//!
//! * design realization over t = 1..n with structural orthogonality and rank
//!   checks ([`model`]),
//! * the O(n) projector/Gram/Schur machinery shared by the estimators
//!   ([`projection`]),
//! * BLUE/BLUP computation through Henderson's mixed model equations in
//!   their singular-D-safe form ([`mme`]),
//! * natural estimators, projection (M)DOOLSE, non-negative (M)DOOLSE via an
//!   analytic KKT active-set scan, and ML/REML estimation through its
//!   equivalence with the non-negative fits ([`estimators`]),
//! * the two-stage EBLUP-NE estimator and exact moment characteristics
//!   ([`eblupne`]),
//! * a reproducible Gaussian sampler for Monte Carlo checks ([`simulate`]).
//!
//! All numerics are generic over the scalar type through [`Scalar`]
//! (`f32`/`f64`); the aliases below fix the common `f64` instantiation.

pub mod error;
pub mod linalg;
pub mod model;
pub mod projection;
pub mod mme;
pub mod estimators;
pub mod eblupne;
pub mod simulate;

mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use eblupne::{
    blup_ne_moments, eblup_ne, shrinkage_factors, EblupNeResult, InitialMethod, MomentEstimator,
    MomentSummary,
};
pub use estimators::{
    d_to_nu, estimate_ne, estimate_nn_doolse, estimate_projection, estimate_remle, loglik,
    nu_to_d, DualVariables, EstimationResult, KktSolution, LikelihoodVariant, Method,
    RemleEstimate, UnconstrainedEstimate, VarianceComponents,
};
pub use linalg::Mat;
pub use mme::{lemma1_identities, solve_mme, solve_mme_cached, BlupResult};
pub use model::{
    parse_model_config, periodogram, sort_by_power, DesignSet, Frequency, ModelConfig, ModelSpec,
    PeriodogramOrdinate, TermSpec,
};
pub use projection::{
    build_projection, gram_system, schur_matrices, DoolseVariant, GramSystem, ProjectionCache,
    SchurMatrices,
};
pub use simulate::{sampler, Replicate, Sampler, SimulationConfig, RNG_ALGORITHM};

/// `f64` instantiations of the core types.
pub type DesignSet64 = DesignSet<f64>;
pub type ProjectionCache64 = ProjectionCache<f64>;
pub type GramSystem64 = GramSystem<f64>;
pub type VarianceComponents64 = VarianceComponents<f64>;
pub type KktSolution64 = KktSolution<f64>;
pub type BlupResult64 = BlupResult<f64>;
pub type EblupNeResult64 = EblupNeResult<f64>;
pub type MomentSummary64 = MomentSummary<f64>;
pub type Mat64 = Mat<f64>;

/// `f32` instantiations for the main entry points.
pub type DesignSet32 = DesignSet<f32>;
pub type VarianceComponents32 = VarianceComponents<f32>;
