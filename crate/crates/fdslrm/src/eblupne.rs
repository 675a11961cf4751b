//! The two-stage EBLUP-NE estimator and the exact first/second-order moment
//! characteristics of the BLUP-based natural estimators.
//!
//! Stage one computes an initial estimate of nu by one of the five supported
//! methods; stage two squares the components of the BLUP of the random
//! effects evaluated at that estimate. In orthogonal designs the second stage
//! collapses to the shrinkage identity sigma*_j = rho_j^2 * sigma~_j with
//! rho_j = nu_j |v_j|^2 / (nu_0 + nu_j |v_j|^2).

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_ne, estimate_nn_doolse, estimate_remle, EstimationResult, LikelihoodVariant, Method,
    VarianceComponents,
};
use crate::linalg::{Cholesky, Mat};
use crate::mme::solve_mme_cached;
use crate::model::DesignSet;
use crate::projection::{build_projection, gram_system, schur_matrices, DoolseVariant};
use crate::scalar::Scalar;

/// Stage-one method menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialMethod {
    Ne,
    NnDoolse,
    NnMdoolse,
    Mle,
    Remle,
}

impl InitialMethod {
    pub fn name(&self) -> &'static str {
        match self {
            InitialMethod::Ne => "ne",
            InitialMethod::NnDoolse => "nn-doolse",
            InitialMethod::NnMdoolse => "nn-mdoolse",
            InitialMethod::Mle => "mle",
            InitialMethod::Remle => "remle",
        }
    }
}

/// Result of the two-stage estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct EblupNeResult<F> {
    /// Stage-one estimate with its diagnostics.
    pub initial: EstimationResult<F>,
    /// Final estimate: component 0 is the (unbiased) NE estimate of nu_0,
    /// components 1..l are the squared BLUP coordinates at the initial
    /// estimate.
    pub final_estimate: VarianceComponents<F>,
    /// Shrinkage factors rho_j evaluated at the initial estimate.
    pub rho: Vec<F>,
    /// Set when the initial estimate had nu_0 = 0 and rho was defined by the
    /// continuous limit (1 where nu_j > 0, 0 where nu_j = 0).
    pub rho_at_limit: bool,
}

/// Shrinkage factors rho_j = nu_j |v_j|^2 / (nu_0 + nu_j |v_j|^2) in [0, 1).
///
/// At the boundary nu_0 = 0 the continuous limit is used: 1 for nu_j > 0 and
/// 0 for nu_j = 0.
pub fn shrinkage_factors<F: Scalar>(nu: &VarianceComponents<F>, design: &DesignSet<F>) -> Vec<F> {
    let nu0 = nu.nu0();
    nu.random()
        .iter()
        .zip(design.column_norms_sq())
        .map(|(&nuj, &nsq)| {
            if nu0 == F::zero() {
                if nuj > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            } else {
                nuj * nsq / (nu0 + nuj * nsq)
            }
        })
        .collect()
}

/// Runs the two-stage EBLUP-NE estimator on an orthogonal design.
pub fn eblup_ne<F: Scalar>(
    design: &DesignSet<F>,
    series: &[F],
    initial_method: InitialMethod,
) -> Result<EblupNeResult<F>> {
    if !design.is_orthogonal() {
        return Err(Error::NotOrthogonal);
    }
    let cache = build_projection(design, series)?;
    let ne = estimate_ne(&cache, design)?;

    let (initial, nu_tilde) = match initial_method {
        InitialMethod::Ne => (EstimationResult::from_ne(&ne), ne.clone()),
        InitialMethod::NnDoolse => {
            let gram = gram_system(&cache, design, DoolseVariant::Doolse)?;
            let sol = estimate_nn_doolse(&gram)?;
            let nu = sol.nu_hat.clone();
            (EstimationResult::from_kkt(Method::NnDoolse, &sol, None), nu)
        }
        InitialMethod::NnMdoolse => {
            let gram = gram_system(&cache, design, DoolseVariant::Mdoolse)?;
            let sol = estimate_nn_doolse(&gram)?;
            let nu = sol.nu_hat.clone();
            (EstimationResult::from_kkt(Method::NnMdoolse, &sol, None), nu)
        }
        InitialMethod::Mle => {
            let est = estimate_remle(&cache, design, LikelihoodVariant::Ml)?;
            let nu = est.solution.nu_hat.clone();
            (EstimationResult::from_kkt(Method::Mle, &est.solution, est.log_likelihood), nu)
        }
        InitialMethod::Remle => {
            let est = estimate_remle(&cache, design, LikelihoodVariant::Reml)?;
            let nu = est.solution.nu_hat.clone();
            (EstimationResult::from_kkt(Method::Remle, &est.solution, est.log_likelihood), nu)
        }
    };

    let rho = shrinkage_factors(&nu_tilde, design);
    let rho_at_limit = nu_tilde.is_degenerate();

    let l = design.l();
    let mut final_nu = vec![F::zero(); l + 1];
    final_nu[0] = ne.as_slice()[0];
    if rho_at_limit {
        // BLUP at nu_0 = 0 is taken in the limit: Y*_j = rho_j v_j'eps/|v_j|^2.
        for j in 0..l {
            let y = rho[j] * cache.vt_eps()[j] / design.column_norms_sq()[j];
            final_nu[j + 1] = y * y;
        }
    } else {
        let blup = solve_mme_cached(design, &cache, series, &nu_tilde)?;
        for j in 0..l {
            final_nu[j + 1] = blup.y_hat[j] * blup.y_hat[j];
        }
    }

    Ok(EblupNeResult {
        initial,
        final_estimate: VarianceComponents::from_nonnegative(final_nu),
        rho,
        rho_at_limit,
    })
}

/// Which estimator family a moment summary describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentEstimator {
    Ne,
    BlupNe,
}

/// Exact moment characteristics of the natural estimators of nu_1..nu_l at a
/// caller-supplied true nu.
///
/// Expectation and bias hold for any absolutely continuous distribution of
/// the observation; dispersion, MSE and the cross covariances assume a
/// Gaussian observation. All values describe the estimators at *known* nu
/// (the vector echoed in `evaluated_at`), not the plug-in stage of EBLUP-NE.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary<F> {
    pub estimator: MomentEstimator,
    /// The true nu these characteristics are evaluated at.
    pub evaluated_at: Vec<F>,
    pub expectation: Vec<F>,
    pub bias: Vec<F>,
    pub dispersion: Vec<F>,
    pub mse: Vec<F>,
    /// Gaussian cross covariances 2 (nu_0 (W*^{-1})_{ij})^2; BLUP-NE only.
    pub cross_covariance: Option<Mat<F>>,
}

/// Evaluates the moment formulas:
///
/// * BLUP-NE: E = nu_j - nu_0 (W*^{-1})_{jj}, bias <= 0,
///   D = 2 (nu_j - nu_0 (W*^{-1})_{jj})^2, MSE = D + bias^2,
///   Cov(i != j) = 2 (nu_0 (W*^{-1})_{ij})^2;
/// * NE: E = nu_j + nu_0 (W^{-1})_{jj}, bias >= 0, D = 2 E^2, MSE = D + bias^2.
///
/// Singular D is handled through W*^{-1} = D U*^{-1}.
pub fn blup_ne_moments<F: Scalar>(
    design: &DesignSet<F>,
    nu_true: &VarianceComponents<F>,
    estimator: MomentEstimator,
) -> Result<MomentSummary<F>> {
    nu_true.check_dimension(design.l())?;
    if nu_true.nu0() <= F::zero() {
        return Err(Error::InvalidVariance("nu_0 must be strictly positive".into()));
    }
    let l = design.l();
    let nu0 = nu_true.nu0();
    let two = F::one() + F::one();

    // Only design products are needed; reuse the projection plumbing.
    let cache = build_projection(design, &vec![F::zero(); design.n()])?;

    let (diag_inv, cross) = match estimator {
        MomentEstimator::BlupNe => {
            let schur = schur_matrices(&cache, design, nu_true)?;
            let w_star_inv = schur.w_star_inv().clone();
            let diag: Vec<F> = (0..l).map(|j| w_star_inv[(j, j)]).collect();
            (diag, Some(w_star_inv))
        }
        MomentEstimator::Ne => {
            let w_inv = Cholesky::factor(cache.w())
                .ok_or(Error::NonPositiveDefinite)?
                .inverse();
            ((0..l).map(|j| w_inv[(j, j)]).collect(), None)
        }
    };

    let mut expectation = Vec::with_capacity(l);
    let mut bias = Vec::with_capacity(l);
    let mut dispersion = Vec::with_capacity(l);
    let mut mse = Vec::with_capacity(l);
    for j in 0..l {
        let nuj = nu_true.random()[j];
        let b = match estimator {
            MomentEstimator::BlupNe => -nu0 * diag_inv[j],
            MomentEstimator::Ne => nu0 * diag_inv[j],
        };
        let e = nuj + b;
        expectation.push(e);
        bias.push(b);
        dispersion.push(two * e * e);
        mse.push(two * e * e + b * b);
    }

    let cross_covariance = cross.map(|w_star_inv| {
        Mat::from_fn(l, l, |i, j| {
            if i == j {
                dispersion[i]
            } else {
                let c = nu0 * w_star_inv[(i, j)];
                two * c * c
            }
        })
    });

    Ok(MomentSummary {
        estimator,
        evaluated_at: nu_true.as_slice().to_vec(),
        expectation,
        bias,
        dispersion,
        mse,
        cross_covariance,
    })
}
