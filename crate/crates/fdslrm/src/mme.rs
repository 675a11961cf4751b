//! Henderson's mixed model equations for the BLUE of the trend coefficients
//! and the BLUP of the random effects.
//!
//! The production path is the D-multiplied form: Z* solves
//! (W D + nu_0 I) Z* = V'M_F x, then Y* = D Z* and
//! beta* = (F'F)^{-1} F'(x - V Y*). It stays regular for singular and
//! ill-conditioned D; the full (k+l) x (k+l) block system serves as a test
//! oracle only.

use crate::error::{Error, Result};
use crate::estimators::VarianceComponents;
use crate::linalg::Mat;
use crate::model::DesignSet;
use crate::projection::{build_projection, schur_matrices, ProjectionCache};
use crate::scalar::{dot, Scalar};

/// BLUE/BLUP solution and both residual decompositions.
#[derive(Debug, Clone, PartialEq)]
pub struct BlupResult<F> {
    /// BLUE beta* of the trend coefficients (OLS estimate in orthogonal
    /// designs, for every nu).
    pub beta_hat: Vec<F>,
    /// BLUP Y* of the random-effect vector.
    pub y_hat: Vec<F>,
    /// x - F beta* - V Y*.
    pub conditional_residuals: Vec<F>,
    /// x - F beta*.
    pub marginal_residuals: Vec<F>,
}

pub fn solve_mme<F: Scalar>(
    design: &DesignSet<F>,
    series: &[F],
    nu: &VarianceComponents<F>,
) -> Result<BlupResult<F>> {
    let cache = build_projection(design, series)?;
    solve_mme_cached(design, &cache, series, nu)
}

/// Same as [`solve_mme`], reusing an existing projection cache.
pub fn solve_mme_cached<F: Scalar>(
    design: &DesignSet<F>,
    cache: &ProjectionCache<F>,
    series: &[F],
    nu: &VarianceComponents<F>,
) -> Result<BlupResult<F>> {
    let n = design.n();
    if series.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: series.len() });
    }
    let schur = schur_matrices(cache, design, nu)?;
    // V'M_F x = V'eps
    let y_hat = schur.apply_to_projected(cache.vt_eps());

    // beta* = beta_ols - (F'F)^{-1} (F'V) Y*
    let beta_hat = if design.k() == 0 {
        Vec::new()
    } else {
        let ftv_y = cache.ftv().matvec(&y_hat);
        let correction = cache.ftf_inv().matvec(&ftv_y);
        cache
            .beta_ols()
            .iter()
            .zip(correction.iter())
            .map(|(&b, &c)| b - c)
            .collect()
    };

    let mut marginal = series.to_vec();
    for (f, &c) in design.f_cols().iter().zip(beta_hat.iter()) {
        for (m, &fv) in marginal.iter_mut().zip(f.iter()) {
            *m = *m - c * fv;
        }
    }
    let mut conditional = marginal.clone();
    for (v, &y) in design.v_cols().iter().zip(y_hat.iter()) {
        for (r, &vv) in conditional.iter_mut().zip(v.iter()) {
            *r = *r - y * vv;
        }
    }

    Ok(BlupResult { beta_hat, y_hat, conditional_residuals: conditional, marginal_residuals: marginal })
}

/// Max-abs residuals of the three identities satisfied by the predictor
/// matrix T* = D U*^{-1} V' M_F:
///
/// 1. T*T*'          = D U*^{-1} (I - nu_0 U*^{-1})
/// 2. T*F = 0,  T*V  = (I - nu_0 U*^{-1})'
/// 3. T* Sigma T*'   = D (I - nu_0 U*^{-1})
///
/// In identity 2 the transpose matters only when D and W do not commute;
/// orthogonal designs have a diagonal U* and the prime disappears.
///
/// The left-hand sides are computed from the explicitly projected columns
/// M_F V, the right-hand sides from the analytic forms, so the residuals
/// measure genuine roundoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TStarIdentityResiduals<F> {
    pub gram: F,
    pub annihilation: F,
    pub covariance: F,
}

impl<F: Scalar> TStarIdentityResiduals<F> {
    pub fn max(&self) -> F {
        self.gram.max(self.annihilation).max(self.covariance)
    }
}

pub fn lemma1_identities<F: Scalar>(
    design: &DesignSet<F>,
    nu: &VarianceComponents<F>,
) -> Result<TStarIdentityResiduals<F>> {
    let (n, k, l) = (design.n(), design.k(), design.l());
    // A synthetic series is irrelevant here; only design products are used.
    let cache = build_projection(design, &vec![F::zero(); n])?;
    let schur = schur_matrices(&cache, design, nu)?;

    // Explicit projected columns M_F V (n x l), column by column.
    let mfv: Vec<Vec<F>> = design
        .v_cols()
        .iter()
        .map(|v| cache.m_f_apply(design, v))
        .collect();

    // A = D U*^{-1}; T* = A (V'M_F) = A (M_F V)'
    let a = schur.w_star_inv().clone();
    let u_star = schur.u_star();
    let d = schur.d();

    // I - nu_0 U*^{-1} computed from the factored U*: U*^{-1} columns.
    let mut i_minus = Mat::identity(l);
    {
        let inv = match l {
            0 => Mat::zeros(0, 0),
            _ => {
                let lu = crate::linalg::Lu::factor(u_star)?;
                lu.inverse()
            }
        };
        for i in 0..l {
            for j in 0..l {
                i_minus[(i, j)] = i_minus[(i, j)] - nu.nu0() * inv[(i, j)];
            }
        }
    }

    // (1) T*T*' = A (V'M_F M_F V) A'
    let mfv_gram = Mat::from_fn(l, l, |i, j| dot(&mfv[i], &mfv[j]));
    let lhs1 = a.matmul(&mfv_gram).matmul(&a.transpose());
    let rhs1 = a.matmul(&i_minus);
    let gram = lhs1.max_abs_diff(&rhs1);

    // (2) T*F = 0 and T*V = (I - nu_0 U*^{-1})'
    let mfv_t_f = Mat::from_fn(l, k, |i, j| dot(&mfv[i], &design.f_cols()[j]));
    let t_f = a.matmul(&mfv_t_f);
    let mfv_t_v = Mat::from_fn(l, l, |i, j| dot(&mfv[i], &design.v_cols()[j]));
    let t_v = a.matmul(&mfv_t_v);
    let annihilation = t_f.max_abs().max(t_v.max_abs_diff(&i_minus.transpose()));

    // (3) T* Sigma T*' = nu_0 T*T*' + (T*V) D (T*V)'
    let lhs3 = {
        let scaled = lhs1.scale_cols(&vec![nu.nu0(); l]);
        let tvd = t_v.scale_cols(d);
        scaled.add(&tvd.matmul(&t_v.transpose()))
    };
    let rhs3 = i_minus.scale_rows(d);
    let covariance = lhs3.max_abs_diff(&rhs3);

    Ok(TStarIdentityResiduals { gram, annihilation, covariance })
}
