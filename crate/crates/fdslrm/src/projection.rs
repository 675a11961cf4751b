//! Projector and Gram/Schur machinery shared by every estimator: the action
//! of M_F = I - F(F'F)^{-1}F', OLS residuals, the Schur complement
//! W = V'M_F V, the Gram system (G, q) of the least-squares covariance fit,
//! and the extended Schur matrices W* and U*.
//!
//! M_F is never materialized in production paths; its action
//! y -> y - F((F'F)^{-1}(F'y)) keeps every pipeline O(n) in time and memory
//! for fixed k and l.

use crate::error::{Error, Result};
use crate::estimators::VarianceComponents;
use crate::linalg::{Cholesky, Lu, Mat};
use crate::model::DesignSet;
use crate::scalar::{count, dot, Scalar};

/// Cached inner products of a design and one observed series.
#[derive(Debug, Clone)]
pub struct ProjectionCache<F> {
    beta_ols: Vec<F>,
    eps: Vec<F>,
    vt_eps: Vec<F>,
    ft_eps: Vec<F>,
    eps_sq: F,
    ftf: Mat<F>,
    ftf_inv: Mat<F>,
    ftv: Mat<F>,
    gram_v: Mat<F>,
    w: Mat<F>,
}

impl<F: Scalar> ProjectionCache<F> {
    /// OLS estimate of the trend coefficients, (F'F)^{-1} F'x.
    pub fn beta_ols(&self) -> &[F] {
        &self.beta_ols
    }

    /// OLS residuals eps = x - F beta_ols = M_F x.
    pub fn eps(&self) -> &[F] {
        &self.eps
    }

    /// v_j' eps for each random column.
    pub fn vt_eps(&self) -> &[F] {
        &self.vt_eps
    }

    /// f_i' eps (zero up to roundoff).
    pub fn ft_eps(&self) -> &[F] {
        &self.ft_eps
    }

    /// eps' eps.
    pub fn eps_sq(&self) -> F {
        self.eps_sq
    }

    /// F'F (k x k).
    pub fn ftf(&self) -> &Mat<F> {
        &self.ftf
    }

    /// (F'F)^{-1} (k x k).
    pub fn ftf_inv(&self) -> &Mat<F> {
        &self.ftf_inv
    }

    /// F'V (k x l); exactly zero in orthogonal designs.
    pub fn ftv(&self) -> &Mat<F> {
        &self.ftv
    }

    /// V'V (l x l); diagonal in orthogonal designs.
    pub fn gram_v(&self) -> &Mat<F> {
        &self.gram_v
    }

    /// Schur complement W = V' M_F V (l x l).
    pub fn w(&self) -> &Mat<F> {
        &self.w
    }

    /// Applies the projector M_F to a length-n vector without materializing
    /// it: y - F((F'F)^{-1}(F'y)).
    pub fn m_f_apply(&self, design: &DesignSet<F>, y: &[F]) -> Vec<F> {
        assert_eq!(y.len(), design.n());
        if design.k() == 0 {
            return y.to_vec();
        }
        let fty: Vec<F> = design.f_cols().iter().map(|f| dot(f, y)).collect();
        let coeffs = self.ftf_inv.matvec(&fty);
        let mut out = y.to_vec();
        for (f, &c) in design.f_cols().iter().zip(coeffs.iter()) {
            for (o, &fv) in out.iter_mut().zip(f.iter()) {
                *o = *o - c * fv;
            }
        }
        out
    }

    /// Materializes M_F as an n x n matrix. Diagnostics only; O(n^2) memory.
    pub fn m_f_matrix(&self, design: &DesignSet<F>) -> Mat<F> {
        let n = design.n();
        let mut m = Mat::zeros(n, n);
        let mut e = vec![F::zero(); n];
        for j in 0..n {
            e[j] = F::one();
            let col = self.m_f_apply(design, &e);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = F::zero();
        }
        m
    }
}

/// Computes the OLS projection of a series and caches every inner product the
/// estimators need.
pub fn build_projection<F: Scalar>(design: &DesignSet<F>, series: &[F]) -> Result<ProjectionCache<F>> {
    let n = design.n();
    if series.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: series.len() });
    }
    let (k, l) = (design.k(), design.l());

    let ftf = Mat::from_fn(k, k, |i, j| dot(&design.f_cols()[i], &design.f_cols()[j]));
    let ftf_inv = if k == 0 {
        Mat::zeros(0, 0)
    } else {
        Cholesky::factor(&ftf).ok_or(Error::SingularSystem)?.inverse()
    };

    let ftx: Vec<F> = design.f_cols().iter().map(|f| dot(f, series)).collect();
    let beta_ols = ftf_inv.matvec(&ftx);

    let mut eps = series.to_vec();
    for (f, &c) in design.f_cols().iter().zip(beta_ols.iter()) {
        for (e, &fv) in eps.iter_mut().zip(f.iter()) {
            *e = *e - c * fv;
        }
    }

    let vt_eps: Vec<F> = design.v_cols().iter().map(|v| dot(v, &eps)).collect();
    let ft_eps: Vec<F> = design.f_cols().iter().map(|f| dot(f, &eps)).collect();
    let eps_sq = dot(&eps, &eps);

    let (ftv, gram_v, w) = if design.is_orthogonal() {
        // Orthogonality is a structural fact of the design; the cross
        // products are exactly zero and V'V is the diagonal of column norms.
        let gram_v = Mat::diagonal(design.column_norms_sq());
        (Mat::zeros(k, l), gram_v.clone(), Mat::diagonal(design.column_norms_sq()))
    } else {
        let ftv = Mat::from_fn(k, l, |i, j| dot(&design.f_cols()[i], &design.v_cols()[j]));
        let gram_v = Mat::from_fn(l, l, |i, j| dot(&design.v_cols()[i], &design.v_cols()[j]));
        // W = V'V - (F'V)' (F'F)^{-1} (F'V)
        let w = if k == 0 {
            gram_v.clone()
        } else {
            gram_v.sub(&ftv.transpose().matmul(&ftf_inv.matmul(&ftv)))
        };
        (ftv, gram_v, w)
    };

    Ok(ProjectionCache { beta_ols, eps, vt_eps, ft_eps, eps_sq, ftf, ftf_inv, ftv, gram_v, w })
}

/// Selects the effective observation count n* of the covariance fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoolseVariant {
    /// n* = n
    Doolse,
    /// n* = n - k
    Mdoolse,
}

/// The (l+1) x (l+1) arrow-structured Gram system of the covariance fit:
/// G[0,0] = n*, G[0,j] = G[j,0] = |v_j|^2, G[j,j] = |v_j|^4, and
/// q = (eps'eps, (eps'v_1)^2, ..., (eps'v_l)^2).
#[derive(Debug, Clone, PartialEq)]
pub struct GramSystem<F> {
    g: Mat<F>,
    q: Vec<F>,
    n_star: usize,
}

impl<F: Scalar> GramSystem<F> {
    /// Builds a Gram system from raw parts, validating the arrow structure.
    pub fn new(g: Mat<F>, q: Vec<F>, n_star: usize) -> Result<Self> {
        let dim = q.len();
        if g.nrows() != dim || g.ncols() != dim || dim == 0 {
            return Err(Error::InvalidInput("Gram system dimensions disagree".into()));
        }
        if g[(0, 0)] != count::<F>(n_star) {
            return Err(Error::InvalidInput("G[0,0] must equal n*".into()));
        }
        for j in 1..dim {
            if g[(0, j)] != g[(j, 0)] || g[(0, j)] <= F::zero() || g[(j, j)] <= F::zero() {
                return Err(Error::InvalidInput("G is not a valid arrow matrix".into()));
            }
            for i in 1..dim {
                if i != j && g[(i, j)] != F::zero() {
                    return Err(Error::InvalidInput("G must vanish off the arrow".into()));
                }
            }
        }
        if q.iter().any(|&x| x < F::zero() || !x.is_finite()) {
            return Err(Error::InvalidInput("q must be non-negative and finite".into()));
        }
        Ok(GramSystem { g, q, n_star })
    }

    pub fn g(&self) -> &Mat<F> {
        &self.g
    }

    pub fn q(&self) -> &[F] {
        &self.q
    }

    pub fn n_star(&self) -> usize {
        self.n_star
    }

    pub fn l(&self) -> usize {
        self.q.len() - 1
    }

    /// |v_j|^2 as recorded in the arrow (j = 1..l).
    pub fn norm_sq(&self, j: usize) -> F {
        self.g[(0, j)]
    }

    /// |v_j|^4 as recorded on the diagonal (j = 1..l).
    pub fn norm_quad(&self, j: usize) -> F {
        self.g[(j, j)]
    }
}

/// Assembles the Gram system of the covariance fit for an orthogonal design.
pub fn gram_system<F: Scalar>(
    cache: &ProjectionCache<F>,
    design: &DesignSet<F>,
    variant: DoolseVariant,
) -> Result<GramSystem<F>> {
    if !design.is_orthogonal() {
        return Err(Error::NotOrthogonal);
    }
    let l = design.l();
    let n_star = match variant {
        DoolseVariant::Doolse => design.n(),
        DoolseVariant::Mdoolse => design.n() - design.k(),
    };
    let norms = design.column_norms_sq();
    let mut g = Mat::zeros(l + 1, l + 1);
    g[(0, 0)] = count(n_star);
    for j in 0..l {
        g[(0, j + 1)] = norms[j];
        g[(j + 1, 0)] = norms[j];
        g[(j + 1, j + 1)] = norms[j] * norms[j];
    }
    let mut q = Vec::with_capacity(l + 1);
    q.push(cache.eps_sq());
    for j in 0..l {
        let c = cache.vt_eps()[j];
        q.push(c * c);
    }
    GramSystem::new(g, q, n_star)
}

/// Extended Schur matrices at a given variance-component vector.
///
/// `u_star` = W D + nu_0 I and `w_star_inv` = D U*^{-1} exist for every valid
/// vector, including singular D; `w_star` = W + nu_0 D^{-1} is only present
/// when every component of D is (effectively) positive.
#[derive(Debug, Clone)]
pub struct SchurMatrices<F> {
    is_diagonal: bool,
    u_star: Mat<F>,
    u_star_lu: Lu<F>,
    w_star_inv: Mat<F>,
    w_star: Option<Mat<F>>,
    d: Vec<F>,
    nu0: F,
}

impl<F: Scalar> SchurMatrices<F> {
    /// U* = W D + nu_0 I (l x l), always invertible.
    pub fn u_star(&self) -> &Mat<F> {
        &self.u_star
    }

    /// D U*^{-1} (l x l); equals W*^{-1} whenever D is nonsingular.
    pub fn w_star_inv(&self) -> &Mat<F> {
        &self.w_star_inv
    }

    /// W* = W + nu_0 D^{-1}, present only for nonsingular D. Recovered from
    /// U* as U* D^{-1}, which stays stable for small positive components.
    pub fn w_star(&self) -> Option<&Mat<F>> {
        self.w_star.as_ref()
    }

    /// Effective diagonal of D (tiny components snapped to zero).
    pub fn d(&self) -> &[F] {
        &self.d
    }

    pub fn nu0(&self) -> F {
        self.nu0
    }

    /// Applies the predictor matrix T* = D U*^{-1} V' M_F to a series,
    /// returning the BLUP of the random-effect vector.
    pub fn predict_random_effects(
        &self,
        design: &DesignSet<F>,
        cache: &ProjectionCache<F>,
        series: &[F],
    ) -> Result<Vec<F>> {
        let n = design.n();
        if series.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: series.len() });
        }
        let m_f_x = cache.m_f_apply(design, series);
        let vt: Vec<F> = design.v_cols().iter().map(|v| dot(v, &m_f_x)).collect();
        Ok(self.apply_to_projected(&vt))
    }

    /// T* x given V' M_F x.
    pub(crate) fn apply_to_projected(&self, vt_mfx: &[F]) -> Vec<F> {
        if self.d.iter().all(|&x| x == F::zero()) {
            return vec![F::zero(); self.d.len()];
        }
        let z = if self.is_diagonal {
            // Orthogonal designs: U* is diagonal.
            (0..self.d.len())
                .map(|j| vt_mfx[j] / self.u_star[(j, j)])
                .collect::<Vec<F>>()
        } else {
            self.u_star_lu.solve(vt_mfx)
        };
        z.iter().zip(self.d.iter()).map(|(&z, &d)| d * z).collect()
    }

    /// Materializes T* (l x n). Diagnostics and small-n use.
    pub fn t_star_matrix(&self, design: &DesignSet<F>, cache: &ProjectionCache<F>) -> Mat<F> {
        let (n, l) = (design.n(), design.l());
        // rows of V'M_F = columns of M_F V
        let mut m = Mat::zeros(l, n);
        let mut vt_col = vec![F::zero(); l];
        let mut e = vec![F::zero(); n];
        for t in 0..n {
            e[t] = F::one();
            let m_f_e = cache.m_f_apply(design, &e);
            for (j, v) in design.v_cols().iter().enumerate() {
                vt_col[j] = dot(v, &m_f_e);
            }
            let col = self.apply_to_projected(&vt_col);
            for j in 0..l {
                m[(j, t)] = col[j];
            }
            e[t] = F::zero();
        }
        m
    }
}

/// Forms U*, D U*^{-1} and (for nonsingular D) W* at the given variances.
///
/// The D-multiplied forms handle singular and ill-conditioned D; nothing here
/// inverts D itself.
pub fn schur_matrices<F: Scalar>(
    cache: &ProjectionCache<F>,
    design: &DesignSet<F>,
    nu: &VarianceComponents<F>,
) -> Result<SchurMatrices<F>> {
    nu.check_dimension(design.l())?;
    if nu.nu0() <= F::zero() {
        return Err(Error::InvalidVariance("nu_0 must be strictly positive".into()));
    }
    let d = nu.effective_random();
    let l = design.l();
    let nu0 = nu.nu0();

    // U* = W D + nu_0 I
    let mut u_star = cache.w().scale_cols(&d);
    u_star.add_diagonal(nu0);
    let u_star_lu = Lu::factor(&u_star)?;
    let w_star_inv = if design.is_orthogonal() {
        Mat::from_fn(l, l, |i, j| {
            if i == j {
                d[i] / u_star[(i, i)]
            } else {
                F::zero()
            }
        })
    } else {
        u_star_lu.inverse().scale_rows(&d)
    };
    let w_star = if d.iter().all(|&x| x > F::zero()) {
        // W* = U* D^{-1}
        let inv_d: Vec<F> = d.iter().map(|&x| F::one() / x).collect();
        Some(u_star.scale_cols(&inv_d))
    } else {
        None
    };

    Ok(SchurMatrices {
        is_diagonal: design.is_orthogonal(),
        u_star,
        u_star_lu,
        w_star_inv,
        w_star,
        d,
        nu0,
    })
}
