//! The five initial estimators of the variance components: the closed-form
//! natural estimators (NE), the unconstrained projection (M)DOOLSE solve, the
//! non-negative (M)DOOLSE via an analytic KKT active-set scan, and ML/REML
//! estimators computed through their equivalence with the non-negative
//! (M)DOOLSE in orthogonal designs. Also the ML/REML log-likelihoods and the
//! bijective reparameterization nu <-> d.

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Lu, Mat};
use crate::model::DesignSet;
use crate::projection::{DoolseVariant, GramSystem, ProjectionCache};
use crate::scalar::{count, max_abs, real, Scalar};

/// A residual counts as lying in the span of V when its Bessel defect
/// eps'eps - sum_j (eps'v_j)^2/|v_j|^2 falls below this factor times eps'eps.
pub const DEGENERATE_RESIDUAL_TOLERANCE: f64 = 1e-12;

/// Components below this factor times the largest variance are treated as
/// exactly zero when deciding singular-D code paths.
pub const EFFECTIVE_ZERO_FACTOR: f64 = 1e-14;

/// The variance-component vector (nu_0, nu_1, ..., nu_l).
///
/// `new` enforces the parameter space nu_0 > 0, nu_j >= 0. Estimators may
/// return the boundary value nu_0 = 0 in the flagged degenerate situation
/// where the residual lies in the span of V; such vectors answer true to
/// [`VarianceComponents::is_degenerate`].
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceComponents<F> {
    nu: Vec<F>,
}

impl<F: Scalar> VarianceComponents<F> {
    pub fn new(nu: Vec<F>) -> Result<Self> {
        if nu.is_empty() {
            return Err(Error::InvalidVariance("empty vector".into()));
        }
        if nu.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidVariance("components must be finite".into()));
        }
        if nu[0] <= F::zero() {
            return Err(Error::InvalidVariance("nu_0 must be strictly positive".into()));
        }
        if nu[1..].iter().any(|&x| x < F::zero()) {
            return Err(Error::InvalidVariance("nu_j must be non-negative".into()));
        }
        Ok(VarianceComponents { nu })
    }

    /// Constructor for estimator outputs: allows the flagged nu_0 = 0 case.
    pub(crate) fn from_nonnegative(nu: Vec<F>) -> Self {
        debug_assert!(nu.iter().all(|&x| x >= F::zero()));
        VarianceComponents { nu }
    }

    pub fn as_slice(&self) -> &[F] {
        &self.nu
    }

    /// White-noise variance nu_0.
    pub fn nu0(&self) -> F {
        self.nu[0]
    }

    /// Random-component variances (nu_1, ..., nu_l).
    pub fn random(&self) -> &[F] {
        &self.nu[1..]
    }

    pub fn l(&self) -> usize {
        self.nu.len() - 1
    }

    /// True when nu_0 = 0, the boundary case flagged by the estimators.
    pub fn is_degenerate(&self) -> bool {
        self.nu[0] == F::zero()
    }

    /// Random components with entries below `EFFECTIVE_ZERO_FACTOR * max(nu)`
    /// snapped to zero, for singular-D decisions.
    pub fn effective_random(&self) -> Vec<F> {
        let threshold = real::<F>(EFFECTIVE_ZERO_FACTOR) * max_abs(&self.nu);
        self.nu[1..]
            .iter()
            .map(|&x| if x < threshold { F::zero() } else { x })
            .collect()
    }

    pub(crate) fn check_dimension(&self, l: usize) -> Result<()> {
        if self.l() != l {
            return Err(Error::InvalidVariance(format!(
                "expected {} components, got {}",
                l + 1,
                self.nu.len()
            )));
        }
        Ok(())
    }
}

/// Dual variables (d_0, ..., d_l) of the bijective reparameterization
/// d_0 = 1/nu_0, d_j = nu_j / (nu_0 (nu_0 + |v_j|^2 nu_j)).
#[derive(Debug, Clone, PartialEq)]
pub struct DualVariables<F> {
    d: Vec<F>,
}

impl<F: Scalar> DualVariables<F> {
    /// Validates d_0 > 0, d_j >= 0 and d_0 > d_j |v_j|^2.
    pub fn new(d: Vec<F>, norms_sq: &[F]) -> Result<Self> {
        if d.len() != norms_sq.len() + 1 {
            return Err(Error::InvalidDual("dimension mismatch".into()));
        }
        if d.is_empty() || d[0] <= F::zero() {
            return Err(Error::InvalidDual("d_0 must be strictly positive".into()));
        }
        for (j, (&dj, &nsq)) in d[1..].iter().zip(norms_sq.iter()).enumerate() {
            if dj < F::zero() {
                return Err(Error::InvalidDual(format!("d_{} is negative", j + 1)));
            }
            if d[0] <= dj * nsq {
                return Err(Error::InvalidDual(format!(
                    "d_0 must exceed d_{j} * |v_{j}|^2",
                    j = j + 1
                )));
            }
        }
        Ok(DualVariables { d })
    }

    pub fn as_slice(&self) -> &[F] {
        &self.d
    }

    pub fn d0(&self) -> F {
        self.d[0]
    }

    pub fn random(&self) -> &[F] {
        &self.d[1..]
    }
}

/// Maps variance components to the dual variables.
pub fn nu_to_d<F: Scalar>(nu: &VarianceComponents<F>, design: &DesignSet<F>) -> Result<DualVariables<F>> {
    nu.check_dimension(design.l())?;
    let nu0 = nu.nu0();
    if nu0 <= F::zero() {
        return Err(Error::InvalidVariance("nu_0 must be strictly positive".into()));
    }
    let mut d = Vec::with_capacity(nu.l() + 1);
    d.push(F::one() / nu0);
    for (&nuj, &nsq) in nu.random().iter().zip(design.column_norms_sq()) {
        d.push(nuj / (nu0 * (nu0 + nsq * nuj)));
    }
    DualVariables::new(d, design.column_norms_sq())
}

/// Maps dual variables back to variance components:
/// nu_0 = 1/d_0, nu_j = d_j / (d_0 (d_0 - d_j |v_j|^2)).
pub fn d_to_nu<F: Scalar>(d: &DualVariables<F>, design: &DesignSet<F>) -> Result<VarianceComponents<F>> {
    if d.as_slice().len() != design.l() + 1 {
        return Err(Error::InvalidDual("dimension mismatch".into()));
    }
    let d0 = d.d0();
    let mut nu = Vec::with_capacity(design.l() + 1);
    nu.push(F::one() / d0);
    for (&dj, &nsq) in d.random().iter().zip(design.column_norms_sq()) {
        nu.push(dj / (d0 * (d0 - dj * nsq)));
    }
    VarianceComponents::new(nu)
}

// ---------------------------------------------------------------------------
// Natural estimators
// ---------------------------------------------------------------------------

/// Closed-form natural estimators in an orthogonal design:
/// nu_0 = (eps'eps - sum_j (eps'v_j)^2/|v_j|^2) / (n-k-l),
/// nu_j = (eps'v_j)^2 / |v_j|^4.
///
/// The numerator of nu_0 is a Bessel defect and is clamped at zero; a defect
/// below `DEGENERATE_RESIDUAL_TOLERANCE * eps'eps` yields the flagged
/// degenerate vector with nu_0 = 0 exactly.
pub fn estimate_ne<F: Scalar>(
    cache: &ProjectionCache<F>,
    design: &DesignSet<F>,
) -> Result<VarianceComponents<F>> {
    if !design.is_orthogonal() {
        return Err(Error::NotOrthogonal);
    }
    let (n, k, l) = (design.n(), design.k(), design.l());
    let norms = design.column_norms_sq();
    let mut defect = cache.eps_sq();
    let mut nu = vec![F::zero(); l + 1];
    for j in 0..l {
        let c = cache.vt_eps()[j];
        defect = defect - c * c / norms[j];
        nu[j + 1] = (c * c) / (norms[j] * norms[j]);
    }
    let degenerate = defect < real::<F>(DEGENERATE_RESIDUAL_TOLERANCE) * cache.eps_sq();
    nu[0] = if degenerate {
        F::zero()
    } else {
        defect.max(F::zero()) / count::<F>(n - k - l)
    };
    Ok(VarianceComponents::from_nonnegative(nu))
}

// ---------------------------------------------------------------------------
// Projection (M)DOOLSE
// ---------------------------------------------------------------------------

/// Unconstrained solution of the covariance fit; components may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedEstimate<F> {
    pub values: Vec<F>,
    pub has_negative: bool,
}

/// Exact solution of G nu = q via the arrow structure. Negative entries are
/// reported verbatim with the flag set, never clamped.
pub fn estimate_projection<F: Scalar>(gram: &GramSystem<F>) -> UnconstrainedEstimate<F> {
    let all_active = vec![true; gram.l()];
    let values = arrow_solve(gram, &all_active);
    let has_negative = values.iter().any(|&x| x < F::zero());
    UnconstrainedEstimate { values, has_negative }
}

// ---------------------------------------------------------------------------
// Non-negative (M)DOOLSE: analytic KKT active-set scan
// ---------------------------------------------------------------------------

/// Output of the KKT scan for the non-negative covariance fit.
///
/// Complementary slackness holds exactly by construction: for every j either
/// nu_j or lambda_j is the stored zero.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution<F> {
    /// The non-negative minimizer.
    pub nu_hat: VarianceComponents<F>,
    /// Pattern b: b_j = true iff nu_j > 0 was solved for.
    pub active_pattern: Vec<bool>,
    /// Number of linear systems solved before acceptance.
    pub systems_tried: u32,
    /// Multipliers lambda_1..lambda_l (lambda_j = 0 on active components).
    pub lagrange: Vec<F>,
    /// True when the residual lies in the span of V (nu_0 = 0 boundary).
    pub degenerate: bool,
    /// True when some accepted component sat exactly on the boundary, in
    /// which case another pattern would have been accepted too.
    pub boundary_tie: bool,
}

/// Solves min nu'G nu - 2 q'nu over nu >= 0 by scanning the 2^l candidate
/// active patterns, each solved through the analytic arrow inverse of the
/// KKT matrix K(b). Patterns are visited by descending popcount starting at
/// all-ones (the unconstrained solution), ascending lexicographically in
/// (b_1..b_l) within a popcount class.
pub fn estimate_nn_doolse<F: Scalar>(gram: &GramSystem<F>) -> Result<KktSolution<F>> {
    let l = gram.l();
    if l >= 63 {
        return Err(Error::InvalidInput("KKT scan supports at most 62 components".into()));
    }

    // eps in span(V): Bessel defect of q relative to eps'eps.
    let q = gram.q();
    let mut defect = q[0];
    for j in 1..=l {
        defect = defect - q[j] / gram.norm_sq(j);
    }
    if defect < real::<F>(DEGENERATE_RESIDUAL_TOLERANCE) * q[0] {
        // Trivial boundary solution nu_0 = 0, nu_j = (eps'v_j)^2/|v_j|^4.
        let mut nu = vec![F::zero(); l + 1];
        for j in 1..=l {
            nu[j] = q[j] / gram.norm_quad(j);
        }
        let active_pattern = nu[1..].iter().map(|&x| x > F::zero()).collect();
        return Ok(KktSolution {
            nu_hat: VarianceComponents::from_nonnegative(nu),
            active_pattern,
            systems_tried: 0,
            lagrange: vec![F::zero(); l],
            degenerate: true,
            boundary_tie: false,
        });
    }

    let tol = real::<F>(1e-12) * F::one().max(max_abs(q));
    let mut systems_tried = 0u32;
    for mask in pattern_scan(l) {
        let b = pattern_bits(mask, l);
        let mut g = arrow_solve(gram, &b);
        systems_tried += 1;
        if g.iter().all(|&x| x >= -tol) {
            let mut clamped = false;
            for x in g.iter_mut() {
                if *x < F::zero() {
                    *x = F::zero();
                    clamped = true;
                }
            }
            let mut nu = vec![F::zero(); l + 1];
            let mut lagrange = vec![F::zero(); l];
            nu[0] = g[0];
            for j in 0..l {
                if b[j] {
                    nu[j + 1] = g[j + 1];
                } else {
                    lagrange[j] = g[j + 1];
                }
            }
            let boundary_tie = clamped
                || (0..l).any(|j| {
                    (b[j] && nu[j + 1] == F::zero()) || (!b[j] && lagrange[j] == F::zero())
                });
            return Ok(KktSolution {
                nu_hat: VarianceComponents::from_nonnegative(nu),
                active_pattern: b,
                systems_tried,
                lagrange,
                degenerate: false,
                boundary_tie,
            });
        }
    }
    // Unreachable for a valid arrow system: the scan always accepts once.
    Err(Error::InvalidInput("KKT scan found no acceptable pattern".into()))
}

/// Pattern iterator: masks with bit (l-1-j) holding b_{j+1}, by descending
/// popcount, ascending mask value within a class (Gosper's hack).
fn pattern_scan(l: usize) -> impl Iterator<Item = u64> {
    let full: u64 = if l == 0 { 0 } else { (1u64 << l) - 1 };
    (0..=l).rev().flat_map(move |c| {
        let mut next: Option<u64> = Some(if c == 0 { 0 } else { (1u64 << c) - 1 });
        std::iter::from_fn(move || {
            let m = next?;
            next = if c == 0 || m == 0 {
                None
            } else {
                let u = m & m.wrapping_neg();
                let v = m + u;
                let succ = v | (((m ^ v) / u) >> 2);
                (succ <= full).then_some(succ)
            };
            Some(m)
        })
    })
}

fn pattern_bits(mask: u64, l: usize) -> Vec<bool> {
    (0..l).map(|j| (mask >> (l - 1 - j)) & 1 == 1).collect()
}

/// Solves K(b) g = q through the Banachiewicz block inverse of the arrow
/// matrix: phi = n* - sum_{b_j} G_{0j}^2/G_{jj}, then back-substitution.
fn arrow_solve<F: Scalar>(gram: &GramSystem<F>, b: &[bool]) -> Vec<F> {
    let l = gram.l();
    let q = gram.q();
    let mut phi = count::<F>(gram.n_star());
    let mut rhs0 = q[0];
    for j in 1..=l {
        if b[j - 1] {
            let g0j = gram.norm_sq(j);
            let gjj = gram.norm_quad(j);
            phi = phi - g0j * g0j / gjj;
            rhs0 = rhs0 - g0j * q[j] / gjj;
        }
    }
    let g0 = rhs0 / phi;
    let mut g = Vec::with_capacity(l + 1);
    g.push(g0);
    for j in 1..=l {
        let g0j = gram.norm_sq(j);
        if b[j - 1] {
            g.push((q[j] - g0j * g0) / gram.norm_quad(j));
        } else {
            // diagonal entry of K(b) is -1 here
            g.push(g0j * g0 - q[j]);
        }
    }
    g
}

/// The KKT matrix K(b): a copy of G with K[0,j] = 0 and K[j,j] = -1 on
/// inactive components.
pub fn kkt_matrix<F: Scalar>(gram: &GramSystem<F>, active: &[bool]) -> Mat<F> {
    let l = gram.l();
    assert_eq!(active.len(), l);
    let mut k = gram.g().clone();
    for j in 1..=l {
        if !active[j - 1] {
            k[(0, j)] = F::zero();
            k[(j, j)] = -F::one();
        }
    }
    k
}

/// Analytic inverse of K(b) from the Banachiewicz formula over the arrow
/// structure (diagonal block D_b plus rank-one coupling through row/column 0).
pub fn kkt_matrix_inverse<F: Scalar>(gram: &GramSystem<F>, active: &[bool]) -> Mat<F> {
    let l = gram.l();
    assert_eq!(active.len(), l);
    let diag = |j: usize| if active[j - 1] { gram.norm_quad(j) } else { -F::one() };
    let mut phi = count::<F>(gram.n_star());
    for j in 1..=l {
        if active[j - 1] {
            let g0j = gram.norm_sq(j);
            phi = phi - g0j * g0j / diag(j);
        }
    }
    let inv_phi = F::one() / phi;
    let mut inv = Mat::zeros(l + 1, l + 1);
    inv[(0, 0)] = inv_phi;
    for j in 1..=l {
        let row0 = if active[j - 1] {
            gram.norm_sq(j) / diag(j)
        } else {
            F::zero()
        };
        inv[(0, j)] = -inv_phi * row0;
        inv[(j, 0)] = -inv_phi * gram.norm_sq(j) / diag(j);
        for i in 1..=l {
            let coupling = {
                let col_i = if active[i - 1] {
                    gram.norm_sq(i) / diag(i)
                } else {
                    F::zero()
                };
                inv_phi * (gram.norm_sq(j) / diag(j)) * col_i
            };
            inv[(j, i)] = coupling;
            if i == j {
                inv[(j, i)] += F::one() / diag(j);
            }
        }
    }
    inv
}

// ---------------------------------------------------------------------------
// (RE)ML estimation and log-likelihoods
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodVariant {
    Ml,
    Reml,
}

/// (RE)ML estimate in a Gaussian orthogonal design. The maximizer equals the
/// non-negative (M)DOOLSE solution almost surely, so the KKT scan computes
/// it; the matching log-likelihood is evaluated at the solution.
#[derive(Debug, Clone, PartialEq)]
pub struct RemleEstimate<F> {
    pub solution: KktSolution<F>,
    /// Log-likelihood at the estimate; `None` in the degenerate case, where
    /// the maximum-likelihood estimate does not exist and the KKT solution
    /// extends it.
    pub log_likelihood: Option<F>,
    /// False when the residual lies in the span of V.
    pub exists: bool,
}

pub fn estimate_remle<F: Scalar>(
    cache: &ProjectionCache<F>,
    design: &DesignSet<F>,
    variant: LikelihoodVariant,
) -> Result<RemleEstimate<F>> {
    let doolse_variant = match variant {
        LikelihoodVariant::Ml => DoolseVariant::Doolse,
        LikelihoodVariant::Reml => DoolseVariant::Mdoolse,
    };
    let gram = crate::projection::gram_system(cache, design, doolse_variant)?;
    let solution = estimate_nn_doolse(&gram)?;
    let log_likelihood = if solution.degenerate {
        None
    } else {
        Some(loglik(cache, design, &solution.nu_hat, variant)?)
    };
    let exists = !solution.degenerate;
    Ok(RemleEstimate { solution, log_likelihood, exists })
}

/// ML or REML log-likelihood at the given variances (up to the usual
/// additive constant -n/2 ln 2 pi, which is omitted).
///
/// Orthogonal designs use the closed-form determinant and quadratic form in
/// the dual variables:
/// ln det Sigma^{-1} = (n-l) ln d_0 + sum_j ln(d_0 - d_j |v_j|^2),
/// |eps|^2_{Sigma^{-1}} = d_0 eps'eps - sum_j d_j (eps'v_j)^2.
/// General designs evaluate the same quantities through the l x l matrix
/// H* = V'V D + nu_0 I, so a singular D needs no special casing.
pub fn loglik<F: Scalar>(
    cache: &ProjectionCache<F>,
    design: &DesignSet<F>,
    nu: &VarianceComponents<F>,
    variant: LikelihoodVariant,
) -> Result<F> {
    nu.check_dimension(design.l())?;
    if nu.nu0() <= F::zero() {
        return Err(Error::NonPositiveDefinite);
    }
    let half = real::<F>(0.5);
    let (n, k, l) = (design.n(), design.k(), design.l());

    if design.is_orthogonal() {
        let d = nu_to_d(nu, design)?;
        let d0 = d.d0();
        let norms = design.column_norms_sq();
        let mut log_det_sigma_inv = count::<F>(n - l) * d0.ln();
        let mut quad = d0 * cache.eps_sq();
        for j in 0..l {
            let gap = d0 - d.random()[j] * norms[j];
            if gap <= F::zero() {
                return Err(Error::NonPositiveDefinite);
            }
            log_det_sigma_inv = log_det_sigma_inv + gap.ln();
            let c = cache.vt_eps()[j];
            quad = quad - d.random()[j] * c * c;
        }
        let lm = half * (log_det_sigma_inv - quad);
        return Ok(match variant {
            LikelihoodVariant::Ml => lm,
            LikelihoodVariant::Reml => {
                let log_det_ftf = Cholesky::factor(cache.ftf())
                    .ok_or(Error::SingularSystem)?
                    .log_det();
                lm - half * (count::<F>(k) * d0.ln() + log_det_ftf)
            }
        });
    }

    // General path: Sigma^{-1} = (I - V D H*^{-1} V') / nu_0 with
    // H* = V'V D + nu_0 I, and ln det Sigma = (n-l) ln nu_0 + ln det H*.
    let nu0 = nu.nu0();
    let d = nu.effective_random();
    let mut h_star = cache.gram_v().scale_cols(&d);
    h_star.add_diagonal(nu0);
    let lu = Lu::factor(&h_star).map_err(|_| Error::NonPositiveDefinite)?;
    if lu.det_sign() <= 0 {
        return Err(Error::NonPositiveDefinite);
    }
    let log_det_sigma = count::<F>(n - l) * nu0.ln() + lu.log_abs_det();

    // A = D H*^{-1}
    let a = lu.inverse().scale_rows(&d);
    let u = cache.vt_eps();
    let au = a.matvec(u);
    let mut quad = (cache.eps_sq() - crate::scalar::dot(u, &au)) / nu0;

    let mut log_det_fsf = F::zero();
    if k > 0 {
        // F'Sigma^{-1}F = (F'F - F'V A V'F)/nu_0, F'Sigma^{-1}eps likewise.
        let ftv = cache.ftv();
        let fsf = cache
            .ftf()
            .sub(&ftv.matmul(&a.matmul(&ftv.transpose())))
            .scale_cols(&vec![F::one() / nu0; k]);
        let chol = Cholesky::factor(&fsf).ok_or(Error::NonPositiveDefinite)?;
        let ftv_au = ftv.matvec(&au);
        let fse: Vec<F> = cache
            .ft_eps()
            .iter()
            .zip(ftv_au.iter())
            .map(|(&fe, &c)| (fe - c) / nu0)
            .collect();
        let solved = chol.solve(&fse);
        quad = quad - crate::scalar::dot(&fse, &solved);
        log_det_fsf = chol.log_det();
    }

    let lm = half * (-log_det_sigma - quad);
    Ok(match variant {
        LikelihoodVariant::Ml => lm,
        LikelihoodVariant::Reml => lm - half * log_det_fsf,
    })
}

// ---------------------------------------------------------------------------
// Uniform result container for front ends
// ---------------------------------------------------------------------------

/// Estimator labels as exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ne,
    Doolse,
    Mdoolse,
    NnDoolse,
    NnMdoolse,
    Mle,
    Remle,
    EblupNe,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ne => "ne",
            Method::Doolse => "doolse",
            Method::Mdoolse => "mdoolse",
            Method::NnDoolse => "nn-doolse",
            Method::NnMdoolse => "nn-mdoolse",
            Method::Mle => "mle",
            Method::Remle => "remle",
            Method::EblupNe => "eblupne",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One estimator run: label, estimate and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult<F> {
    pub method: Method,
    pub estimate: Vec<F>,
    /// Projection estimates outside the parameter space carry this flag.
    pub has_negative: bool,
    /// Residual in span(V): nu_0 = 0 boundary solution.
    pub degenerate: bool,
    pub active_pattern: Option<Vec<bool>>,
    pub systems_tried: Option<u32>,
    pub lagrange: Option<Vec<F>>,
    pub boundary_tie: bool,
    pub log_likelihood: Option<F>,
}

impl<F: Scalar> EstimationResult<F> {
    pub fn from_ne(nu: &VarianceComponents<F>) -> Self {
        EstimationResult {
            method: Method::Ne,
            estimate: nu.as_slice().to_vec(),
            has_negative: false,
            degenerate: nu.is_degenerate(),
            active_pattern: None,
            systems_tried: None,
            lagrange: None,
            boundary_tie: false,
            log_likelihood: None,
        }
    }

    pub fn from_projection(method: Method, est: &UnconstrainedEstimate<F>) -> Self {
        EstimationResult {
            method,
            estimate: est.values.clone(),
            has_negative: est.has_negative,
            degenerate: false,
            active_pattern: None,
            systems_tried: None,
            lagrange: None,
            boundary_tie: false,
            log_likelihood: None,
        }
    }

    pub fn from_kkt(method: Method, sol: &KktSolution<F>, log_likelihood: Option<F>) -> Self {
        EstimationResult {
            method,
            estimate: sol.nu_hat.as_slice().to_vec(),
            has_negative: false,
            degenerate: sol.degenerate,
            active_pattern: Some(sol.active_pattern.clone()),
            systems_tried: Some(sol.systems_tried),
            lagrange: Some(sol.lagrange.clone()),
            boundary_tie: sol.boundary_tie,
            log_likelihood,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Frequency, ModelSpec, TermSpec};
    use crate::projection::{build_projection, gram_system};

    fn gram_from_example(q: Vec<f64>) -> GramSystem<f64> {
        let g: Mat<f64> = Mat::from_rows(&[vec![3.0, 1.0], vec![1.0, 1.0]]);
        GramSystem::new(g, q, 3).unwrap()
    }

    #[test]
    fn ne_direct_evaluation() {
        // n = 3, k = 0, l = 1, v = e_1, eps = (2,1,1): nu = ((6-4)/2, 4/1) = (1, 4)
        let design: DesignSet<f64> =
            DesignSet::from_columns(vec![], vec![vec![1.0, 0.0, 0.0]]).unwrap();
        let cache = build_projection(&design, &[2.0, 1.0, 1.0]).unwrap();
        let nu = estimate_ne(&cache, &design).unwrap();
        assert!((nu.as_slice()[0] - 1.0).abs() < 1e-14);
        assert!((nu.as_slice()[1] - 4.0).abs() < 1e-14);
        assert!(!nu.is_degenerate());
    }

    #[test]
    fn ne_orthogonal_residual_gives_zero_components() {
        // eps orthogonal to v: nu_j = 0, nu_0 = eps'eps/(n-k-l)
        let design: DesignSet<f64> =
            DesignSet::from_columns(vec![], vec![vec![1.0, 0.0, 0.0, 0.0]]).unwrap();
        let cache = build_projection(&design, &[0.0, 1.0, -1.0, 2.0]).unwrap();
        let nu = estimate_ne(&cache, &design).unwrap();
        assert_eq!(nu.as_slice()[1], 0.0);
        assert!((nu.as_slice()[0] - 6.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn ne_degenerate_residual_flagged() {
        // eps in span(v): Bessel equality, nu_0 = 0 exactly
        let design: DesignSet<f64> =
            DesignSet::from_columns(vec![], vec![vec![1.0, 1.0, 0.0, 0.0]]).unwrap();
        let cache = build_projection(&design, &[3.0, 3.0, 0.0, 0.0]).unwrap();
        let nu = estimate_ne(&cache, &design).unwrap();
        assert!(nu.is_degenerate());
        assert_eq!(nu.as_slice()[0], 0.0);
        assert!((nu.as_slice()[1] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn projection_solve_examples() {
        let sol = estimate_projection(&gram_from_example(vec![6.0, 4.0]));
        assert!((sol.values[0] - 1.0).abs() < 1e-14);
        assert!((sol.values[1] - 3.0).abs() < 1e-14);
        assert!(!sol.has_negative);

        let sol = estimate_projection(&gram_from_example(vec![6.0, 0.0]));
        assert!((sol.values[0] - 3.0).abs() < 1e-14);
        assert!((sol.values[1] + 3.0).abs() < 1e-14);
        assert!(sol.has_negative);
    }

    #[test]
    fn projection_consistency() {
        // q = G (c, 0)' must return (c, 0)'
        let g: Mat<f64> = Mat::from_rows(&[vec![5.0, 2.0], vec![2.0, 4.0]]);
        let gram = GramSystem::new(g, vec![5.0 * 2.5, 2.0 * 2.5], 5).unwrap();
        let sol = estimate_projection(&gram);
        assert!((sol.values[0] - 2.5).abs() < 1e-12);
        assert!(sol.values[1].abs() < 1e-12);
    }

    #[test]
    fn kkt_interior_solution_in_one_system() {
        let sol = estimate_nn_doolse(&gram_from_example(vec![6.0, 4.0])).unwrap();
        assert_eq!(sol.systems_tried, 1);
        assert_eq!(sol.active_pattern, vec![true]);
        assert!((sol.nu_hat.as_slice()[0] - 1.0).abs() < 1e-14);
        assert!((sol.nu_hat.as_slice()[1] - 3.0).abs() < 1e-14);
        assert_eq!(sol.lagrange, vec![0.0]);
        assert!(!sol.degenerate);
    }

    #[test]
    fn kkt_active_constraint_solution() {
        // Hand-solved K((0)) g = q: 3 g0 = 6, lambda = g0 * 1 - 0 = 2
        let sol = estimate_nn_doolse(&gram_from_example(vec![6.0, 0.0])).unwrap();
        assert_eq!(sol.systems_tried, 2);
        assert_eq!(sol.active_pattern, vec![false]);
        assert!((sol.nu_hat.as_slice()[0] - 2.0).abs() < 1e-14);
        assert_eq!(sol.nu_hat.as_slice()[1], 0.0);
        assert!((sol.lagrange[0] - 2.0).abs() < 1e-14);
        // complementary slackness exact
        assert_eq!(sol.nu_hat.as_slice()[1] * sol.lagrange[0], 0.0);
    }

    #[test]
    fn kkt_unconstrained_when_signal_dominates() {
        // Large (eps'v_j)^2 relative to eps'eps: all-ones pattern feasible.
        let g: Mat<f64> = Mat::from_rows(&[
            vec![10.0, 2.0, 3.0],
            vec![2.0, 4.0, 0.0],
            vec![3.0, 0.0, 9.0],
        ]);
        let gram = GramSystem::new(g, vec![100.0, 80.0, 90.0], 10).unwrap();
        let sol = estimate_nn_doolse(&gram).unwrap();
        assert_eq!(sol.active_pattern, vec![true, true]);
        assert_eq!(sol.systems_tried, 1);
        // matches the projection estimate when interior
        let proj = estimate_projection(&gram);
        for (a, b) in sol.nu_hat.as_slice().iter().zip(proj.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kkt_degenerate_residual_returns_trivial_solution() {
        // eps = 2 v: q = (4|v|^2... defect 0)
        let design: DesignSet<f64> =
            DesignSet::from_columns(vec![], vec![vec![1.0, 2.0, 0.0, 0.0]]).unwrap();
        let cache = build_projection(&design, &[2.0, 4.0, 0.0, 0.0]).unwrap();
        let gram = gram_system(&cache, &design, DoolseVariant::Doolse).unwrap();
        let sol = estimate_nn_doolse(&gram).unwrap();
        assert!(sol.degenerate);
        assert_eq!(sol.systems_tried, 0);
        assert_eq!(sol.nu_hat.as_slice()[0], 0.0);
        assert!((sol.nu_hat.as_slice()[1] - 4.0).abs() < 1e-12);
        assert_eq!(sol.lagrange, vec![0.0]);
    }

    #[test]
    fn pattern_scan_order_descending_popcount() {
        let order: Vec<Vec<bool>> = pattern_scan(2).map(|m| pattern_bits(m, 2)).collect();
        assert_eq!(
            order,
            vec![
                vec![true, true],
                vec![false, true],
                vec![true, false],
                vec![false, false],
            ]
        );
        assert_eq!(pattern_scan(3).count(), 8);
        assert_eq!(pattern_scan(0).count(), 1);
    }

    #[test]
    fn kkt_matrix_matches_table_construction() {
        let gram = gram_from_example(vec![6.0, 0.0]);
        let k = kkt_matrix(&gram, &[false]);
        assert_eq!(k[(0, 0)], 3.0);
        assert_eq!(k[(0, 1)], 0.0);
        assert_eq!(k[(1, 0)], 1.0);
        assert_eq!(k[(1, 1)], -1.0);
        // analytic inverse really inverts K(b)
        let inv = kkt_matrix_inverse(&gram, &[false]);
        let prod = k.matmul(&inv);
        assert!(prod.max_abs_diff(&Mat::identity(2)) < 1e-14);
    }

    #[test]
    fn remle_equals_nn_doolse_bitwise() {
        let spec = ModelSpec::new(
            24,
            vec![TermSpec::Constant],
            vec![
                TermSpec::Cosine(Frequency::Harmonic(3)),
                TermSpec::Sine(Frequency::Harmonic(5)),
            ],
        )
        .unwrap();
        let design: DesignSet<f64> = spec.realize().unwrap();
        let x: Vec<f64> = (1..=24)
            .map(|t| {
                let t = t as f64;
                1.0 + 0.9 * (2.0 * std::f64::consts::PI * 3.0 * t / 24.0).cos() + 0.1 * t.sin()
            })
            .collect();
        let cache = build_projection(&design, &x).unwrap();

        let mle = estimate_remle(&cache, &design, LikelihoodVariant::Ml).unwrap();
        let gram = gram_system(&cache, &design, DoolseVariant::Doolse).unwrap();
        let nn = estimate_nn_doolse(&gram).unwrap();
        assert_eq!(mle.solution.nu_hat, nn.nu_hat);
        assert!(mle.exists);

        let remle = estimate_remle(&cache, &design, LikelihoodVariant::Reml).unwrap();
        let gram_m = gram_system(&cache, &design, DoolseVariant::Mdoolse).unwrap();
        let nn_m = estimate_nn_doolse(&gram_m).unwrap();
        assert_eq!(remle.solution.nu_hat, nn_m.nu_hat);
    }

    #[test]
    fn loglik_identity_covariance() {
        // nu = (1, 0), k = 0: Sigma = I, ln det = 0, l_M = -eps'eps/2
        let design: DesignSet<f64> =
            DesignSet::from_columns(vec![], vec![vec![1.0, 0.0, 0.0]]).unwrap();
        let x = [1.0, 2.0, -1.0];
        let cache = build_projection(&design, &x).unwrap();
        let nu = VarianceComponents::new(vec![1.0, 0.0]).unwrap();
        let lm = loglik(&cache, &design, &nu, LikelihoodVariant::Ml).unwrap();
        assert!((lm + cache.eps_sq() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn reml_ml_difference_is_trend_determinant_term() {
        let spec = ModelSpec::new(
            16,
            vec![TermSpec::Constant, TermSpec::Cosine(Frequency::Harmonic(1))],
            vec![TermSpec::Cosine(Frequency::Harmonic(4))],
        )
        .unwrap();
        let design: DesignSet<f64> = spec.realize().unwrap();
        let x: Vec<f64> = (1..=16).map(|t| (t as f64 * 0.7).sin() + 0.3).collect();
        let cache = build_projection(&design, &x).unwrap();
        let nu = VarianceComponents::new(vec![0.8, 0.4]).unwrap();
        let lm = loglik(&cache, &design, &nu, LikelihoodVariant::Ml).unwrap();
        let lr = loglik(&cache, &design, &nu, LikelihoodVariant::Reml).unwrap();
        let d0: f64 = 1.0 / 0.8;
        // ln det F'F = ln(16 * 8) for the constant and cosine columns
        let log_det_ftf = (16.0f64 * 8.0).ln();
        let expected = -0.5 * (2.0 * d0.ln() + log_det_ftf);
        assert!((lr - lm - expected).abs() < 1e-12);
    }

    #[test]
    fn bijection_fixes_zero_components() {
        let design: DesignSet<f64> =
            DesignSet::from_columns(vec![], vec![vec![1.0, 0.0, 0.0]]).unwrap();
        let nu = VarianceComponents::new(vec![1.0, 0.0]).unwrap();
        let d = nu_to_d(&nu, &design).unwrap();
        assert_eq!(d.as_slice(), &[1.0, 0.0]);
        // nu_0 = 1, nu_j = 1, |v_j|^2 = 1: d = (1, 1/2)
        let nu = VarianceComponents::new(vec![1.0, 1.0]).unwrap();
        let d = nu_to_d(&nu, &design).unwrap();
        assert!((d.as_slice()[1] - 0.5).abs() < 1e-15);
        let back = d_to_nu(&d, &design).unwrap();
        assert!((back.as_slice()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dual_domain_violations_rejected() {
        let design: DesignSet<f64> =
            DesignSet::from_columns(vec![], vec![vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(DualVariables::new(vec![1.0, 2.0], design.column_norms_sq()).is_err());
        assert!(DualVariables::new(vec![-1.0, 0.0], design.column_norms_sq()).is_err());
        assert!(DualVariables::new(vec![1.0, -0.1], design.column_norms_sq()).is_err());
    }

    #[test]
    fn single_precision_pipeline_works() {
        let spec = ModelSpec::new(
            16,
            vec![TermSpec::Constant],
            vec![TermSpec::Cosine(Frequency::Harmonic(2)), TermSpec::Sine(Frequency::Harmonic(3))],
        )
        .unwrap();
        let design: DesignSet<f32> = spec.realize().unwrap();
        let x: Vec<f32> = (1..=16)
            .map(|t| 1.0 + (0.9 * t as f32).sin() + 0.5 * (2.0 * std::f32::consts::PI * 2.0 * t as f32 / 16.0).cos())
            .collect();
        let cache = build_projection(&design, &x).unwrap();
        let ne = estimate_ne(&cache, &design).unwrap();
        assert!(ne.as_slice().iter().all(|v| v.is_finite() && *v >= 0.0));
        let gram = gram_system(&cache, &design, DoolseVariant::Mdoolse).unwrap();
        let sol = estimate_nn_doolse(&gram).unwrap();
        assert!(sol.nu_hat.as_slice()[0] >= 0.0);
        let est = estimate_remle(&cache, &design, LikelihoodVariant::Reml).unwrap();
        assert_eq!(est.solution.nu_hat, sol.nu_hat);
        assert!(est.log_likelihood.unwrap().is_finite());
    }

    #[test]
    fn variance_components_invariants() {
        assert!(VarianceComponents::new(vec![0.0, 1.0]).is_err());
        assert!(VarianceComponents::new(vec![1.0, -0.5]).is_err());
        assert!(VarianceComponents::new(vec![f64::NAN]).is_err());
        let nu = VarianceComponents::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(nu.l(), 1);
        // effective zeroes
        let nu = VarianceComponents::new(vec![1.0, 1e-20]).unwrap();
        assert_eq!(nu.effective_random(), vec![0.0]);
    }
}
