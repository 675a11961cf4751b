//! Shared helpers for the integration suites: random model generators and
//! independent oracles (dense linear algebra via nalgebra, a derivative-free
//! likelihood maximizer). Everything here is deliberately implemented apart
//! from the library's own computational paths.

#![allow(dead_code)]

use fdslrm::{DesignSet, Frequency, ModelSpec, TermSpec, VarianceComponents};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

/// Random orthogonal harmonic model with n in `n_range`, k <= k_max trend
/// terms and 1..=l_max random terms.
pub fn random_orthogonal_model(
    rng: &mut impl Rng,
    n_range: std::ops::RangeInclusive<usize>,
    k_max: usize,
    l_max: usize,
) -> ModelSpec {
    loop {
        let n = rng.random_range(n_range.clone());
        let k = rng.random_range(0..=k_max);
        let l = rng.random_range(1..=l_max);
        if n <= k + l {
            continue;
        }
        let mut candidates: Vec<TermSpec> = vec![TermSpec::Constant];
        for h in 1..=(n / 2) as u32 {
            candidates.push(TermSpec::Cosine(Frequency::Harmonic(h)));
            if 2 * h as usize != n {
                candidates.push(TermSpec::Sine(Frequency::Harmonic(h)));
            }
        }
        if candidates.len() < k + l {
            continue;
        }
        candidates.shuffle(rng);
        let trend: Vec<TermSpec> = candidates[..k].to_vec();
        let random: Vec<TermSpec> = candidates[k..k + l].to_vec();
        if let Ok(spec) = ModelSpec::new(n, trend, random) {
            return spec;
        }
    }
}

/// Random dense (generally non-orthogonal) design with Gaussian columns.
pub fn random_dense_design(
    rng: &mut impl Rng,
    n: usize,
    k: usize,
    l: usize,
) -> DesignSet<f64> {
    loop {
        let col = |rng: &mut dyn RngCore| -> Vec<f64> {
            (0..n).map(|_| normal(rng)).collect()
        };
        let f: Vec<Vec<f64>> = (0..k).map(|_| col(rng)).collect();
        let v: Vec<Vec<f64>> = (0..l).map(|_| col(rng)).collect();
        if let Ok(d) = DesignSet::from_columns(f, v) {
            return d;
        }
    }
}

/// Standard normal draw via Box-Muller, independent of rand_distr.
pub fn normal(rng: &mut dyn RngCore) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-16);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random valid variance components; each random component is exactly zero
/// with probability `p_zero`.
pub fn random_nu(rng: &mut impl Rng, l: usize, p_zero: f64) -> VarianceComponents<f64> {
    let mut nu = vec![rng.random_range(0.05..2.0)];
    for _ in 0..l {
        if rng.random::<f64>() < p_zero {
            nu.push(0.0);
        } else {
            nu.push(rng.random_range(0.0..3.0));
        }
    }
    VarianceComponents::new(nu).unwrap_or_else(|_| VarianceComponents::new(vec![1.0; l + 1]).unwrap())
}

/// Gaussian series x = F beta + V y + w at the given true nu.
pub fn gaussian_series(
    design: &DesignSet<f64>,
    beta: &[f64],
    nu: &VarianceComponents<f64>,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let n = design.n();
    let mut x: Vec<f64> = (0..n).map(|_| nu.nu0().sqrt() * normal(rng)).collect();
    for (f, &b) in design.f_cols().iter().zip(beta.iter()) {
        for (xi, &fv) in x.iter_mut().zip(f.iter()) {
            *xi += b * fv;
        }
    }
    for (v, &nuj) in design.v_cols().iter().zip(nu.random().iter()) {
        let y = nuj.sqrt() * normal(rng);
        for (xi, &vv) in x.iter_mut().zip(v.iter()) {
            *xi += y * vv;
        }
    }
    x
}

// ---------------------------------------------------------------------------
// Dense nalgebra oracles
// ---------------------------------------------------------------------------

pub fn na_from_cols(cols: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

pub fn na_from_mat(m: &fdslrm::Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// OLS residuals through a QR decomposition.
pub fn qr_residuals(f_cols: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if f_cols.is_empty() {
        return x.to_vec();
    }
    let f = na_from_cols(f_cols, n);
    let xv = DVector::from_column_slice(x);
    let qr = f.clone().qr();
    let qtx = qr.q().transpose() * &xv;
    let beta = qr.r().solve_upper_triangular(&qtx).expect("full column rank");
    let fitted = &f * beta;
    (0..n).map(|i| x[i] - fitted[i]).collect()
}

/// Dense solve of the full (k+l) x (k+l) mixed-model block system
/// [[F'F, F'V], [V'F, V'V + nu_0 D^{-1}]] (beta, y) = (F'x, V'x).
/// Requires every nu_j > 0.
pub fn dense_block_mme(
    design: &DesignSet<f64>,
    x: &[f64],
    nu: &VarianceComponents<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let n = design.n();
    let (k, l) = (design.k(), design.l());
    let f = na_from_cols(design.f_cols(), n);
    let v = na_from_cols(design.v_cols(), n);
    let xv = DVector::from_column_slice(x);
    let mut m = DMatrix::zeros(k + l, k + l);
    m.view_mut((0, 0), (k, k)).copy_from(&(f.transpose() * &f));
    m.view_mut((0, k), (k, l)).copy_from(&(f.transpose() * &v));
    m.view_mut((k, 0), (l, k)).copy_from(&(v.transpose() * &f));
    let mut vv = v.transpose() * &v;
    for j in 0..l {
        vv[(j, j)] += nu.nu0() / nu.random()[j];
    }
    m.view_mut((k, k), (l, l)).copy_from(&vv);
    let mut rhs = DVector::zeros(k + l);
    rhs.rows_mut(0, k).copy_from(&(f.transpose() * &xv));
    rhs.rows_mut(k, l).copy_from(&(v.transpose() * &xv));
    let sol = m.lu().solve(&rhs).expect("block system solvable");
    (sol.as_slice()[..k].to_vec(), sol.as_slice()[k..].to_vec())
}

/// Dense Sigma = nu_0 I + V D V'.
pub fn dense_sigma(design: &DesignSet<f64>, nu: &VarianceComponents<f64>) -> DMatrix<f64> {
    let n = design.n();
    let v = na_from_cols(design.v_cols(), n);
    let d = DMatrix::from_fn(design.l(), design.l(), |i, j| {
        if i == j {
            nu.random()[i]
        } else {
            0.0
        }
    });
    let mut sigma = &v * d * v.transpose();
    for i in 0..n {
        sigma[(i, i)] += nu.nu0();
    }
    sigma
}

/// Dense evaluation of the ML / REML log-likelihood (up to the -n/2 ln 2 pi
/// constant) from the full n x n covariance matrix.
pub fn dense_loglik(
    design: &DesignSet<f64>,
    x: &[f64],
    nu: &VarianceComponents<f64>,
    reml: bool,
) -> f64 {
    let n = design.n();
    let k = design.k();
    let sigma = dense_sigma(design, nu);
    let chol = sigma.clone().cholesky().expect("Sigma positive definite");
    let log_det_sigma = 2.0 * (0..n).map(|i| chol.l()[(i, i)].ln()).sum::<f64>();
    let sigma_inv = chol.inverse();
    let xv = DVector::from_column_slice(x);
    let quad_and_logdet = if k == 0 {
        ((&sigma_inv * &xv).dot(&xv), 0.0)
    } else {
        let f = na_from_cols(design.f_cols(), n);
        let fsf = f.transpose() * &sigma_inv * &f;
        let fse = f.transpose() * &sigma_inv * &xv;
        let beta = fsf.clone().lu().solve(&fse).expect("GLS solvable");
        let r = &xv - &f * beta;
        let log_det_fsf = fsf.determinant().ln();
        ((&sigma_inv * &r).dot(&r), log_det_fsf)
    };
    let lm = 0.5 * (-log_det_sigma - quad_and_logdet.0);
    if reml {
        lm - 0.5 * quad_and_logdet.1
    } else {
        lm
    }
}

// ---------------------------------------------------------------------------
// Derivative-free (RE)ML maximizer over the convex dual problem
// ---------------------------------------------------------------------------

/// Inputs of the dual problem: minimize over d
///   -(n*-l) ln d0 - sum_j ln(d0 - d_j s_j) + d0 q0 - sum_j d_j q_j
/// subject to d_j >= 0, d0 > d_j s_j, where s_j = |v_j|^2,
/// q0 = eps'eps and q_j = (eps'v_j)^2.
pub struct DualProblem {
    pub n_star: usize,
    pub norms_sq: Vec<f64>,
    pub q0: f64,
    pub qj: Vec<f64>,
}

impl DualProblem {
    /// For fixed d0, each d_j minimizes independently:
    /// d_j = max(0, d0/s_j - 1/q_j) (0 when q_j = 0).
    fn dj_opt(&self, d0: f64) -> Vec<f64> {
        self.norms_sq
            .iter()
            .zip(self.qj.iter())
            .map(|(&s, &q)| {
                if q <= 0.0 {
                    0.0
                } else {
                    (d0 / s - 1.0 / q).max(0.0)
                }
            })
            .collect()
    }

    fn objective(&self, d0: f64, dj: &[f64]) -> f64 {
        let l = self.norms_sq.len();
        let mut val = -((self.n_star - l) as f64) * d0.ln() + d0 * self.q0;
        for j in 0..l {
            let gap = d0 - dj[j] * self.norms_sq[j];
            if gap <= 0.0 {
                return f64::INFINITY;
            }
            val += -gap.ln() - dj[j] * self.qj[j];
        }
        val
    }

    fn profile(&self, d0: f64) -> f64 {
        self.objective(d0, &self.dj_opt(d0))
    }

    /// Golden-section search on ln d0; the profiled objective is unimodal.
    /// Returns the maximizing variance components (nu_0, nu_1..nu_l).
    pub fn maximize(&self) -> Vec<f64> {
        let scale = (self.n_star as f64) / self.q0.max(1e-300);
        let mut lo = (1e-8 * scale).ln();
        let mut hi = (1e10 * scale).ln();
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let mut a = hi - phi * (hi - lo);
        let mut b = lo + phi * (hi - lo);
        let mut fa = self.profile(a.exp());
        let mut fb = self.profile(b.exp());
        for _ in 0..400 {
            if fa < fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - phi * (hi - lo);
                fa = self.profile(a.exp());
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + phi * (hi - lo);
                fb = self.profile(b.exp());
            }
        }
        let d0 = (0.5 * (lo + hi)).exp();
        let dj = self.dj_opt(d0);
        let mut nu = vec![1.0 / d0];
        for (j, &d) in dj.iter().enumerate() {
            nu.push(d / (d0 * (d0 - d * self.norms_sq[j])));
        }
        nu
    }
}

/// Builds the dual problem from library-level inputs.
pub fn dual_problem(
    design: &DesignSet<f64>,
    cache: &fdslrm::ProjectionCache<f64>,
    reml: bool,
) -> DualProblem {
    DualProblem {
        n_star: if reml { design.n() - design.k() } else { design.n() },
        norms_sq: design.column_norms_sq().to_vec(),
        q0: cache.eps_sq(),
        qj: cache.vt_eps().iter().map(|&c| c * c).collect(),
    }
}

/// Euclidean norm of a slice.
pub fn norm(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Max-abs difference of two slices.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
