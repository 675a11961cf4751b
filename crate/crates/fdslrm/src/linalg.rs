//! Small dense linear algebra used throughout the crate.
//!
//! Every matrix handled here is tiny (k x k, l x l or (l+1) x (l+1) with k, l
//! in the single digits), so plain row-major storage with partial-pivot LU and
//! Cholesky factorizations is all that is needed. Series-length objects are
//! kept as plain vectors; nothing in this module allocates O(n^2) memory.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    nrows: usize,
    ncols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Mat { nrows, ncols, data: vec![F::zero(); nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn diagonal(d: &[F]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        Mat { nrows, ncols, data: rows.concat() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.ncols, rhs.nrows, "dimension mismatch");
        let mut out = Self::zeros(self.nrows, rhs.ncols);
        for i in 0..self.nrows {
            for p in 0..self.ncols {
                let a = self[(i, p)];
                if a == F::zero() {
                    continue;
                }
                for j in 0..rhs.ncols {
                    out[(i, j)] += a * rhs[(p, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(self.ncols, v.len(), "dimension mismatch");
        (0..self.nrows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Returns `self * diag(d)`.
    pub fn scale_cols(&self, d: &[F]) -> Self {
        assert_eq!(self.ncols, d.len());
        Self::from_fn(self.nrows, self.ncols, |i, j| self[(i, j)] * d[j])
    }

    /// Returns `diag(d) * self`.
    pub fn scale_rows(&self, d: &[F]) -> Self {
        assert_eq!(self.nrows, d.len());
        Self::from_fn(self.nrows, self.ncols, |i, j| d[i] * self[(i, j)])
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        Self::from_fn(self.nrows, self.ncols, |i, j| self[(i, j)] + rhs[(i, j)])
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        Self::from_fn(self.nrows, self.ncols, |i, j| self[(i, j)] - rhs[(i, j)])
    }

    pub fn add_diagonal(&mut self, c: F) {
        let n = self.nrows.min(self.ncols);
        for i in 0..n {
            self[(i, i)] += c;
        }
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |acc, &x| acc.max(x.abs()))
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> F {
        self.sub(rhs).max_abs()
    }
}

impl<F> Index<(usize, usize)> for Mat<F> {
    type Output = F;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &F {
        debug_assert!(i < self.nrows && j < self.ncols);
        &self.data[i * self.ncols + j]
    }
}

impl<F> IndexMut<(usize, usize)> for Mat<F> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        debug_assert!(i < self.nrows && j < self.ncols);
        &mut self.data[i * self.ncols + j]
    }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<F> {
    lu: Mat<F>,
    perm: Vec<usize>,
    sign: i8,
}

impl<F: Scalar> Lu<F> {
    pub fn factor(a: &Mat<F>) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols(), "LU needs a square matrix");
        let n = a.nrows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1i8;
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_val = lu[(col, col)].abs();
            for r in col + 1..n {
                let v = lu[(r, col)].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val == F::zero() {
                return Err(Error::SingularSystem);
            }
            if pivot_row != col {
                for j in 0..n {
                    let tmp = lu[(col, j)];
                    lu[(col, j)] = lu[(pivot_row, j)];
                    lu[(pivot_row, j)] = tmp;
                }
                perm.swap(col, pivot_row);
                sign = -sign;
            }
            let inv_pivot = F::one() / lu[(col, col)];
            for r in col + 1..n {
                let factor = lu[(r, col)] * inv_pivot;
                lu[(r, col)] = factor;
                for j in col + 1..n {
                    let sub = factor * lu[(col, j)];
                    lu[(r, j)] -= sub;
                }
            }
        }
        Ok(Lu { lu, perm, sign })
    }

    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.lu.nrows();
        assert_eq!(b.len(), n);
        let mut x: Vec<F> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for j in 0..i {
                let sub = self.lu[(i, j)] * x[j];
                x[i] = x[i] - sub;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let sub = self.lu[(i, j)] * x[j];
                x[i] = x[i] - sub;
            }
            x[i] = x[i] / self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Mat<F> {
        let n = self.lu.nrows();
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![F::zero(); n];
        for j in 0..n {
            e[j] = F::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
            e[j] = F::zero();
        }
        inv
    }

    pub fn log_abs_det(&self) -> F {
        let n = self.lu.nrows();
        (0..n).fold(F::zero(), |acc, i| acc + self.lu[(i, i)].abs().ln())
    }

    pub fn det_sign(&self) -> i8 {
        let n = self.lu.nrows();
        let mut sign = self.sign;
        for i in 0..n {
            if self.lu[(i, i)] < F::zero() {
                sign = -sign;
            }
        }
        sign
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<F> {
    l: Mat<F>,
}

impl<F: Scalar> Cholesky<F> {
    /// Returns `None` when the matrix is not (numerically) positive definite.
    pub fn factor(a: &Mat<F>) -> Option<Self> {
        assert_eq!(a.nrows(), a.ncols(), "Cholesky needs a square matrix");
        let n = a.nrows();
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[(i, j)];
                for p in 0..j {
                    s = s - l[(i, p)] * l[(j, p)];
                }
                if i == j {
                    if s <= F::zero() {
                        return None;
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Some(Cholesky { l })
    }

    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.l.nrows();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in 0..n {
            for j in 0..i {
                let sub = self.l[(i, j)] * x[j];
                x[i] = x[i] - sub;
            }
            x[i] = x[i] / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let sub = self.l[(j, i)] * x[j];
                x[i] = x[i] - sub;
            }
            x[i] = x[i] / self.l[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Mat<F> {
        let n = self.l.nrows();
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![F::zero(); n];
        for j in 0..n {
            e[j] = F::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
            e[j] = F::zero();
        }
        inv
    }

    pub fn log_det(&self) -> F {
        let n = self.l.nrows();
        let two = F::one() + F::one();
        (0..n).fold(F::zero(), |acc, i| acc + two * self.l[(i, i)].ln())
    }
}

/// Smallest and largest singular values of the matrix whose columns are
/// `cols`, via one-sided Jacobi orthogonalization. Accurate for the small
/// column counts used here; cost is O(n * m^2) per sweep.
pub fn singular_value_extremes<F: Scalar>(cols: &[Vec<F>]) -> (F, F) {
    let m = cols.len();
    if m == 0 {
        return (F::zero(), F::zero());
    }
    let mut c: Vec<Vec<F>> = cols.to_vec();
    let eps = F::epsilon();
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut converged = true;
        for i in 0..m {
            for j in i + 1..m {
                let (ci, cj) = {
                    let (lo, hi) = c.split_at_mut(j);
                    (&mut lo[i], &mut hi[0])
                };
                let a = dot(ci, ci);
                let b = dot(cj, cj);
                let g = dot(ci, cj);
                if a == F::zero() || b == F::zero() {
                    continue;
                }
                if g.abs() <= eps * (a * b).sqrt() {
                    continue;
                }
                converged = false;
                let two = F::one() + F::one();
                let zeta = (b - a) / (two * g);
                let t = {
                    let s = if zeta >= F::zero() { F::one() } else { -F::one() };
                    s / (zeta.abs() + (F::one() + zeta * zeta).sqrt())
                };
                let cs = F::one() / (F::one() + t * t).sqrt();
                let sn = cs * t;
                for row in 0..ci.len() {
                    let x = ci[row];
                    let y = cj[row];
                    ci[row] = cs * x - sn * y;
                    cj[row] = sn * x + cs * y;
                }
            }
        }
        if converged {
            break;
        }
    }
    let mut smin = F::infinity();
    let mut smax = F::zero();
    for col in &c {
        let s = dot(col, col).sqrt();
        smin = smin.min(s);
        smax = smax.max(s);
    }
    (smin, smax)
}
