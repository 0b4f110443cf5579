//! Small dense linear algebra helpers.
//!
//! The upper-level dimension is tiny (d <= 64), so we keep a hand-rolled
//! partially-pivoted LU plus power-iteration spectral estimates instead of
//! pulling in a LAPACK backend.

use crate::error::{Error, Result};
use crate::scalar::{sc, Scalar};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// LU factorization with partial pivoting of a square matrix.
pub struct Lu<T> {
    lu: Array2<T>,
    perm: Vec<usize>,
    /// Sign-less product of pivots; zero means singular.
    min_abs_pivot: T,
}

impl<T: Scalar> Lu<T> {
    /// Factors `a`; fails if a pivot is exactly zero.
    pub fn factor(a: ArrayView2<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::domain("LU requires a square matrix"));
        }
        let mut lu = a.to_owned();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_abs_pivot = T::infinity();
        for col in 0..n {
            // pivot search
            let mut p = col;
            let mut best = lu[[col, col]].abs();
            for r in col + 1..n {
                let v = lu[[r, col]].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(Error::geometry("singular matrix in LU factorization"));
            }
            if p != col {
                perm.swap(col, p);
                for c in 0..n {
                    let tmp = lu[[col, c]];
                    lu[[col, c]] = lu[[p, c]];
                    lu[[p, c]] = tmp;
                }
            }
            min_abs_pivot = min_abs_pivot.min(best);
            let piv = lu[[col, col]];
            for r in col + 1..n {
                let factor = lu[[r, col]] / piv;
                lu[[r, col]] = factor;
                for c in col + 1..n {
                    let upd = lu[[col, c]] * factor;
                    lu[[r, c]] = lu[[r, c]] - upd;
                }
            }
        }
        Ok(Lu {
            lu,
            perm,
            min_abs_pivot,
        })
    }

    pub fn min_abs_pivot(&self) -> T {
        self.min_abs_pivot
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: ArrayView1<T>) -> Array1<T> {
        let n = self.perm.len();
        let mut x = Array1::zeros(n);
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        // forward substitution with unit lower triangle
        for i in 0..n {
            for k in 0..i {
                let upd = self.lu[[i, k]] * x[k];
                x[i] = x[i] - upd;
            }
        }
        // back substitution
        for i in (0..n).rev() {
            for k in i + 1..n {
                let upd = self.lu[[i, k]] * x[k];
                x[i] = x[i] - upd;
            }
            x[i] = x[i] / self.lu[[i, i]];
        }
        x
    }
}

/// Largest singular value of `a`, by power iteration on `a^T a`.
pub fn op_norm<T: Scalar>(a: ArrayView2<T>, tol: f64, max_iters: usize) -> T {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return T::zero();
    }
    let mut v: Array1<T> = Array1::from_shape_fn(n, |i| sc(1.0 + (i as f64 * 0.7).sin()));
    normalize(&mut v);
    let mut lambda = T::zero();
    for _ in 0..max_iters {
        // w = a^T (a v)
        let av = a.dot(&v);
        let mut w = av.dot(&a.view()); // row-vector times matrix = a^T av
        let new_lambda = w.dot(&v);
        normalize(&mut w);
        v = w;
        if (new_lambda - lambda).abs() <= sc::<T>(tol) * new_lambda.abs().max(T::one()) {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    lambda.max(T::zero()).sqrt()
}

/// Largest eigenvalue of a symmetric PSD matrix, by power iteration.
pub fn sym_eig_max<T: Scalar>(h: ArrayView2<T>, tol: f64, max_iters: usize) -> T {
    let n = h.nrows();
    if n == 0 {
        return T::zero();
    }
    let mut v: Array1<T> = Array1::from_shape_fn(n, |i| sc(1.0 + (i as f64 * 0.3).cos()));
    normalize(&mut v);
    let mut lambda = T::zero();
    for _ in 0..max_iters {
        let mut w = h.dot(&v);
        let new_lambda = w.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == T::zero() {
            return T::zero();
        }
        w /= norm;
        v = w;
        if (new_lambda - lambda).abs() <= sc::<T>(tol) * new_lambda.abs().max(T::one()) {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    lambda.max(T::zero())
}

/// 2-norm condition number estimate of a square matrix via power iteration on
/// `A^T A` and on `(A^T A)^{-1}` (through LU solves). Returns infinity for
/// singular matrices.
pub fn cond_2<T: Scalar>(a: ArrayView2<T>, lu: &Lu<T>) -> T {
    cond_2_with(a, lu, 1e-12, 10_000)
}

/// [`cond_2`] with explicit tolerance and iteration cap, for callers that only
/// need an order-of-magnitude estimate.
pub fn cond_2_with<T: Scalar>(a: ArrayView2<T>, lu: &Lu<T>, tol: f64, max_iters: usize) -> T {
    let n = a.nrows();
    if n == 0 {
        return T::one();
    }
    let sigma_max = op_norm(a, tol, max_iters);
    // inverse power iteration: largest singular value of A^{-1}
    let mut v: Array1<T> = Array1::from_shape_fn(n, |i| sc(1.0 - (i as f64 * 0.9).sin() * 0.5));
    normalize(&mut v);
    let mut lambda = T::zero();
    for _ in 0..max_iters {
        // w = A^{-T} A^{-1} v: solve A y = v, then A^T z = y.
        let y = lu.solve(v.view());
        let z = solve_transposed(lu, y.view());
        let new_lambda = z.dot(&v);
        let mut w = z;
        let norm = w.dot(&w).sqrt();
        if !norm.is_finite() || norm == T::zero() {
            return T::infinity();
        }
        w /= norm;
        v = w;
        if (new_lambda - lambda).abs() <= sc::<T>(tol) * new_lambda.abs().max(T::one()) {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    let inv_sigma_min = lambda.max(T::zero()).sqrt();
    sigma_max * inv_sigma_min
}

/// Solves `A^T x = b` using the factorization of `A`.
fn solve_transposed<T: Scalar>(lu: &Lu<T>, b: ArrayView1<T>) -> Array1<T> {
    // P A = L U  =>  A^T = U^T L^T P, solve U^T y = b, L^T z = y, x = P^T z.
    let n = lu.perm.len();
    let mut y = b.to_owned();
    for i in 0..n {
        for k in 0..i {
            let upd = lu.lu[[k, i]] * y[k];
            y[i] = y[i] - upd;
        }
        y[i] = y[i] / lu.lu[[i, i]];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let upd = lu.lu[[k, i]] * y[k];
            y[i] = y[i] - upd;
        }
    }
    let mut x = Array1::zeros(n);
    for i in 0..n {
        x[lu.perm[i]] = y[i];
    }
    x
}

/// Dense Cholesky factorization of a symmetric positive definite matrix.
/// Returns `None` when a pivot is nonpositive or non-finite.
pub struct Cholesky<T> {
    l: Array2<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(a: ArrayView2<T>) -> Option<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return None;
        }
        let mut l = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[[i, j]];
                for k in 0..j {
                    let upd = l[[i, k]] * l[[j, k]];
                    sum = sum - upd;
                }
                if i == j {
                    if !(sum > T::zero()) || !sum.is_finite() {
                        return None;
                    }
                    l[[i, j]] = sum.sqrt();
                } else {
                    l[[i, j]] = sum / l[[j, j]];
                }
            }
        }
        Some(Cholesky { l })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: ArrayView1<T>) -> Array1<T> {
        let n = self.l.nrows();
        let mut y = Array1::zeros(n);
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                let upd = self.l[[i, k]] * y[k];
                sum = sum - upd;
            }
            y[i] = sum / self.l[[i, i]];
        }
        let mut x = Array1::zeros(n);
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in i + 1..n {
                let upd = self.l[[k, i]] * x[k];
                sum = sum - upd;
            }
            x[i] = sum / self.l[[i, i]];
        }
        x
    }
}

fn normalize<T: Scalar>(v: &mut Array1<T>) {
    let norm = v.dot(v).sqrt();
    if norm > T::zero() {
        *v /= norm;
    }
}
