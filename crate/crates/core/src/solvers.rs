//! Lower-level solvers: gradient descent and FISTA for strongly convex,
//! L-smooth objectives.
//!
//! Both solvers support either a fixed iteration count or certified-accuracy
//! stopping based on the a-posteriori bound `||x - x*|| <= ||grad Phi(x)|| / mu`,
//! which holds for any `mu`-strongly convex function. The certificate is
//! checked every iteration; the gradient is already computed, so the extra
//! cost is one norm per step.

use crate::error::{Error, Result};
use crate::problems::{ConvexityBounds, ProblemInstance};
use crate::scalar::{sc, Scalar};
use ndarray::{Array1, ArrayView1};

/// A smooth, strongly convex objective a first-order solver can minimize.
pub trait SmoothObjective<T: Scalar> {
    fn dim(&self) -> usize;
    fn value(&self, x: ArrayView1<T>) -> T;
    fn gradient_into(&self, x: ArrayView1<T>, g: &mut Array1<T>);
    /// Strong convexity / smoothness constants used for step sizes and the
    /// error certificate.
    fn constants(&self) -> Result<ConvexityBounds<T>>;

    fn gradient(&self, x: ArrayView1<T>) -> Array1<T> {
        let mut g = Array1::zeros(self.dim());
        self.gradient_into(x, &mut g);
        g
    }
}

impl<T: Scalar> SmoothObjective<T> for ProblemInstance<T> {
    fn dim(&self) -> usize {
        self.n_pixels()
    }

    fn value(&self, x: ArrayView1<T>) -> T {
        self.objective(x)
    }

    fn gradient_into(&self, x: ArrayView1<T>, g: &mut Array1<T>) {
        ProblemInstance::gradient_into(self, x, g)
    }

    fn constants(&self) -> Result<ConvexityBounds<T>> {
        self.convexity_constants()
    }
}

/// Iteration cap for certified solves; hitting it is surfaced, never silent.
pub const CERTIFIED_MAX_ITERS: usize = 1_000_000;

/// Termination rule for a lower-level solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule<T> {
    /// Run exactly this many iterations.
    FixedIterations(usize),
    /// Stop as soon as `||grad Phi(x)|| / mu <= delta_x`, with an iteration
    /// safeguard.
    GradientCertified { delta_x: T, max_iters: usize },
}

impl<T: Scalar> StopRule<T> {
    pub fn certified(delta_x: T) -> Self {
        StopRule::GradientCertified {
            delta_x,
            max_iters: CERTIFIED_MAX_ITERS,
        }
    }
}

/// Step-size choice for gradient descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GdStep {
    /// `tau = 1/L` (default).
    InverseLipschitz,
    /// `tau = 2/(L+mu)`, the improved linear rate.
    TwoOverSum,
}

/// Result of an inexact lower-level solve.
#[derive(Debug, Clone)]
pub struct SolveResult<T> {
    /// Final iterate.
    pub x_tilde: Array1<T>,
    /// Iterations performed.
    pub iterations: usize,
    /// `||grad Phi(x_tilde)||`.
    pub grad_norm: T,
    /// `grad_norm / mu`, an upper bound on `||x_tilde - x*||`.
    pub certified_error: T,
    /// True when a certified solve stopped on the iteration safeguard instead
    /// of reaching the requested accuracy.
    pub hit_safeguard: bool,
}

/// One row of an optional per-iteration solver trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow<T> {
    pub iteration: usize,
    pub objective: T,
    pub grad_norm: T,
}

/// Gradient descent `x <- x - tau * grad Phi(x)`.
pub fn gd_solve<T: Scalar, P: SmoothObjective<T>>(
    problem: &P,
    x0: ArrayView1<T>,
    stop: StopRule<T>,
    step: GdStep,
) -> Result<SolveResult<T>> {
    gd_solve_traced(problem, x0, stop, step, |_| {})
}

/// Gradient descent with a per-iteration observer.
pub fn gd_solve_traced<T: Scalar, P: SmoothObjective<T>>(
    problem: &P,
    x0: ArrayView1<T>,
    stop: StopRule<T>,
    step: GdStep,
    mut on_iter: impl FnMut(TraceRow<T>),
) -> Result<SolveResult<T>> {
    let bounds = problem.constants()?;
    let tau = match step {
        GdStep::InverseLipschitz => T::one() / bounds.lipschitz,
        GdStep::TwoOverSum => sc::<T>(2.0) / (bounds.lipschitz + bounds.mu),
    };
    let mut x = x0.to_owned();
    let mut g = Array1::zeros(problem.dim());
    let mut iterations = 0usize;
    loop {
        problem.gradient_into(x.view(), &mut g);
        let grad_norm = g.dot(&g).sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::numeric(
                "gradient descent diverged (non-finite iterate); check mu/L configuration",
            ));
        }
        on_iter(TraceRow {
            iteration: iterations,
            objective: problem.value(x.view()),
            grad_norm,
        });
        match stop {
            StopRule::FixedIterations(k) => {
                if iterations >= k {
                    return Ok(finish(x, iterations, grad_norm, bounds.mu, false));
                }
            }
            StopRule::GradientCertified { delta_x, max_iters } => {
                if grad_norm / bounds.mu <= delta_x {
                    return Ok(finish(x, iterations, grad_norm, bounds.mu, false));
                }
                if iterations >= max_iters {
                    return Ok(finish(x, iterations, grad_norm, bounds.mu, true));
                }
            }
        }
        x.scaled_add(-tau, &g);
        iterations += 1;
    }
}

/// FISTA for strongly convex objectives, `tau = 1/L`, `q = tau * mu`, `t_0 = 0`.
pub fn fista_solve<T: Scalar, P: SmoothObjective<T>>(
    problem: &P,
    x0: ArrayView1<T>,
    stop: StopRule<T>,
) -> Result<SolveResult<T>> {
    fista_solve_traced(problem, x0, stop, |_| {})
}

/// FISTA with a per-iteration observer.
pub fn fista_solve_traced<T: Scalar, P: SmoothObjective<T>>(
    problem: &P,
    x0: ArrayView1<T>,
    stop: StopRule<T>,
    mut on_iter: impl FnMut(TraceRow<T>),
) -> Result<SolveResult<T>> {
    let bounds = problem.constants()?;
    let tau = T::one() / bounds.lipschitz;
    let q = tau * bounds.mu;
    let one = T::one();
    let momentum_degenerate = (one - q).abs() <= sc::<T>(1e-14);

    let mut x = x0.to_owned();
    let mut x_prev = x0.to_owned();
    let mut t = T::zero();
    let mut g = Array1::zeros(problem.dim());
    let mut iterations = 0usize;
    loop {
        problem.gradient_into(x.view(), &mut g);
        let grad_norm = g.dot(&g).sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::numeric(
                "FISTA diverged (non-finite iterate); check mu/L configuration",
            ));
        }
        on_iter(TraceRow {
            iteration: iterations,
            objective: problem.value(x.view()),
            grad_norm,
        });
        match stop {
            StopRule::FixedIterations(k) => {
                if iterations >= k {
                    return Ok(finish(x, iterations, grad_norm, bounds.mu, false));
                }
            }
            StopRule::GradientCertified { delta_x, max_iters } => {
                if grad_norm / bounds.mu <= delta_x {
                    return Ok(finish(x, iterations, grad_norm, bounds.mu, false));
                }
                if iterations >= max_iters {
                    return Ok(finish(x, iterations, grad_norm, bounds.mu, true));
                }
            }
        }
        // four-line recursion for t, beta, z, x
        let (t_next, beta) = if momentum_degenerate {
            (one, T::zero())
        } else {
            let a = one - q * t * t;
            let t_next = (a + (a * a + sc::<T>(4.0) * t * t).sqrt()) / sc::<T>(2.0);
            let beta = (t - one) * (one - t_next * q) / (t_next * (one - q));
            (t_next, beta)
        };
        // z = x + beta (x - x_prev); gradient is evaluated at z
        let mut z = Array1::zeros(x.len());
        ndarray::Zip::from(&mut z)
            .and(&x)
            .and(&x_prev)
            .for_each(|zi, &xi, &xpi| *zi = xi + beta * (xi - xpi));
        problem.gradient_into(z.view(), &mut g);
        x_prev = x;
        x = z;
        x.scaled_add(-tau, &g);
        t = t_next;
        iterations += 1;
    }
}

/// The a-posteriori error bound `||grad Phi(x)|| / mu >= ||x - x*||`.
pub fn certified_error_bound<T: Scalar, P: SmoothObjective<T>>(
    problem: &P,
    x: ArrayView1<T>,
) -> Result<T> {
    let bounds = problem.constants()?;
    let g = problem.gradient(x);
    Ok(g.dot(&g).sqrt() / bounds.mu)
}

fn finish<T: Scalar>(
    x: Array1<T>,
    iterations: usize,
    grad_norm: T,
    mu: T,
    hit_safeguard: bool,
) -> SolveResult<T> {
    SolveResult {
        x_tilde: x,
        iterations,
        grad_norm,
        certified_error: grad_norm / mu,
        hit_safeguard,
    }
}

/// A version of Nesterov's quadratic test problem:
/// `Phi(x) = mu_hat (Q-1)/8 (x^T A x - 2 x_1) + mu_hat/2 ||x||^2` with `A`
/// the `[-1, 2, -1]` tridiagonal operator. With the default `d = 10`,
/// `mu_hat = 1`, `Q = 100` the constants are `mu ~ 3` and `L ~ 98`.
#[derive(Debug, Clone)]
pub struct NesterovQuadratic<T> {
    dimension: usize,
    mu_hat: T,
    q_factor: T,
}

impl<T: Scalar> Default for NesterovQuadratic<T> {
    fn default() -> Self {
        NesterovQuadratic::new(10, T::one(), sc(100.0))
    }
}

impl<T: Scalar> NesterovQuadratic<T> {
    pub fn new(dimension: usize, mu_hat: T, q_factor: T) -> Self {
        NesterovQuadratic {
            dimension,
            mu_hat,
            q_factor,
        }
    }

    fn coeff(&self) -> T {
        // the Hessian is coeff * A + mu_hat * I with coeff = mu_hat (Q-1)/4
        self.mu_hat * (self.q_factor - T::one()) / sc::<T>(4.0)
    }

    /// Tridiagonal `A x`.
    fn apply_a(&self, x: ArrayView1<T>) -> Array1<T> {
        let n = self.dimension;
        let two = sc::<T>(2.0);
        Array1::from_shape_fn(n, |i| {
            let mut v = two * x[i];
            if i > 0 {
                v -= x[i - 1];
            }
            if i + 1 < n {
                v -= x[i + 1];
            }
            v
        })
    }

    /// Exact minimizer from the tridiagonal linear system.
    pub fn solution(&self) -> Array1<T> {
        // (coeff A + mu_hat I) x = coeff e_1, Thomas algorithm
        let n = self.dimension;
        let c = self.coeff();
        let diag0 = sc::<T>(2.0) * c + self.mu_hat;
        let off = -c;
        let mut diag = vec![diag0; n];
        let mut rhs = vec![T::zero(); n];
        rhs[0] = c;
        for i in 1..n {
            let w = off / diag[i - 1];
            diag[i] = diag[i] - w * off;
            let upd = w * rhs[i - 1];
            rhs[i] = rhs[i] - upd;
        }
        let mut x = Array1::zeros(n);
        x[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (rhs[i] - off * x[i + 1]) / diag[i];
        }
        x
    }

    /// Exact extreme eigenvalues of the Hessian via the analytic spectrum of
    /// the tridiagonal operator, `lambda_j(A) = 2 - 2 cos(j pi / (d+1))`.
    pub fn exact_constants(&self) -> ConvexityBounds<T> {
        let n = self.dimension as f64;
        let lam_min = 2.0 - 2.0 * (std::f64::consts::PI / (n + 1.0)).cos();
        let lam_max = 2.0 - 2.0 * (n * std::f64::consts::PI / (n + 1.0)).cos();
        let c = self.coeff();
        ConvexityBounds {
            mu: c * sc(lam_min) + self.mu_hat,
            lipschitz: c * sc(lam_max) + self.mu_hat,
        }
    }
}

impl<T: Scalar> SmoothObjective<T> for NesterovQuadratic<T> {
    fn dim(&self) -> usize {
        self.dimension
    }

    fn value(&self, x: ArrayView1<T>) -> T {
        let ax = self.apply_a(x);
        let quad = x.dot(&ax) - sc::<T>(2.0) * x[0];
        self.coeff() / sc::<T>(2.0) * quad + self.mu_hat / sc::<T>(2.0) * x.dot(&x)
    }

    fn gradient_into(&self, x: ArrayView1<T>, g: &mut Array1<T>) {
        let ax = self.apply_a(x);
        let c = self.coeff();
        for i in 0..self.dimension {
            g[i] = c * ax[i] + self.mu_hat * x[i];
        }
        g[0] -= c;
    }

    fn constants(&self) -> Result<ConvexityBounds<T>> {
        Ok(self.exact_constants())
    }
}

/// A pure quadratic `1/2 ||x - c||^2`, used as a one-step sanity problem.
#[derive(Debug, Clone)]
pub struct ShiftedQuadratic<T> {
    pub center: Array1<T>,
}

impl<T: Scalar> SmoothObjective<T> for ShiftedQuadratic<T> {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: ArrayView1<T>) -> T {
        let d = &x - &self.center;
        sc::<T>(0.5) * d.dot(&d)
    }

    fn gradient_into(&self, x: ArrayView1<T>, g: &mut Array1<T>) {
        for i in 0..self.center.len() {
            g[i] = x[i] - self.center[i];
        }
    }

    fn constants(&self) -> Result<ConvexityBounds<T>> {
        Ok(ConvexityBounds {
            mu: T::one(),
            lipschitz: T::one(),
        })
    }
}
