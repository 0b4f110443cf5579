//! Trust-region subproblem solver.
//!
//! Minimizes `m(s) = g^T s + 1/2 s^T H s` over `||s|| <= delta` for small
//! dimensions and PSD `H` (Gauss-Newton Hessians). Interior solutions come
//! from a Cholesky solve; boundary solutions from safeguarded Newton
//! iteration on the secular equation `1/delta - 1/||s(lam)|| = 0` with
//! `s(lam) = -(H + lam I)^{-1} g`.
//!
//! Box bounds are handled by clipping along the step direction with a
//! projected-Cauchy-point fallback; the returned step always achieves at
//! least the Cauchy decrease whenever the box does not truncate it.

use crate::error::{Error, Result};
use crate::linalg::{sym_eig_max, Cholesky};
use crate::scalar::{sc, Scalar};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Step computed for the trust-region subproblem.
#[derive(Debug, Clone)]
pub struct TrsSolution<T> {
    pub step: Array1<T>,
    /// `m(0) - m(step)`, never negative.
    pub predicted_decrease: T,
    /// The ball (or box) constraint is active.
    pub on_boundary: bool,
    /// `H` was numerically indefinite and got regularized by `1e-12 I`.
    pub regularized: bool,
}

/// Componentwise step bounds `lower <= s <= upper` with `lower <= 0 <= upper`.
#[derive(Debug, Clone, Copy)]
pub struct BoxDisplacements<'a, T> {
    pub lower: ArrayView1<'a, T>,
    pub upper: ArrayView1<'a, T>,
}

/// Solves the subproblem. `g` and `H` are the model gradient and (symmetric
/// PSD) Hessian; `delta > 0` the trust radius.
pub fn solve_trs<T: Scalar>(
    g: ArrayView1<T>,
    h: ArrayView2<T>,
    delta: T,
    bounds: Option<BoxDisplacements<'_, T>>,
) -> Result<TrsSolution<T>> {
    let d = g.len();
    if h.nrows() != d || h.ncols() != d {
        return Err(Error::domain("gradient/Hessian dimension mismatch"));
    }
    if !(delta > T::zero()) || !delta.is_finite() {
        return Err(Error::domain("trust radius must be positive and finite"));
    }
    if let Some(b) = &bounds {
        let ok = (0..d).all(|j| b.lower[j] <= T::zero() && b.upper[j] >= T::zero());
        if !ok {
            return Err(Error::domain("box displacements must contain 0"));
        }
    }

    let g_norm = g.dot(&g).sqrt();
    if !g_norm.is_finite() {
        return Err(Error::numeric("non-finite gradient in trust-region subproblem"));
    }
    // symmetrize defensively; Gauss-Newton Hessians are symmetric up to roundoff
    let mut hs = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            hs[[i, j]] = (h[[i, j]] + h[[j, i]]) * sc::<T>(0.5);
        }
    }
    let h_norm = sym_eig_max(hs.view(), 1e-10, 10_000);

    if g_norm == T::zero() {
        return Ok(TrsSolution {
            step: Array1::zeros(d),
            predicted_decrease: T::zero(),
            on_boundary: false,
            regularized: false,
        });
    }

    let (ball_step, regularized) = ball_minimizer(g, hs.view(), delta, g_norm, h_norm)?;

    // Cauchy point: minimize along -g within the ball
    let cauchy_ball = cauchy_point(g, hs.view(), delta, g_norm);

    let (step, box_truncated) = match &bounds {
        None => (pick_better(g, hs.view(), ball_step, cauchy_ball), false),
        Some(b) => {
            // candidates: the ball step clipped along its direction, the ball
            // step clamped componentwise (stays in the ball since the box
            // contains 0), and the best point of the projected-gradient arc
            let clipped = clip_ray(&ball_step, b);
            let truncated = clipped
                .iter()
                .zip(ball_step.iter())
                .any(|(a, c)| (*a - *c).abs() > T::zero());
            let clamped = clamp_box(&ball_step, b);
            let cauchy_boxed = projected_cauchy(g, hs.view(), delta, g_norm, b);
            let s = pick_better(g, hs.view(), clipped, clamped);
            (pick_better(g, hs.view(), s, cauchy_boxed), truncated)
        }
    };
    let step_norm = step.dot(&step).sqrt();
    let on_boundary = step_norm >= delta * sc::<T>(1.0 - 1e-9) || box_truncated;
    let predicted_decrease = decrease(g, hs.view(), step.view()).max(T::zero());

    // Cauchy decrease holds by construction whenever the box did not truncate
    // the step; a tight box near a corner can legitimately block it.
    if !box_truncated {
        let bound = sc::<T>(0.5) * g_norm * delta.min(g_norm / (h_norm + T::one()));
        debug_assert!(
            predicted_decrease >= bound - sc(1e-12),
            "Cauchy decrease violated without box truncation"
        );
    }
    Ok(TrsSolution {
        step,
        predicted_decrease,
        on_boundary,
        regularized,
    })
}

fn decrease<T: Scalar>(g: ArrayView1<T>, h: ArrayView2<T>, s: ArrayView1<T>) -> T {
    let hs = h.dot(&s);
    -(g.dot(&s) + sc::<T>(0.5) * s.dot(&hs))
}

fn pick_better<T: Scalar>(
    g: ArrayView1<T>,
    h: ArrayView2<T>,
    a: Array1<T>,
    b: Array1<T>,
) -> Array1<T> {
    if decrease(g, h, a.view()) >= decrease(g, h, b.view()) {
        a
    } else {
        b
    }
}

/// Largest `t >= 0` with `t * s` inside the box, capped at 1; returns the
/// scaled step.
fn clip_ray<T: Scalar>(s: &Array1<T>, b: &BoxDisplacements<'_, T>) -> Array1<T> {
    let mut t = T::one();
    for j in 0..s.len() {
        if s[j] > b.upper[j] {
            t = t.min(b.upper[j] / s[j]);
        } else if s[j] < b.lower[j] {
            t = t.min(b.lower[j] / s[j]);
        }
    }
    s * t.max(T::zero())
}

/// The Cauchy point `-t g` with the exact 1D minimizer over the ball.
fn cauchy_point<T: Scalar>(
    g: ArrayView1<T>,
    h: ArrayView2<T>,
    delta: T,
    g_norm: T,
) -> Array1<T> {
    let hg = h.dot(&g);
    let curvature = g.dot(&hg);
    let g_sq = g_norm * g_norm;
    let t_ball = delta / g_norm;
    let t = if curvature > T::zero() {
        (g_sq / curvature).min(t_ball)
    } else {
        t_ball
    };
    g.mapv(|v| -t * v)
}

/// Componentwise clamp into the box; norms only shrink, so a ball-feasible
/// step stays ball-feasible.
fn clamp_box<T: Scalar>(s: &Array1<T>, b: &BoxDisplacements<'_, T>) -> Array1<T> {
    Array1::from_shape_fn(s.len(), |j| s[j].max(b.lower[j]).min(b.upper[j]))
}

/// Best point of the projected steepest-descent arc
/// `t -> clamp_box(-t g)` over a geometric grid of step lengths. Coordinates
/// pinned at their bounds stick there while free coordinates keep moving,
/// which is what makes progress possible from a face of the box.
fn projected_cauchy<T: Scalar>(
    g: ArrayView1<T>,
    h: ArrayView2<T>,
    delta: T,
    g_norm: T,
    b: &BoxDisplacements<'_, T>,
) -> Array1<T> {
    let mut t = delta / g_norm;
    let mut best = Array1::zeros(g.len());
    let mut best_val = T::zero();
    for _ in 0..30 {
        let raw = g.mapv(|v| -t * v);
        let mut s = clamp_box(&raw, b);
        let norm = s.dot(&s).sqrt();
        if norm > delta {
            let scale = delta / norm;
            s = s * scale;
        }
        let val = decrease(g, h, s.view());
        if val > best_val {
            best_val = val;
            best = s;
        }
        t = t * sc::<T>(0.5);
    }
    best
}

/// Global minimizer of the quadratic over the ball (no box), assuming PSD `H`.
fn ball_minimizer<T: Scalar>(
    g: ArrayView1<T>,
    h: ArrayView2<T>,
    delta: T,
    g_norm: T,
    h_norm: T,
) -> Result<(Array1<T>, bool)> {
    let d = g.len();
    let mut regularized = false;
    let mut reg = sc::<T>(1e-12) * (h_norm + T::one());

    // near-singular PSD systems get a tiny shift; an indefinite H (numerical
    // noise) gets progressively larger shifts and is reported
    let base = loop {
        let mut shifted = h.to_owned();
        for i in 0..d {
            shifted[[i, i]] += reg;
        }
        match Cholesky::factor(shifted.view()) {
            Some(chol) => break (chol, reg),
            None => {
                regularized = true;
                reg = reg * sc(100.0);
                if reg.as_f64() > 1.0 {
                    return Err(Error::numeric("Hessian could not be regularized"));
                }
            }
        }
    };
    let (chol0, reg0) = base;
    let neg_g = g.mapv(|v| -v);
    let s_interior = chol0.solve(neg_g.view());
    let interior_norm = s_interior.dot(&s_interior).sqrt();
    if interior_norm <= delta {
        return Ok((s_interior, regularized));
    }

    // boundary: secular Newton iteration with bisection safeguards on
    // phi(lam) = 1/delta - 1/||s(lam)||
    let mut lam_lo = reg0;
    let mut lam_hi = g_norm / delta + h_norm + reg0;
    let mut lam = (lam_lo + lam_hi) * sc::<T>(0.5);
    let mut s = s_interior;
    for _ in 0..200 {
        let mut shifted = h.to_owned();
        for i in 0..d {
            shifted[[i, i]] += lam;
        }
        let chol = match Cholesky::factor(shifted.view()) {
            Some(c) => c,
            None => {
                // lam too small for numerical PD-ness; move the bracket up
                lam_lo = lam;
                lam = (lam_lo + lam_hi) * sc::<T>(0.5);
                continue;
            }
        };
        s = chol.solve(neg_g.view());
        let s_norm = s.dot(&s).sqrt();
        if ((s_norm - delta) / delta).abs() <= sc(1e-13) {
            break;
        }
        if s_norm > delta {
            lam_lo = lam;
        } else {
            lam_hi = lam;
        }
        // More-Sorensen update: lam += (||s||/delta - 1) * ||s||^2 / (s^T q)
        // with q = (H + lam I)^{-1} s
        let q = chol.solve(s.view());
        let denom = s.dot(&q);
        let mut lam_next = lam + (s_norm / delta - T::one()) * (s_norm * s_norm) / denom;
        if !(lam_next > lam_lo && lam_next < lam_hi) || !lam_next.is_finite() {
            lam_next = (lam_lo + lam_hi) * sc::<T>(0.5);
        }
        lam = lam_next;
    }
    // land exactly on the sphere
    let s_norm = s.dot(&s).sqrt();
    if s_norm > T::zero() {
        let scale = delta / s_norm;
        s = s * scale.min(T::one());
    }
    Ok((s, regularized))
}
