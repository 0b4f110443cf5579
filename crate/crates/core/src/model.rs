//! Interpolation-based local models for the upper-level least squares.
//!
//! We keep `d + 1` interpolation points `z^0, ..., z^d` with `z^0` the current
//! iterate, fit a linear residual model `M(s) = r(z^0) + J s` by solving the
//! `d x d` displacement system with one right-hand side per residual, and form
//! the Gauss-Newton quadratic `m(s) = f0 + g^T s + 1/2 s^T H s` with
//! `g = 2 J^T r` and `H = 2 J^T J` (residuals here carry the `1/sqrt(n)`
//! scaling, so no extra normalization appears).
//!
//! Geometry quality is measured by Lambda-poisedness of the linear Lagrange
//! polynomials; an unpoised set is repaired greedily by moving the worst
//! point to the maximizer of its Lagrange polynomial over the trust region,
//! which is available in closed form.

use crate::bilevel::ResidualEval;
use crate::error::{Error, Result};
use crate::linalg::{cond_2_with, Lu};
use crate::scalar::{sc, Scalar};
use ndarray::{Array1, Array2, ArrayView1};

/// Condition-number threshold above which a displacement matrix is treated as
/// a geometry failure.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Interpolation set: points with their residual evaluations and ages.
/// Index 0 is always the current center.
#[derive(Debug, Clone)]
pub struct InterpSet<T> {
    points: Vec<Array1<T>>,
    evals: Vec<ResidualEval<T>>,
    ages: Vec<u64>,
}

impl<T: Scalar> InterpSet<T> {
    pub fn new(center: Array1<T>, center_eval: ResidualEval<T>) -> Self {
        InterpSet {
            points: vec![center],
            evals: vec![center_eval],
            ages: vec![0],
        }
    }

    pub fn push(&mut self, point: Array1<T>, eval: ResidualEval<T>) {
        self.points.push(point);
        self.evals.push(eval);
        self.ages.push(0);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn center(&self) -> &Array1<T> {
        &self.points[0]
    }

    pub fn center_eval(&self) -> &ResidualEval<T> {
        &self.evals[0]
    }

    pub fn point(&self, t: usize) -> &Array1<T> {
        &self.points[t]
    }

    pub fn eval(&self, t: usize) -> &ResidualEval<T> {
        &self.evals[t]
    }

    pub fn age(&self, t: usize) -> u64 {
        self.ages[t]
    }

    /// Replaces the evaluation at slot `t` (same point, tighter accuracy).
    pub fn update_eval(&mut self, t: usize, eval: ResidualEval<T>) {
        self.evals[t] = eval;
        self.ages[t] = 0;
    }

    /// Replaces the point at slot `t > 0`.
    pub fn replace(&mut self, t: usize, point: Array1<T>, eval: ResidualEval<T>) {
        assert!(t > 0, "the center is never replaced in place");
        self.points[t] = point;
        self.evals[t] = eval;
        self.ages[t] = 0;
    }

    fn dist_sq(a: &Array1<T>, b: &Array1<T>) -> T {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (*x - *y) * (*x - *y))
            .sum::<T>()
    }

    fn duplicate_of(&self, point: &Array1<T>) -> Option<usize> {
        let tol = sc::<T>(1e-24);
        (0..self.len()).find(|t| Self::dist_sq(&self.points[*t], point) <= tol)
    }

    /// Accepts a new center: a duplicate slot (or else the existing point
    /// farthest from the new center, ties broken by lowest index) is dropped
    /// and the new point becomes slot 0.
    pub fn accept_center(&mut self, point: Array1<T>, eval: ResidualEval<T>) {
        let drop = self.duplicate_of(&point).unwrap_or_else(|| {
            let mut worst = 0usize;
            let mut worst_dist = T::neg_infinity();
            for (t, z) in self.points.iter().enumerate() {
                let d = Self::dist_sq(z, &point);
                if d > worst_dist {
                    worst_dist = d;
                    worst = t;
                }
            }
            worst
        });
        self.points.remove(drop);
        self.evals.remove(drop);
        self.ages.remove(drop);
        self.points.insert(0, point);
        self.evals.insert(0, eval);
        self.ages.insert(0, 0);
    }

    /// Folds a rejected trial evaluation into the set so its information is
    /// not wasted: it overwrites a duplicate slot if one exists, otherwise
    /// the non-center point farthest from the center.
    pub fn add_trial(&mut self, point: Array1<T>, eval: ResidualEval<T>) {
        match self.duplicate_of(&point) {
            Some(0) => {} // effectively the center; nothing to store
            Some(t) => {
                self.points[t] = point;
                self.evals[t] = eval;
                self.ages[t] = 0;
            }
            None => {
                let center = self.points[0].clone();
                let mut worst = 1usize;
                let mut worst_dist = T::neg_infinity();
                for t in 1..self.len() {
                    let d = Self::dist_sq(&self.points[t], &center);
                    if d > worst_dist {
                        worst_dist = d;
                        worst = t;
                    }
                }
                self.points[worst] = point;
                self.evals[worst] = eval;
                self.ages[worst] = 0;
            }
        }
    }

    /// Re-centers on an existing slot without changing the point set.
    pub fn ages_tick(&mut self) {
        for a in &mut self.ages {
            *a += 1;
        }
    }

    /// Worst per-point accuracy bound over the whole set.
    pub fn max_delta_x(&self) -> T {
        self.evals
            .iter()
            .map(|e| e.delta_x())
            .fold(T::zero(), T::max)
    }

    /// Displacement matrix with rows `(z^t - z^0)^T`, `t = 1..=d`.
    fn displacement_matrix(&self) -> Array2<T> {
        let d = self.dim();
        let mut a = Array2::zeros((self.len() - 1, d));
        for t in 1..self.len() {
            for j in 0..d {
                a[[t - 1, j]] = self.points[t][j] - self.points[0][j];
            }
        }
        a
    }
}

/// Fitted local model of the least-squares objective.
#[derive(Debug, Clone)]
pub struct LocalModel<T> {
    /// Fitted residual Jacobian, one row per residual entry.
    pub jacobian: Array2<T>,
    /// Residuals at the center, `M(0)`.
    pub constant: Array1<T>,
    /// Model gradient `2 J^T r`.
    pub gradient: Array1<T>,
    /// Gauss-Newton Hessian `2 J^T J` (symmetric PSD).
    pub hessian: Array2<T>,
    /// `m(0) = f_tilde` at the center.
    pub f0: T,
    /// Condition number estimate of the displacement system.
    pub condition: T,
    /// Trust radius the model was built for.
    pub delta: T,
}

impl<T: Scalar> LocalModel<T> {
    /// `m(s)`.
    pub fn value(&self, s: ArrayView1<T>) -> T {
        let hs = self.hessian.dot(&s);
        self.f0 + self.gradient.dot(&s) + sc::<T>(0.5) * s.dot(&hs)
    }

    /// `m(0) - m(s)`.
    pub fn predicted_decrease(&self, s: ArrayView1<T>) -> T {
        let hs = self.hessian.dot(&s);
        -(self.gradient.dot(&s) + sc::<T>(0.5) * s.dot(&hs))
    }

    pub fn gradient_norm(&self) -> T {
        self.gradient.dot(&self.gradient).sqrt()
    }
}

/// Fits the linear residual model and the Gauss-Newton quadratic on `set`.
pub fn fit<T: Scalar>(set: &InterpSet<T>, delta: T) -> Result<LocalModel<T>> {
    let d = set.dim();
    if set.len() != d + 1 {
        return Err(Error::geometry(format!(
            "interpolation set has {} points, need {}",
            set.len(),
            d + 1
        )));
    }
    let a = set.displacement_matrix();
    let lu = Lu::factor(a.view())
        .map_err(|_| Error::geometry("singular displacement matrix"))?;
    let condition = cond_2_with(a.view(), &lu, 1e-3, 500);
    if condition.as_f64() > CONDITION_LIMIT {
        return Err(Error::geometry(format!(
            "displacement matrix condition {condition:e} exceeds limit"
        )));
    }
    let m = set.center_eval().r_tilde.len();
    let mut jacobian = Array2::zeros((m, d));
    let center_r = &set.center_eval().r_tilde;
    let mut rhs = Array1::zeros(d);
    for i in 0..m {
        for t in 1..=d {
            rhs[t - 1] = set.eval(t).r_tilde[i] - center_r[i];
        }
        let gi = lu.solve(rhs.view());
        for j in 0..d {
            jacobian[[i, j]] = gi[j];
        }
    }
    let constant = center_r.clone();
    let gradient = jacobian.t().dot(&constant) * sc::<T>(2.0);
    let hessian = jacobian.t().dot(&jacobian) * sc::<T>(2.0);
    let f0 = set.center_eval().f_tilde;
    Ok(LocalModel {
        jacobian,
        constant,
        gradient,
        hessian,
        f0,
        condition,
        delta,
    })
}

/// Lambda-poisedness of a set on the ball `B(center, delta)`.
#[derive(Debug, Clone)]
pub struct PoisednessReport<T> {
    /// `max_t max_{||s|| <= delta} |l_t(center + s)|`; at least 1 for any set
    /// containing the center.
    pub lambda: T,
    /// Replaceable point (index >= 1) with the largest Lagrange maximum.
    pub worst: usize,
}

/// Lagrange coefficients: `l_t(center + s) = a_t + b_t^T s`.
struct LagrangeBasis<T> {
    offsets: Vec<T>,
    slopes: Vec<Array1<T>>,
}

fn lagrange_basis<T: Scalar>(set: &InterpSet<T>) -> Result<LagrangeBasis<T>> {
    let d = set.dim();
    let a = set.displacement_matrix();
    let lu = Lu::factor(a.view())
        .map_err(|_| Error::geometry("singular displacement matrix"))?;
    let condition = cond_2_with(a.view(), &lu, 1e-3, 500);
    if condition.as_f64() > CONDITION_LIMIT {
        return Err(Error::geometry(format!(
            "displacement matrix condition {condition:e} exceeds limit"
        )));
    }
    let mut offsets = vec![T::zero(); d + 1];
    let mut slopes = vec![Array1::zeros(d); d + 1];
    offsets[0] = T::one();
    let mut e = Array1::zeros(d);
    for t in 1..=d {
        e.fill(T::zero());
        e[t - 1] = T::one();
        let b = lu.solve(e.view());
        for j in 0..d {
            slopes[0][j] = slopes[0][j] - b[j];
        }
        slopes[t] = b;
    }
    Ok(LagrangeBasis { offsets, slopes })
}

/// Computes Lambda-poisedness in closed form: for a linear polynomial the
/// ball maximum of `|a + b^T s|` is `|a| + delta ||b||`.
pub fn lagrange_poisedness<T: Scalar>(set: &InterpSet<T>, delta: T) -> Result<PoisednessReport<T>> {
    let basis = lagrange_basis(set)?;
    let mut lambda = T::zero();
    let mut worst = 1usize;
    let mut worst_val = T::neg_infinity();
    for t in 0..set.len() {
        let b_norm = basis.slopes[t].dot(&basis.slopes[t]).sqrt();
        let ball_max = basis.offsets[t].abs() + delta * b_norm;
        lambda = lambda.max(ball_max);
        if t >= 1 && ball_max > worst_val {
            worst_val = ball_max;
            worst = t;
        }
    }
    Ok(PoisednessReport { lambda, worst })
}

/// Slope vector of the Lagrange polynomial of point `t` (`t >= 1`), or `None`
/// when the displacement matrix is singular.
pub fn lagrange_direction<T: Scalar>(set: &InterpSet<T>, t: usize) -> Option<Array1<T>> {
    let basis = lagrange_basis(set).ok()?;
    basis.slopes.get(t).cloned()
}

/// Greedy geometry repair: while the set is not `lambda_max`-poised, replace
/// the worst replaceable point by the in-box maximizer of its Lagrange
/// polynomial over the ball, evaluating the oracle there. A singular or
/// stubborn set falls back to a fresh coordinate cross around the center.
///
/// Returns the number of points replaced (0 when the set was already poised).
pub fn improve_geometry<T: Scalar>(
    set: &mut InterpSet<T>,
    delta: T,
    lambda_max: T,
    lower: ArrayView1<T>,
    upper: ArrayView1<T>,
    request: &mut dyn FnMut(&Array1<T>) -> Result<ResidualEval<T>>,
) -> Result<usize> {
    let d = set.dim();
    let mut replaced = 0usize;
    let max_rounds = 3 * (d + 1);
    for _ in 0..max_rounds {
        let report = match lagrange_poisedness(set, delta) {
            Ok(r) => r,
            // singular geometry: rebuild from scratch
            Err(_) => {
                return reset_to_coordinate_cross(set, delta, lower, upper, request)
                    .map(|n| replaced + n);
            }
        };
        if report.lambda <= lambda_max {
            return Ok(replaced);
        }
        let basis = lagrange_basis(set)?;
        let b = &basis.slopes[report.worst];
        let b_norm = b.dot(b).sqrt();
        if !(b_norm > T::zero()) {
            return reset_to_coordinate_cross(set, delta, lower, upper, request)
                .map(|n| replaced + n);
        }
        let center = set.center().clone();
        // the ball maximizer is center +/- delta b/||b||; clip into the box
        // and keep whichever clipped candidate has the larger |l_t| value
        let mut best_point: Option<(Array1<T>, T)> = None;
        for sign in [T::one(), -T::one()] {
            let mut candidate = center.clone();
            for j in 0..d {
                let step = sign * delta * b[j] / b_norm;
                candidate[j] = (center[j] + step).max(lower[j]).min(upper[j]);
            }
            let disp: Array1<T> = &candidate - &center;
            let val = (basis.offsets[report.worst] + b.dot(&disp)).abs();
            if best_point.as_ref().map_or(true, |(_, v)| val > *v) {
                best_point = Some((candidate, val));
            }
        }
        let (candidate, _) = best_point.expect("two candidates considered");
        let eval = request(&candidate)?;
        set.replace(report.worst, candidate, eval);
        replaced += 1;
    }
    // greedy loop exhausted; rebuild
    reset_to_coordinate_cross(set, delta, lower, upper, request).map(|n| replaced + n)
}

/// Replaces every non-center point with `center ± delta e_j`, choosing per
/// coordinate the sign with more room inside the box.
fn reset_to_coordinate_cross<T: Scalar>(
    set: &mut InterpSet<T>,
    delta: T,
    lower: ArrayView1<T>,
    upper: ArrayView1<T>,
    request: &mut dyn FnMut(&Array1<T>) -> Result<ResidualEval<T>>,
) -> Result<usize> {
    let d = set.dim();
    let center = set.center().clone();
    for j in 0..d {
        let room_up = (upper[j] - center[j]).min(delta);
        let room_down = (center[j] - lower[j]).min(delta);
        let step = if room_up >= room_down { room_up } else { -room_down };
        if step.abs() <= T::epsilon() {
            return Err(Error::geometry("box leaves no room for a coordinate step"));
        }
        let mut point = center.clone();
        point[j] = point[j] + step;
        let eval = request(&point)?;
        set.replace(j + 1, point, eval);
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eval_from_residuals(r: Vec<f64>) -> ResidualEval<f64> {
        let r_tilde = Array1::from_vec(r);
        let f_tilde = r_tilde.dot(&r_tilde);
        ResidualEval {
            delta_r: Array1::zeros(r_tilde.len()),
            f_tilde,
            delta_f: 0.0,
            lower_iters: 0,
            r_tilde,
        }
    }

    /// Exact affine residual map r(z) = B z + c.
    fn affine_eval(b: &Array2<f64>, c: &Array1<f64>, z: &Array1<f64>) -> ResidualEval<f64> {
        eval_from_residuals((b.dot(z) + c).to_vec())
    }

    fn affine_set(b: &Array2<f64>, c: &Array1<f64>, points: Vec<Array1<f64>>) -> InterpSet<f64> {
        let mut it = points.into_iter();
        let center = it.next().unwrap();
        let mut set = InterpSet::new(center.clone(), affine_eval(b, c, &center));
        for p in it {
            let e = affine_eval(b, c, &p);
            set.push(p, e);
        }
        set
    }

    #[test]
    fn fit_recovers_affine_jacobian_exactly() {
        let b = array![[1.0, -2.0], [0.5, 3.0], [2.0, 0.0]];
        let c = array![0.3, -0.7, 1.1];
        let set = affine_set(
            &b,
            &c,
            vec![
                array![0.2, -0.1],
                array![0.9, 0.3],
                array![-0.4, 0.8],
            ],
        );
        let model = fit(&set, 1.0).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert!(
                    (model.jacobian[[i, j]] - b[[i, j]]).abs() < 1e-10,
                    "J[{i},{j}]"
                );
            }
        }
        // interpolation conditions hold at the sample points
        for t in 1..set.len() {
            let s: Array1<f64> = set.point(t) - set.center();
            let pred = &model.constant + &model.jacobian.dot(&s);
            let actual = &set.eval(t).r_tilde;
            for i in 0..3 {
                assert!((pred[i] - actual[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn one_dimensional_fit_is_the_finite_difference_slope() {
        let center = array![1.0];
        let other = array![1.5];
        let mut set = InterpSet::new(center, eval_from_residuals(vec![2.0]));
        set.push(other, eval_from_residuals(vec![3.0]));
        let model = fit(&set, 0.5).unwrap();
        assert!((model.jacobian[[0, 0]] - (3.0 - 2.0) / 0.5).abs() < 1e-14);
    }

    #[test]
    fn two_dimensional_fit_matches_cramer_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let center: Array1<f64> = array![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let p1 = &center + &array![rng.gen_range(0.2..1.0), rng.gen_range(-0.3..0.3)];
            let p2 = &center + &array![rng.gen_range(-0.3..0.3), rng.gen_range(0.2..1.0)];
            let r0 = rng.gen_range(-1.0..1.0);
            let r1 = rng.gen_range(-1.0..1.0);
            let r2 = rng.gen_range(-1.0..1.0);
            let mut set = InterpSet::new(center.clone(), eval_from_residuals(vec![r0]));
            set.push(p1.clone(), eval_from_residuals(vec![r1]));
            set.push(p2.clone(), eval_from_residuals(vec![r2]));
            let model = fit(&set, 1.0).unwrap();
            // Cramer's rule on the 2x2 displacement system
            let a11 = p1[0] - center[0];
            let a12 = p1[1] - center[1];
            let a21 = p2[0] - center[0];
            let a22 = p2[1] - center[1];
            let det = a11 * a22 - a12 * a21;
            let g0 = ((r1 - r0) * a22 - (r2 - r0) * a12) / det;
            let g1 = (a11 * (r2 - r0) - a21 * (r1 - r0)) / det;
            assert!((model.jacobian[[0, 0]] - g0).abs() < 1e-10);
            assert!((model.jacobian[[0, 1]] - g1).abs() < 1e-10);
        }
    }

    #[test]
    fn lagrange_kronecker_property() {
        let b = array![[0.7, 0.1], [0.0, -1.0]];
        let c = array![0.0, 0.2];
        let set = affine_set(
            &b,
            &c,
            vec![array![0.0, 0.0], array![0.6, 0.1], array![-0.2, 0.5]],
        );
        let basis = lagrange_basis(&set).unwrap();
        for t in 0..set.len() {
            for s in 0..set.len() {
                let disp: Array1<f64> = set.point(s) - set.center();
                let val = basis.offsets[t] + basis.slopes[t].dot(&disp);
                let expect = if s == t { 1.0 } else { 0.0 };
                assert!(
                    (val - expect).abs() < 1e-10,
                    "l_{t}(z^{s}) = {val}, expected {expect}"
                );
            }
        }
    }

    #[test]
    fn poisedness_matches_ball_sampling_oracle() {
        // coordinate cross of radius delta; closed form vs dense sampling
        let delta = 0.3;
        let b = array![[1.0, 1.0]];
        let c = array![0.0];
        let set = affine_set(
            &b,
            &c,
            vec![array![0.1, 0.2], array![0.1 + delta, 0.2], array![0.1, 0.2 + delta]],
        );
        let report = lagrange_poisedness(&set, delta).unwrap();
        let basis = lagrange_basis(&set).unwrap();
        let mut sampled: f64 = 0.0;
        let n_samples = 10_000;
        for k in 0..n_samples {
            let angle = 2.0 * std::f64::consts::PI * (k as f64) / (n_samples as f64);
            let s = array![delta * angle.cos(), delta * angle.sin()];
            for t in 0..set.len() {
                let val = (basis.offsets[t] + basis.slopes[t].dot(&s)).abs();
                sampled = sampled.max(val);
            }
        }
        assert!(sampled <= report.lambda + 1e-12);
        assert!(report.lambda <= sampled + 1e-3);
        // ideal cross geometry: Lambda = 1 + sqrt(d)
        assert!((report.lambda - (1.0 + 2.0f64.sqrt())).abs() < 1e-10);
    }

    #[test]
    fn near_duplicate_direction_is_a_geometry_error() {
        let b = array![[1.0, 0.0]];
        let c = array![0.0];
        let set = affine_set(
            &b,
            &c,
            vec![
                array![0.0, 0.0],
                array![1.0, 0.0],
                array![1.0, 1e-14],
            ],
        );
        assert!(matches!(
            fit(&set, 1.0),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn improve_geometry_noop_on_poised_set() {
        let b = array![[1.0, -1.0]];
        let c = array![0.5];
        let delta = 0.2;
        let set0 = affine_set(
            &b,
            &c,
            vec![array![0.5, 0.5], array![0.7, 0.5], array![0.5, 0.7]],
        );
        let mut set = set0.clone();
        let lower = array![0.0, 0.0];
        let upper = array![1.0, 1.0];
        let mut calls = 0;
        let replaced = improve_geometry(
            &mut set,
            delta,
            100.0,
            lower.view(),
            upper.view(),
            &mut |p| {
                calls += 1;
                Ok(affine_eval(&b, &c, p))
            },
        )
        .unwrap();
        assert_eq!(replaced, 0);
        assert_eq!(calls, 0);
    }

    #[test]
    fn improve_geometry_fixes_collinear_set() {
        let b = array![[2.0, 1.0]];
        let c = array![0.1];
        let delta = 0.1;
        let mut set = affine_set(
            &b,
            &c,
            vec![
                array![0.5, 0.5],
                array![0.6, 0.5],
                array![0.7, 0.5], // collinear with the others
            ],
        );
        let lower = array![0.0, 0.0];
        let upper = array![1.0, 1.0];
        let center_before = set.center().clone();
        improve_geometry(&mut set, delta, 100.0, lower.view(), upper.view(), &mut |p| {
            Ok(affine_eval(&b, &c, p))
        })
        .unwrap();
        assert_eq!(set.center(), &center_before);
        let report = lagrange_poisedness(&set, delta).unwrap();
        assert!(report.lambda <= 100.0, "Lambda = {}", report.lambda);
        assert!(fit(&set, delta).is_ok());
    }

    #[test]
    fn hessian_is_psd_and_model_value_at_zero_is_f0() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = array![[1.0, -2.0], [0.5, 3.0], [2.0, 0.0]];
        let c = array![0.3, -0.7, 1.1];
        let set = affine_set(
            &b,
            &c,
            vec![array![0.2, -0.1], array![0.9, 0.3], array![-0.4, 0.8]],
        );
        let model = fit(&set, 1.0).unwrap();
        assert_eq!(model.value(Array1::zeros(2).view()), model.f0);
        assert_eq!(model.f0, set.center_eval().f_tilde);
        for _ in 0..100 {
            let s = array![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let hs = model.hessian.dot(&s);
            assert!(s.dot(&hs) >= -1e-12);
        }
    }

    #[test]
    fn accept_center_drops_farthest_point() {
        let b = array![[1.0, 0.0]];
        let c = array![0.0];
        let mut set = affine_set(
            &b,
            &c,
            vec![array![0.0, 0.0], array![1.0, 0.0], array![0.0, 1.0]],
        );
        // new center near (0, 1): the farthest existing point is (1, 0)
        let new_point = array![0.05, 0.95];
        let e = affine_eval(&b, &c, &new_point);
        set.accept_center(new_point.clone(), e);
        assert_eq!(set.center(), &new_point);
        assert_eq!(set.len(), 3);
        for t in 0..set.len() {
            assert_ne!(set.point(t), &array![1.0, 0.0]);
        }
    }
}
