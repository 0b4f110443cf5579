//! Smoothed, strongly convex lower-level objectives.
//!
//! The family is
//!
//! ```text
//!   Phi(x) = 1/2 ||A x - y||_S^2 + alpha * sum_j sqrt(|dx_j|^2 + nu^2) + xi/2 ||x||^2
//! ```
//!
//! with `A` either the identity (denoising) or the unitary DFT (MRI), `S` a
//! diagonal nonnegative weighting, and `dx` the 1D forward-difference stencil
//! (N-1 interior differences, no boundary wrap). The optimization variable is
//! always real; for MRI the data term acts on the complex spectrum of `x`.

use crate::error::{Error, Result};
use crate::fourier::UnitaryDft;
use crate::scalar::{sc, Scalar};
use ndarray::{Array1, ArrayView1};
use num_complex::Complex;
use std::collections::HashMap;
use std::sync::Mutex;
use std::sync::OnceLock;

/// Forward operator of the data term.
#[derive(Debug, Clone)]
pub enum ForwardOp<T> {
    Identity,
    /// Unitary DFT of the given length (plan cached at construction).
    UnitaryDft(UnitaryDft<T>),
}

/// Measured data: real for denoising, complex spectrum for MRI.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement<T> {
    Real(Array1<T>),
    Complex(Array1<Complex<T>>),
}

impl<T> Measurement<T> {
    pub fn len(&self) -> usize {
        match self {
            Measurement::Real(y) => y.len(),
            Measurement::Complex(y) => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Strong convexity and smoothness constants of an instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityBounds<T> {
    /// Strong convexity constant, strictly positive.
    pub mu: T,
    /// Gradient Lipschitz constant, `mu <= lipschitz`.
    pub lipschitz: T,
}

/// One instantiated lower-level objective.
#[derive(Debug, Clone)]
pub struct ProblemInstance<T> {
    forward_op: ForwardOp<T>,
    sample_weights: Array1<T>,
    data: Measurement<T>,
    alpha: T,
    nu: T,
    xi: T,
    n_pixels: usize,
}

impl<T: Scalar> ProblemInstance<T> {
    /// Builds an instance, checking the strong-convexity and finiteness
    /// invariants.
    pub fn new(
        forward_op: ForwardOp<T>,
        sample_weights: Array1<T>,
        data: Measurement<T>,
        alpha: T,
        nu: T,
        xi: T,
    ) -> Result<Self> {
        let n = data.len();
        if n == 0 {
            return Err(Error::domain("empty data"));
        }
        if sample_weights.len() != n {
            return Err(Error::domain("sample weight length mismatch"));
        }
        if !(nu > T::zero()) || !nu.is_finite() {
            return Err(Error::domain("nu must be positive and finite"));
        }
        if !(alpha >= T::zero()) || !alpha.is_finite() {
            return Err(Error::domain("alpha must be nonnegative and finite"));
        }
        if !(xi >= T::zero()) || !xi.is_finite() {
            return Err(Error::domain("xi must be nonnegative and finite"));
        }
        if sample_weights.iter().any(|s| !(*s >= T::zero()) || !s.is_finite()) {
            return Err(Error::domain("sample weights must be nonnegative and finite"));
        }
        match (&forward_op, &data) {
            (ForwardOp::Identity, Measurement::Real(_)) => {}
            (ForwardOp::UnitaryDft(f), Measurement::Complex(_)) if f.len() == n => {}
            _ => return Err(Error::domain("forward operator and data kind mismatch")),
        }
        let min_w = sample_weights.iter().cloned().fold(T::infinity(), T::min);
        if !(min_w + xi > T::zero()) {
            return Err(Error::domain(
                "strong convexity violated: min sample weight + xi must be positive",
            ));
        }
        Ok(ProblemInstance {
            forward_op,
            sample_weights,
            data,
            alpha,
            nu,
            xi,
            n_pixels: n,
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn xi(&self) -> T {
        self.xi
    }

    pub fn data(&self) -> &Measurement<T> {
        &self.data
    }

    pub fn forward_op(&self) -> &ForwardOp<T> {
        &self.forward_op
    }

    pub fn sample_weights(&self) -> ArrayView1<'_, T> {
        self.sample_weights.view()
    }

    /// Objective value at `x`.
    pub fn objective(&self, x: ArrayView1<T>) -> T {
        debug_assert_eq!(x.len(), self.n_pixels);
        let half = sc::<T>(0.5);
        let mut value = match (&self.forward_op, &self.data) {
            (ForwardOp::Identity, Measurement::Real(y)) => {
                let mut acc = T::zero();
                for j in 0..self.n_pixels {
                    let d = x[j] - y[j];
                    acc += self.sample_weights[j] * d * d;
                }
                half * acc
            }
            (ForwardOp::UnitaryDft(f), Measurement::Complex(y)) => {
                let fx = f.forward_real(x);
                let mut acc = T::zero();
                for j in 0..self.n_pixels {
                    let d = fx[j] - y[j];
                    acc += self.sample_weights[j] * d.norm_sqr();
                }
                half * acc
            }
            _ => unreachable!("operator/data consistency checked at construction"),
        };
        if self.alpha > T::zero() {
            let nu2 = self.nu * self.nu;
            let mut tv = T::zero();
            for j in 0..self.n_pixels - 1 {
                let d = x[j + 1] - x[j];
                tv += (d * d + nu2).sqrt();
            }
            value += self.alpha * tv;
        } else {
            // keep the exact TV_nu(const) = (N-1) nu limit also for alpha = 0
            value += self.alpha * sc::<T>((self.n_pixels - 1) as f64) * self.nu;
        }
        if self.xi > T::zero() {
            value += half * self.xi * x.dot(&x);
        }
        value
    }

    /// Gradient of the objective at `x`.
    pub fn gradient(&self, x: ArrayView1<T>) -> Array1<T> {
        let mut g = Array1::zeros(self.n_pixels);
        self.gradient_into(x, &mut g);
        g
    }

    /// Gradient written into `g`, avoiding an allocation in solver loops.
    pub fn gradient_into(&self, x: ArrayView1<T>, g: &mut Array1<T>) {
        debug_assert_eq!(x.len(), self.n_pixels);
        debug_assert_eq!(g.len(), self.n_pixels);
        match (&self.forward_op, &self.data) {
            (ForwardOp::Identity, Measurement::Real(y)) => {
                for j in 0..self.n_pixels {
                    g[j] = self.sample_weights[j] * (x[j] - y[j]) + self.xi * x[j];
                }
            }
            (ForwardOp::UnitaryDft(f), Measurement::Complex(y)) => {
                let mut fx = f.forward_real(x);
                for j in 0..self.n_pixels {
                    fx[j] = (fx[j] - y[j]) * self.sample_weights[j];
                }
                let back = f.adjoint(fx.view());
                for j in 0..self.n_pixels {
                    g[j] = back[j].re + self.xi * x[j];
                }
            }
            _ => unreachable!("operator/data consistency checked at construction"),
        }
        if self.alpha > T::zero() {
            let nu2 = self.nu * self.nu;
            for j in 0..self.n_pixels - 1 {
                let d = x[j + 1] - x[j];
                let t = self.alpha * d / (d * d + nu2).sqrt();
                g[j] -= t;
                g[j + 1] += t;
            }
        }
    }

    /// Strong convexity and smoothness constants per the instance parameters.
    ///
    /// For unitary (or identity) forward operators the spectrum of `A^* S A`
    /// is exactly the set of sample weights, so `mu = min_j s_j + xi` and
    /// `L = max_j s_j + alpha ||d||^2 / nu + xi`.
    pub fn convexity_constants(&self) -> Result<ConvexityBounds<T>> {
        let min_w = self.sample_weights.iter().cloned().fold(T::infinity(), T::min);
        let max_w = self.sample_weights.iter().cloned().fold(T::zero(), T::max);
        let mu = min_w + self.xi;
        if !(mu > T::zero()) {
            return Err(Error::domain("strong convexity constant not positive"));
        }
        let stencil = sc::<T>(forward_diff_norm_sq(self.n_pixels));
        let lipschitz = max_w + self.alpha * stencil / self.nu + self.xi;
        Ok(ConvexityBounds { mu, lipschitz })
    }
}

/// Hyperparameter map variants.
#[derive(Debug, Clone, PartialEq)]
pub enum MapVariant<T> {
    /// `alpha = 10^theta` with fixed smoothing parameters; denoising.
    LogAlpha { nu: T, xi: T },
    /// `(alpha, nu, xi) = (10^t1, 10^t2, 10^t3)`; denoising.
    LogAlphaNuXi,
    /// Per-mode Fourier sampling weights `s_j = t_j / (1 - t_j)`; MRI.
    MriWeights { alpha: T, nu: T, xi: T },
}

/// Map from upper-level parameters to a lower-level instance, with box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMap<T> {
    variant: MapVariant<T>,
    lower: Array1<T>,
    upper: Array1<T>,
}

impl<T: Scalar> ParamMap<T> {
    /// 1-parameter denoising map `alpha = 10^theta`, box `[-7, 7]`.
    pub fn log_alpha(nu: T, xi: T) -> Self {
        ParamMap {
            variant: MapVariant::LogAlpha { nu, xi },
            lower: Array1::from_elem(1, sc(-7.0)),
            upper: Array1::from_elem(1, sc(7.0)),
        }
    }

    /// 3-parameter denoising map, box `[-7,7] x [-7,0] x [-7,0]`.
    pub fn log_alpha_nu_xi() -> Self {
        ParamMap {
            variant: MapVariant::LogAlphaNuXi,
            lower: Array1::from_vec(vec![sc(-7.0), sc(-7.0), sc(-7.0)]),
            upper: Array1::from_vec(vec![sc(7.0), sc(0.0), sc(0.0)]),
        }
    }

    /// MRI sampling-weight map with fixed regularization parameters, box
    /// `[0.001, 0.99]^n`.
    pub fn mri_weights(n_modes: usize, alpha: T, nu: T, xi: T) -> Self {
        ParamMap {
            variant: MapVariant::MriWeights { alpha, nu, xi },
            lower: Array1::from_elem(n_modes, sc(0.001)),
            upper: Array1::from_elem(n_modes, sc(0.99)),
        }
    }

    /// Replaces the box bounds.
    pub fn with_box(mut self, lower: Array1<T>, upper: Array1<T>) -> Result<Self> {
        if lower.len() != self.dim() || upper.len() != self.dim() {
            return Err(Error::domain("box bound length mismatch"));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::domain("box bounds must satisfy lower < upper"));
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn variant(&self) -> &MapVariant<T> {
        &self.variant
    }

    /// Upper-level dimension.
    pub fn dim(&self) -> usize {
        match &self.variant {
            MapVariant::LogAlpha { .. } => 1,
            MapVariant::LogAlphaNuXi => 3,
            MapVariant::MriWeights { .. } => self.lower.len(),
        }
    }

    pub fn lower(&self) -> ArrayView1<'_, T> {
        self.lower.view()
    }

    pub fn upper(&self) -> ArrayView1<'_, T> {
        self.upper.view()
    }

    pub fn contains(&self, theta: ArrayView1<T>) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(t, (l, u))| *t >= *l && *t <= *u && t.is_finite())
    }

    /// Lower-level parameters `(alpha, nu, xi)` mapped from `theta`.
    pub fn lower_params(&self, theta: ArrayView1<T>) -> (T, T, T) {
        let ten = sc::<T>(10.0);
        match &self.variant {
            MapVariant::LogAlpha { nu, xi } => (ten.powf(theta[0]), *nu, *xi),
            MapVariant::LogAlphaNuXi => (
                ten.powf(theta[0]),
                ten.powf(theta[1]),
                ten.powf(theta[2]),
            ),
            MapVariant::MriWeights { alpha, nu, xi } => (*alpha, *nu, *xi),
        }
    }

    /// Sampling weights `s_j = theta_j / (1 - theta_j)` for the MRI map.
    pub fn sampling_weights(&self, theta: ArrayView1<T>) -> Option<Array1<T>> {
        match &self.variant {
            MapVariant::MriWeights { .. } => {
                Some(theta.mapv(|t| t / (T::one() - t)))
            }
            _ => None,
        }
    }

    /// Builds the lower-level instance for `theta` and one measurement.
    pub fn instantiate(&self, theta: ArrayView1<T>, data: &Measurement<T>) -> Result<ProblemInstance<T>> {
        if theta.len() != self.dim() {
            return Err(Error::domain(format!(
                "theta has dimension {}, map expects {}",
                theta.len(),
                self.dim()
            )));
        }
        if !self.contains(theta) {
            return Err(Error::domain("theta outside the box bounds"));
        }
        let (alpha, nu, xi) = self.lower_params(theta);
        match &self.variant {
            MapVariant::LogAlpha { .. } | MapVariant::LogAlphaNuXi => {
                let n = data.len();
                ProblemInstance::new(
                    ForwardOp::Identity,
                    Array1::ones(n),
                    data.clone(),
                    alpha,
                    nu,
                    xi,
                )
            }
            MapVariant::MriWeights { .. } => {
                let n = data.len();
                if n != self.dim() {
                    return Err(Error::domain("MRI data length must match number of modes"));
                }
                if theta.iter().any(|t| *t >= T::one()) {
                    return Err(Error::domain("MRI weight parameters must be below 1"));
                }
                let weights = self.sampling_weights(theta).expect("MRI map");
                ProblemInstance::new(
                    ForwardOp::UnitaryDft(UnitaryDft::new(n)),
                    weights,
                    data.clone(),
                    alpha,
                    nu,
                    xi,
                )
            }
        }
    }
}

/// Condition-number penalty `beta * (L / mu)^2` of the 3-parameter denoising
/// map, using the analytic denoising constants.
pub fn condition_penalty<T: Scalar>(
    map: &ParamMap<T>,
    theta: ArrayView1<T>,
    beta: T,
    n_pixels: usize,
) -> Result<T> {
    let r = condition_residual(map, theta, beta, n_pixels)?;
    Ok(r * r)
}

/// The penalty expressed as a least-squares residual entry
/// `sqrt(beta) * L / mu`.
pub fn condition_residual<T: Scalar>(
    map: &ParamMap<T>,
    theta: ArrayView1<T>,
    beta: T,
    n_pixels: usize,
) -> Result<T> {
    if !matches!(map.variant(), MapVariant::LogAlphaNuXi) {
        return Err(Error::domain(
            "condition penalty requires the 3-parameter denoising map",
        ));
    }
    let (alpha, nu, xi) = map.lower_params(theta);
    let stencil = sc::<T>(forward_diff_norm_sq(n_pixels));
    let mu = T::one() + xi;
    let lipschitz = T::one() + alpha * stencil / nu + xi;
    Ok(beta.sqrt() * lipschitz / mu)
}

/// `||d||^2`, the largest eigenvalue of the 1D forward-difference normal
/// operator `D^T D`, computed once per length by power iteration and cached.
///
/// The iteration stops on the residual test `||D^T D v - lambda v|| <= tol *
/// lambda`, which for symmetric operators bounds the eigenvalue error by
/// `tol * lambda` directly.
pub fn forward_diff_norm_sq(n: usize) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&n) {
        return *v;
    }
    let value = stencil_norm_sq_power_iteration(n, 1e-10, 5_000_000);
    cache.lock().unwrap().insert(n, value);
    value
}

fn stencil_norm_sq_power_iteration(n: usize, tol: f64, max_iters: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    // v is alternating-ish to overlap with the top eigenvector
    let mut v: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mut w = vec![0.0f64; n];
    let mut lambda = 0.0;
    let norm0 = (n as f64).sqrt();
    v.iter_mut().for_each(|x| *x /= norm0);
    for _ in 0..max_iters {
        // w = D^T D v without forming D
        w.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..n - 1 {
            let d = v[j + 1] - v[j];
            w[j] -= d;
            w[j + 1] += d;
        }
        lambda = w.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>();
        // residual ||w - lambda v||
        let res: f64 = w
            .iter()
            .zip(v.iter())
            .map(|(a, b)| {
                let r = a - lambda * b;
                r * r
            })
            .sum::<f64>()
            .sqrt();
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().zip(w.iter()).for_each(|(x, a)| *x = a / norm);
        if res <= tol * lambda.abs() {
            break;
        }
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::UnitaryDft;
    use ndarray::Array1;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_denoise_instance(rng: &mut ChaCha8Rng, n: usize) -> (ProblemInstance<f64>, Array1<f64>) {
        let y: Array1<f64> = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let alpha = rng.gen_range(0.05..0.5);
        let nu = rng.gen_range(1e-3..1e-1);
        let xi = rng.gen_range(1e-4..1e-2);
        let inst = ProblemInstance::new(
            ForwardOp::Identity,
            Array1::ones(n),
            Measurement::Real(y),
            alpha,
            nu,
            xi,
        )
        .unwrap();
        let x = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        (inst, x)
    }

    fn random_mri_instance(rng: &mut ChaCha8Rng, n: usize) -> (ProblemInstance<f64>, Array1<f64>) {
        let y: Array1<num_complex::Complex<f64>> = Array1::from_shape_fn(n, |_| {
            num_complex::Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let weights = Array1::from_shape_fn(n, |_| rng.gen_range(0.01..2.0));
        let inst = ProblemInstance::new(
            ForwardOp::UnitaryDft(UnitaryDft::new(n)),
            weights,
            Measurement::Complex(y),
            rng.gen_range(0.01..0.2),
            rng.gen_range(1e-2..1e-1),
            rng.gen_range(1e-4..1e-2),
        )
        .unwrap();
        let x = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        (inst, x)
    }

    #[test]
    fn log_alpha_map_at_zero() {
        let map = ParamMap::<f64>::log_alpha(1e-3, 1e-3);
        let theta = Array1::from_elem(1, 0.0);
        let y = Measurement::Real(Array1::zeros(8));
        let inst = map.instantiate(theta.view(), &y).unwrap();
        assert_eq!(inst.alpha(), 1.0);
        assert_eq!(inst.nu(), 1e-3);
        assert_eq!(inst.xi(), 1e-3);
        assert!(matches!(inst.forward_op(), ForwardOp::Identity));
        assert!(inst.sample_weights().iter().all(|w| *w == 1.0));
    }

    #[test]
    fn mri_weights_map_values() {
        let map = ParamMap::<f64>::mri_weights(2, 0.01, 0.01, 1e-4);
        let theta = Array1::from_vec(vec![0.5, 0.5]);
        let s = map.sampling_weights(theta.view()).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
        // direct arithmetic oracle at the box corners
        let theta = Array1::from_vec(vec![0.001, 0.99]);
        let s = map.sampling_weights(theta.view()).unwrap();
        assert!((s[0] - 0.001 / 0.999).abs() < 1e-15);
        assert!((s[1] - 99.0).abs() < 1e-12);
    }

    #[test]
    fn theta_outside_box_is_domain_error() {
        let map = ParamMap::<f64>::log_alpha(1e-3, 1e-3);
        let theta = Array1::from_elem(1, 8.0);
        let y = Measurement::Real(Array1::zeros(8));
        assert!(map.instantiate(theta.view(), &y).is_err());
    }

    #[test]
    fn objective_all_zero_matches_smoothed_tv_floor() {
        let n = 8;
        let inst = ProblemInstance::new(
            ForwardOp::Identity,
            Array1::ones(n),
            Measurement::Real(Array1::<f64>::zeros(n)),
            0.3,
            1e-3,
            0.0,
        )
        .unwrap();
        let x = Array1::zeros(n);
        let v = inst.objective(x.view());
        assert!((v - 0.3 * 7.0 * 1e-3).abs() < 1e-15);
    }

    #[test]
    fn objective_constant_signal_floor() {
        let n = 16;
        let c = 0.37;
        let x = Array1::<f64>::from_elem(n, c);
        let inst = ProblemInstance::new(
            ForwardOp::Identity,
            Array1::ones(n),
            Measurement::Real(x.clone()),
            0.25,
            2e-3,
            0.0,
        )
        .unwrap();
        let v = inst.objective(x.view());
        assert!((v - 0.25 * 15.0 * 2e-3).abs() < 1e-14);
    }

    #[test]
    fn objective_matches_naive_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 8;
        let y: Array1<f64> = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let x: Array1<f64> = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let (alpha, nu, xi) = (0.3, 1e-3, 1e-3);
        let inst = ProblemInstance::new(
            ForwardOp::Identity,
            Array1::ones(n),
            Measurement::Real(y.clone()),
            alpha,
            nu,
            xi,
        )
        .unwrap();
        // independent term-by-term summation
        let mut oracle = 0.0;
        for j in 0..n {
            oracle += 0.5 * (x[j] - y[j]) * (x[j] - y[j]);
            oracle += 0.5 * xi * x[j] * x[j];
        }
        for j in 0..n - 1 {
            oracle += alpha * ((x[j + 1] - x[j]).powi(2) + nu * nu).sqrt();
        }
        let v = inst.objective(x.view());
        assert!((v - oracle).abs() <= 1e-12 * oracle.abs());
    }

    #[test]
    fn mri_objective_matches_naive_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 8;
        let (inst, x) = random_mri_instance(&mut rng, n);
        // independent route: explicit DFT sum, term-by-term accumulation
        let mut fx = vec![num_complex::Complex::new(0.0f64, 0.0); n];
        for (k, v) in fx.iter_mut().enumerate() {
            for j in 0..n {
                let angle = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                *v += num_complex::Complex::new(angle.cos(), angle.sin()) * x[j];
            }
            *v /= (n as f64).sqrt();
        }
        let y = match inst.data() {
            Measurement::Complex(y) => y.clone(),
            _ => unreachable!(),
        };
        let mut oracle = 0.0;
        for j in 0..n {
            oracle += 0.5 * inst.sample_weights()[j] * (fx[j] - y[j]).norm_sqr();
        }
        for j in 0..n - 1 {
            oracle += inst.alpha() * ((x[j + 1] - x[j]).powi(2) + inst.nu().powi(2)).sqrt();
        }
        oracle += 0.5 * inst.xi() * x.dot(&x);
        let v = inst.objective(x.view());
        assert!(
            (v - oracle).abs() <= 1e-12 * oracle.abs(),
            "{v} vs oracle {oracle}"
        );
    }

    #[test]
    fn gradient_zero_at_stationary_point() {
        let n = 12;
        let x = Array1::<f64>::from_elem(n, 0.8);
        let inst = ProblemInstance::new(
            ForwardOp::Identity,
            Array1::ones(n),
            Measurement::Real(x.clone()),
            0.4,
            1e-3,
            0.0,
        )
        .unwrap();
        let g = inst.gradient(x.view());
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn mri_gradient_pure_tikhonov() {
        let n = 8;
        let inst = ProblemInstance::new(
            ForwardOp::UnitaryDft(UnitaryDft::new(n)),
            Array1::zeros(n),
            Measurement::Complex(Array1::from_elem(n, num_complex::Complex::new(0.0, 0.0))),
            0.0,
            1e-2,
            0.5,
        )
        .unwrap();
        let x: Array1<f64> = Array1::from_shape_fn(n, |i| i as f64 - 3.0);
        let g = inst.gradient(x.view());
        for j in 0..n {
            assert!((g[j] - 0.5 * x[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        for trial in 0..100 {
            let n = 8;
            let (inst, x) = if trial % 2 == 0 {
                random_denoise_instance(&mut rng, n)
            } else {
                random_mri_instance(&mut rng, n)
            };
            let g = inst.gradient(x.view());
            for j in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (inst.objective(xp.view()) - inst.objective(xm.view())) / (2.0 * h);
                assert!(
                    (g[j] - fd).abs() <= 1e-5,
                    "coordinate {j} trial {trial}: grad {} vs fd {}",
                    g[j],
                    fd
                );
            }
        }
    }

    #[test]
    fn convexity_constants_no_tv() {
        let n = 32;
        let inst = ProblemInstance::new(
            ForwardOp::Identity,
            Array1::ones(n),
            Measurement::Real(Array1::<f64>::zeros(n)),
            0.0,
            1e-3,
            2e-3,
        )
        .unwrap();
        let b = inst.convexity_constants().unwrap();
        assert!((b.mu - 1.002).abs() < 1e-12);
        assert!((b.lipschitz - 1.002).abs() < 1e-12);
    }

    #[test]
    fn convexity_constants_match_reported_magnitudes() {
        // N = 100, alpha = 0.3, nu = xi = 1e-3 gives mu ~ 1 and L ~ 1201
        let n = 100;
        let inst = ProblemInstance::new(
            ForwardOp::Identity,
            Array1::ones(n),
            Measurement::Real(Array1::<f64>::zeros(n)),
            0.3,
            1e-3,
            1e-3,
        )
        .unwrap();
        let b = inst.convexity_constants().unwrap();
        assert!((b.mu - 1.001).abs() < 1e-6);
        assert!((b.lipschitz - 1201.0).abs() < 1.0, "L = {}", b.lipschitz);
    }

    #[test]
    fn stencil_norm_matches_dense_eigensolver() {
        // dense oracle: Jacobi eigenvalue iteration on D^T D for N = 64
        let n = 64;
        let mut a = vec![vec![0.0f64; n]; n];
        for j in 0..n - 1 {
            // row j of D has -1 at j and +1 at j+1
            a[j][j] += 1.0;
            a[j + 1][j + 1] += 1.0;
            a[j][j + 1] -= 1.0;
            a[j + 1][j] -= 1.0;
        }
        // Jacobi rotations
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[p][q] * a[p][q];
                }
            }
            if off < 1e-22 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-14 {
                        continue;
                    }
                    let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let dense_max = (0..n).map(|i| a[i][i]).fold(f64::NEG_INFINITY, f64::max);
        let power = forward_diff_norm_sq(n);
        assert!(
            (dense_max - power).abs() < 1e-8,
            "dense {dense_max} vs power {power}"
        );
    }

    #[test]
    fn condition_penalty_limits() {
        let map = ParamMap::<f64>::log_alpha_nu_xi();
        // alpha -> 0, xi -> 0 gives L/mu -> 1 so penalty -> beta; realize the
        // limit directly with the analytic formula at the box edge
        let theta = Array1::from_vec(vec![-7.0, -1.0, -7.0]);
        let beta = 0.5;
        let p = condition_penalty(&map, theta.view(), beta, 64).unwrap();
        let (alpha, nu, xi) = map.lower_params(theta.view());
        let expect = beta
            * ((1.0 + alpha * forward_diff_norm_sq(64) / nu + xi) / (1.0 + xi)).powi(2);
        assert!((p - expect).abs() < 1e-12 * expect);
        // beta = 0 kills the penalty
        let p0 = condition_penalty(&map, theta.view(), 0.0, 64).unwrap();
        assert_eq!(p0, 0.0);
        // cross-check against convexity_constants on the instantiated problem
        let theta = Array1::from_vec(vec![0.0, -3.0, -3.0]);
        let y = Measurement::Real(Array1::zeros(64));
        let inst = map.instantiate(theta.view(), &y).unwrap();
        let b = inst.convexity_constants().unwrap();
        let p = condition_penalty(&map, theta.view(), 1.0, 64).unwrap();
        let expect = (b.lipschitz / b.mu).powi(2);
        assert!((p - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn convexity_envelope_holds_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..40 {
            let n = 16;
            let (inst, x) = if trial % 2 == 0 {
                random_denoise_instance(&mut rng, n)
            } else {
                random_mri_instance(&mut rng, n)
            };
            let z: Array1<f64> = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
            let b = inst.convexity_constants().unwrap();
            let fx = inst.objective(x.view());
            let fz = inst.objective(z.view());
            let gx = inst.gradient(x.view());
            let gz = inst.gradient(z.view());
            let diff = &z - &x;
            let dist_sq = diff.dot(&diff);
            let lower = fx + gx.dot(&diff) + 0.5 * b.mu * dist_sq;
            assert!(
                fz >= lower - 1e-10 * (1.0 + fz.abs()),
                "strong convexity violated: {fz} < {lower}"
            );
            let grad_diff = (&gx - &gz).dot(&(&gx - &gz)).sqrt();
            assert!(
                grad_diff <= b.lipschitz * dist_sq.sqrt() * (1.0 + 1e-10),
                "Lipschitz violated"
            );
        }
    }

    #[test]
    fn mri_weight_map_is_strictly_increasing() {
        let map = ParamMap::<f64>::mri_weights(1, 0.01, 0.01, 1e-4);
        let mut prev = f64::NEG_INFINITY;
        let mut t = 0.001;
        while t <= 0.99 {
            let s = map
                .sampling_weights(Array1::from_elem(1, t).view())
                .unwrap()[0];
            assert!(s > prev);
            prev = s;
            t += 0.004;
        }
    }
}
