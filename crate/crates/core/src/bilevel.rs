//! The inexact upper-level least-squares oracle.
//!
//! For a training set `(x_i, y_i)` and parameters `theta`, the residuals are
//! `r_i(theta) = ||x_hat_i(theta) - x_i||` where `x_hat_i` minimizes the
//! lower-level objective. We never have `x_hat_i` exactly; lower-level solves
//! return `x_tilde_i` with a certified bound `||x_tilde_i - x_hat_i|| <=
//! delta_x`, which propagates to the objective as
//!
//! ```text
//!   |f_tilde - f| <= 2 sqrt(f_tilde) delta_x + delta_x^2 .
//! ```
//!
//! Residual entries are stored scaled by `1/sqrt(n)` so that
//! `f = ||r||^2` without any extra normalization downstream; an optional
//! regularizer contributes one exact extra entry (`sqrt(J(theta))`). The
//! per-entry error bounds `delta_r` stay in unscaled per-image units, which is
//! what the propagation formula above consumes.

use crate::datagen::{DataKind, Dataset};
use crate::error::{Error, Result};
use crate::fourier::UnitaryDft;
use crate::problems::{condition_residual, MapVariant, Measurement, ParamMap};
use crate::scalar::{sc, Scalar};
use crate::solvers::{fista_solve, gd_solve, GdStep, SolveResult, StopRule};
use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Lower-level solver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Gd { step: GdStep },
    Fista,
}

impl SolverKind {
    pub fn gd() -> Self {
        SolverKind::Gd {
            step: GdStep::InverseLipschitz,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Gd { .. } => "gd",
            SolverKind::Fista => "fista",
        }
    }
}

/// Optional upper-level regularizer, appended as an exact residual entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer<T> {
    /// Condition-number penalty `beta (L/mu)^2` of the denoising family.
    Condition { beta: T },
    /// Sparsity penalty `beta ||theta||_1` for MRI sampling weights.
    L1 { beta: T },
}

/// Inexact evaluation of the upper-level residual vector.
#[derive(Debug, Clone)]
pub struct ResidualEval<T> {
    /// Scaled residuals (`n` image entries divided by `sqrt(n)`, plus one
    /// regularizer entry when configured); `f_tilde = ||r_tilde||^2`.
    pub r_tilde: Array1<T>,
    /// Per-entry accuracy: certified `||x_tilde_i - x_hat_i||` per image in
    /// unscaled units, and exactly zero for the regularizer entry.
    pub delta_r: Array1<T>,
    /// `||r_tilde||^2`.
    pub f_tilde: T,
    /// `2 sqrt(f_tilde) delta_x + delta_x^2` with `delta_x = max_i delta_r_i`.
    pub delta_f: T,
    /// Lower-level iterations consumed by this evaluation.
    pub lower_iters: u64,
}

impl<T: Scalar> ResidualEval<T> {
    /// The worst per-image accuracy bound.
    pub fn delta_x(&self) -> T {
        self.delta_r.iter().cloned().fold(T::zero(), T::max)
    }
}

/// Per-image warm starts: the most recent reconstruction regardless of which
/// `theta` produced it.
#[derive(Debug, Clone, Default)]
pub struct WarmStartCache<T> {
    entries: Vec<Option<Array1<T>>>,
}

impl<T: Scalar> WarmStartCache<T> {
    pub fn new(n_images: usize) -> Self {
        WarmStartCache {
            entries: vec![None; n_images],
        }
    }

    pub fn get(&self, i: usize) -> Option<&Array1<T>> {
        self.entries.get(i).and_then(|e| e.as_ref())
    }

    pub fn set(&mut self, i: usize, x: Array1<T>) {
        self.entries[i] = Some(x);
    }
}

/// Training set plus lower-level configuration.
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    signals: Vec<Array1<T>>,
    measurements: Vec<Measurement<T>>,
    map: ParamMap<T>,
    solver: SolverKind,
    regularizer: Option<Regularizer<T>>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(
        signals: Vec<Array1<T>>,
        measurements: Vec<Measurement<T>>,
        map: ParamMap<T>,
        solver: SolverKind,
        regularizer: Option<Regularizer<T>>,
    ) -> Result<Self> {
        if signals.is_empty() || signals.len() != measurements.len() {
            return Err(Error::domain(
                "need matching, nonempty signal/measurement lists",
            ));
        }
        let n = signals[0].len();
        if signals.iter().any(|x| x.len() != n) || measurements.iter().any(|y| y.len() != n) {
            return Err(Error::domain("all images must have the same length"));
        }
        match (map.variant(), &measurements[0]) {
            (MapVariant::MriWeights { .. }, Measurement::Complex(_)) => {
                if map.dim() != n {
                    return Err(Error::domain("MRI map dimension must equal pixel count"));
                }
            }
            (MapVariant::LogAlpha { .. } | MapVariant::LogAlphaNuXi, Measurement::Real(_)) => {}
            _ => return Err(Error::domain("map variant and measurement kind mismatch")),
        }
        if let (Some(Regularizer::Condition { .. }), MapVariant::MriWeights { .. }) =
            (&regularizer, map.variant())
        {
            return Err(Error::domain("condition penalty requires the denoising map"));
        }
        Ok(TrainingSet {
            signals,
            measurements,
            map,
            solver,
            regularizer,
        })
    }

    /// Builds a set from a generated dataset.
    pub fn from_dataset(
        dataset: Dataset<T>,
        map: ParamMap<T>,
        solver: SolverKind,
        regularizer: Option<Regularizer<T>>,
    ) -> Result<Self> {
        match (dataset.kind, map.variant()) {
            (DataKind::Denoise, MapVariant::LogAlpha { .. } | MapVariant::LogAlphaNuXi) => {}
            (DataKind::Mri, MapVariant::MriWeights { .. }) => {}
            _ => return Err(Error::domain("dataset kind does not match map variant")),
        }
        TrainingSet::new(
            dataset.signals,
            dataset.measurements,
            map,
            solver,
            regularizer,
        )
    }

    pub fn n_images(&self) -> usize {
        self.signals.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.signals[0].len()
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    /// Residual vector length (`n`, or `n + 1` with a regularizer).
    pub fn n_residuals(&self) -> usize {
        self.n_images() + usize::from(self.regularizer.is_some())
    }

    pub fn map(&self) -> &ParamMap<T> {
        &self.map
    }

    pub fn solver(&self) -> SolverKind {
        self.solver
    }

    pub fn regularizer(&self) -> Option<Regularizer<T>> {
        self.regularizer
    }

    pub fn signals(&self) -> &[Array1<T>] {
        &self.signals
    }

    pub fn measurements(&self) -> &[Measurement<T>] {
        &self.measurements
    }

    /// Default lower-level starting point for image `i`: the measurement for
    /// denoising, the zero-filled adjoint for MRI.
    pub fn default_start(&self, i: usize) -> Array1<T> {
        match &self.measurements[i] {
            Measurement::Real(y) => y.clone(),
            Measurement::Complex(y) => UnitaryDft::new(y.len()).adjoint_real(y.view()),
        }
    }

    /// The exact regularizer residual entry `sqrt(J(theta))`, if configured.
    pub fn regularizer_residual(&self, theta: ArrayView1<T>) -> Result<Option<T>> {
        match self.regularizer {
            None => Ok(None),
            Some(Regularizer::Condition { beta }) => Ok(Some(condition_residual(
                &self.map,
                theta,
                beta,
                self.n_pixels(),
            )?)),
            Some(Regularizer::L1 { beta }) => {
                let l1 = theta.iter().fold(T::zero(), |acc, t| acc + t.abs());
                Ok(Some((beta * l1).sqrt()))
            }
        }
    }

    /// Runs one certified lower-level solve per image, warm-started from the
    /// cache, so that `||x_tilde_i - x_hat_i|| <= delta_x` for every image.
    pub fn evaluate_to_x_accuracy(
        &self,
        theta: ArrayView1<T>,
        delta_x: T,
        cache: &mut WarmStartCache<T>,
    ) -> Result<ResidualEval<T>> {
        if !(delta_x > T::zero()) {
            return Err(Error::domain("delta_x must be positive"));
        }
        self.solve_images(theta, SolveSpec::Certified(delta_x), cache)
    }

    /// Runs exactly `k` solver iterations per image (fixed-accuracy
    /// baselines); the error bounds come from the a-posteriori certificate
    /// and may be large.
    pub fn fixed_iteration_evaluate(
        &self,
        theta: ArrayView1<T>,
        k: usize,
        cache: &mut WarmStartCache<T>,
    ) -> Result<ResidualEval<T>> {
        self.solve_images(theta, SolveSpec::Fixed(k), cache)
    }

    /// Tightens lower-level accuracy until `|f_tilde - f| <= delta_f_target`,
    /// reusing the current reconstructions between rounds.
    ///
    /// The per-image accuracy needed for a target `delta_f` is
    /// `delta_x <= sqrt(f_tilde + delta_f) - sqrt(f_tilde)`; since `f_tilde`
    /// itself is only known inexactly, we iterate: solve at a trial accuracy,
    /// test the condition with the achieved bounds, halve on failure. The
    /// re-solves continue from the reconstructions of the previous round, so
    /// tightening never restarts lower-level work.
    pub fn evaluate_to_f_accuracy(
        &self,
        theta: ArrayView1<T>,
        delta_f_target: T,
        cache: &mut WarmStartCache<T>,
    ) -> Result<ResidualEval<T>> {
        if !(delta_f_target > T::zero()) {
            return Err(Error::domain("delta_f target must be positive"));
        }
        let mut trial = delta_f_target.sqrt();
        let mut total_iters = 0u64;
        let mut rounds = 0usize;
        loop {
            let mut eval = self.evaluate_to_x_accuracy(theta, trial, cache)?;
            total_iters += eval.lower_iters;
            let achieved = eval.delta_x();
            let threshold = (eval.f_tilde + delta_f_target).sqrt() - eval.f_tilde.sqrt();
            if achieved <= threshold {
                eval.lower_iters = total_iters;
                debug_assert!(eval.delta_f <= delta_f_target * (T::one() + sc(1e-12)));
                return Ok(eval);
            }
            rounds += 1;
            if rounds > 80 {
                return Err(Error::certification(
                    "accuracy tightening failed to reach the requested delta_f",
                ));
            }
            trial = (trial * sc(0.5)).min(threshold);
            if !(trial > T::zero()) || !trial.is_finite() {
                return Err(Error::certification(
                    "accuracy tightening underflowed the representable range",
                ));
            }
        }
    }

    fn solve_images(
        &self,
        theta: ArrayView1<T>,
        spec: SolveSpec<T>,
        cache: &mut WarmStartCache<T>,
    ) -> Result<ResidualEval<T>> {
        if !self.map.contains(theta) {
            return Err(Error::domain("theta outside the box bounds"));
        }
        let n = self.n_images();
        let solver = self.solver;
        let results: Vec<Result<SolveResult<T>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let inst = self.map.instantiate(theta, &self.measurements[i])?;
                let x0 = match cache.get(i) {
                    Some(x) => x.clone(),
                    None => self.default_start(i),
                };
                let stop = match spec {
                    SolveSpec::Certified(delta_x) => StopRule::certified(delta_x),
                    SolveSpec::Fixed(k) => StopRule::FixedIterations(k),
                };
                let run = match solver {
                    SolverKind::Gd { step } => gd_solve(&inst, x0.view(), stop, step)?,
                    SolverKind::Fista => fista_solve(&inst, x0.view(), stop)?,
                };
                if run.hit_safeguard {
                    return Err(Error::certification(format!(
                        "lower-level safeguard tripped on image {i} (certified error {:e})",
                        run.certified_error
                    )));
                }
                Ok(run)
            })
            .collect();

        let mut solved = Vec::with_capacity(n);
        for r in results {
            solved.push(r?);
        }
        // cache is updated only after every solve has succeeded
        for (i, run) in solved.iter().enumerate() {
            cache.set(i, run.x_tilde.clone());
        }
        self.assemble(theta, &solved)
    }

    fn assemble(&self, theta: ArrayView1<T>, solved: &[SolveResult<T>]) -> Result<ResidualEval<T>> {
        let n = self.n_images();
        let scale = T::one() / sc::<T>(n as f64).sqrt();
        let m = self.n_residuals();
        let mut r_tilde = Array1::zeros(m);
        let mut delta_r = Array1::zeros(m);
        let mut lower_iters = 0u64;
        for (i, run) in solved.iter().enumerate() {
            let diff = &run.x_tilde - &self.signals[i];
            r_tilde[i] = diff.dot(&diff).sqrt() * scale;
            delta_r[i] = run.certified_error;
            lower_iters += run.iterations as u64;
        }
        if let Some(reg) = self.regularizer_residual(theta)? {
            r_tilde[m - 1] = reg;
            delta_r[m - 1] = T::zero();
        }
        if r_tilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite residual entries"));
        }
        let f_tilde = r_tilde.dot(&r_tilde);
        let delta_x = delta_r.iter().cloned().fold(T::zero(), T::max);
        let delta_f = sc::<T>(2.0) * f_tilde.sqrt() * delta_x + delta_x * delta_x;
        Ok(ResidualEval {
            r_tilde,
            delta_r,
            f_tilde,
            delta_f,
            lower_iters,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum SolveSpec<T> {
    Certified(T),
    Fixed(usize),
}

/// How an oracle responds to accuracy requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMode {
    /// Honor the requested accuracies (the dynamic-accuracy algorithm).
    Dynamic,
    /// Ignore the request and always run this many iterations per image.
    FixedIterations(usize),
}

/// One row of the oracle evaluation log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalLogRow {
    pub eval_index: u64,
    pub theta: Vec<f64>,
    pub f_tilde: f64,
    pub delta_f: f64,
    pub lower_iters: u64,
    pub cumulative_lower_iters: u64,
}

/// The interface the trust-region driver optimizes against.
pub trait Oracle<T: Scalar> {
    /// Upper-level dimension.
    fn dim(&self) -> usize;
    /// Residual vector length.
    fn n_residuals(&self) -> usize;
    /// Box bounds on `theta`.
    fn bounds(&self) -> (Array1<T>, Array1<T>);
    /// Evaluate with per-image accuracy `||x_tilde_i - x_hat_i|| <= delta_x`.
    fn eval_to_x_accuracy(&mut self, theta: ArrayView1<T>, delta_x: T) -> Result<ResidualEval<T>>;
    /// Evaluate with objective accuracy `|f_tilde - f| <= delta_f`.
    fn eval_to_f_accuracy(&mut self, theta: ArrayView1<T>, delta_f: T) -> Result<ResidualEval<T>>;
    /// Total lower-level iterations consumed so far (monotone).
    fn cumulative_lower_iters(&self) -> u64;
}

/// Training-set oracle with warm starts, work accounting and an evaluation
/// log. Fixed-iteration modes ignore the requested accuracies, which is how
/// the fixed-accuracy baselines are run.
pub struct BilevelOracle<T> {
    set: TrainingSet<T>,
    cache: WarmStartCache<T>,
    mode: AccuracyMode,
    cumulative: u64,
    eval_index: u64,
    log: Vec<EvalLogRow>,
}

impl<T: Scalar> BilevelOracle<T> {
    pub fn new(set: TrainingSet<T>, mode: AccuracyMode) -> Self {
        let cache = WarmStartCache::new(set.n_images());
        BilevelOracle {
            set,
            cache,
            mode,
            cumulative: 0,
            eval_index: 0,
            log: Vec::new(),
        }
    }

    pub fn set(&self) -> &TrainingSet<T> {
        &self.set
    }

    pub fn mode(&self) -> AccuracyMode {
        self.mode
    }

    pub fn log(&self) -> &[EvalLogRow] {
        &self.log
    }

    /// Most recent reconstructions (warm-start cache contents).
    pub fn reconstructions(&self) -> Vec<Option<Array1<T>>> {
        (0..self.set.n_images())
            .map(|i| self.cache.get(i).cloned())
            .collect()
    }

    fn record(&mut self, theta: ArrayView1<T>, eval: &ResidualEval<T>) {
        self.cumulative += eval.lower_iters;
        self.log.push(EvalLogRow {
            eval_index: self.eval_index,
            theta: theta.iter().map(|t| t.as_f64()).collect(),
            f_tilde: eval.f_tilde.as_f64(),
            delta_f: eval.delta_f.as_f64(),
            lower_iters: eval.lower_iters,
            cumulative_lower_iters: self.cumulative,
        });
        self.eval_index += 1;
    }
}

impl<T: Scalar> Oracle<T> for BilevelOracle<T> {
    fn dim(&self) -> usize {
        self.set.dim()
    }

    fn n_residuals(&self) -> usize {
        self.set.n_residuals()
    }

    fn bounds(&self) -> (Array1<T>, Array1<T>) {
        (
            self.set.map().lower().to_owned(),
            self.set.map().upper().to_owned(),
        )
    }

    fn eval_to_x_accuracy(&mut self, theta: ArrayView1<T>, delta_x: T) -> Result<ResidualEval<T>> {
        let eval = match self.mode {
            AccuracyMode::Dynamic => {
                self.set
                    .evaluate_to_x_accuracy(theta, delta_x, &mut self.cache)?
            }
            AccuracyMode::FixedIterations(k) => {
                self.set.fixed_iteration_evaluate(theta, k, &mut self.cache)?
            }
        };
        self.record(theta, &eval);
        Ok(eval)
    }

    fn eval_to_f_accuracy(&mut self, theta: ArrayView1<T>, delta_f: T) -> Result<ResidualEval<T>> {
        let eval = match self.mode {
            AccuracyMode::Dynamic => {
                self.set
                    .evaluate_to_f_accuracy(theta, delta_f, &mut self.cache)?
            }
            AccuracyMode::FixedIterations(k) => {
                self.set.fixed_iteration_evaluate(theta, k, &mut self.cache)?
            }
        };
        self.record(theta, &eval);
        Ok(eval)
    }

    fn cumulative_lower_iters(&self) -> u64 {
        self.cumulative
    }
}
