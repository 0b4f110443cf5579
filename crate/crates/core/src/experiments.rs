//! Experiment harness: denoising and MRI sampling-pattern studies.
//!
//! Three experiment families, mirroring the study setups:
//! `denoise-1` learns `alpha = 10^theta` with fixed smoothing, `denoise-3`
//! learns `(alpha, nu, xi)` with a condition-number penalty, and `mri` learns
//! per-mode Fourier sampling weights with an l1 penalty and box
//! `[0.001, 0.99]`. Each runs the trust-region driver over a seeded synthetic
//! dataset with one of three accuracy variants per lower-level solver:
//! dynamic (certified, accuracy driven by the algorithm), or fixed low/high
//! iteration counts.
//!
//! The harness is `f64`-concrete; the numeric core underneath is generic.

use crate::bilevel::{
    AccuracyMode, BilevelOracle, EvalLogRow, Regularizer, SolverKind, TrainingSet,
};
use crate::datagen::{gen_dataset, DataKind, Dataset, SignalSpec};
use crate::driver::{run_with_shadow, IterationRecord, Termination, TrustRegionConfig};
use crate::error::{Error, Result};
use crate::fourier::UnitaryDft;
use crate::problems::{ForwardOp, Measurement, ParamMap, ProblemInstance};
use crate::solvers::{fista_solve, StopRule};
use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

/// Experiment family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "denoise-1")]
    Denoise1,
    #[serde(rename = "denoise-3")]
    Denoise3,
    #[serde(rename = "mri")]
    Mri,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Denoise1 => "denoise-1",
            ExperimentKind::Denoise3 => "denoise-3",
            ExperimentKind::Mri => "mri",
        }
    }

    pub fn data_kind(&self) -> DataKind {
        match self {
            ExperimentKind::Mri => DataKind::Mri,
            _ => DataKind::Denoise,
        }
    }
}

/// Lower-level accuracy variant. Low/high resolve to the fixed iteration
/// counts used by the studies: 1,000/10,000 for GD and 200/2,000 for FISTA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracySpec {
    Dynamic,
    Low,
    High,
    Fixed(usize),
}

impl AccuracySpec {
    pub fn resolve(&self, solver: SolverKind) -> AccuracyMode {
        match (self, solver) {
            (AccuracySpec::Dynamic, _) => AccuracyMode::Dynamic,
            (AccuracySpec::Low, SolverKind::Gd { .. }) => AccuracyMode::FixedIterations(1_000),
            (AccuracySpec::Low, SolverKind::Fista) => AccuracyMode::FixedIterations(200),
            (AccuracySpec::High, SolverKind::Gd { .. }) => AccuracyMode::FixedIterations(10_000),
            (AccuracySpec::High, SolverKind::Fista) => AccuracyMode::FixedIterations(2_000),
            (AccuracySpec::Fixed(k), _) => AccuracyMode::FixedIterations(*k),
        }
    }

    pub fn label(&self) -> String {
        match self {
            AccuracySpec::Dynamic => "dynamic".into(),
            AccuracySpec::Low => "low".into(),
            AccuracySpec::High => "high".into(),
            AccuracySpec::Fixed(k) => format!("fixed{k}"),
        }
    }
}

/// Full experiment description; serializable as the run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n_pixels: usize,
    pub n_images: usize,
    pub sigma: f64,
    pub seed: u64,
    pub solver: SolverKind,
    pub accuracy: AccuracySpec,
    /// Regularizer weight: condition penalty for denoise-3, l1 for MRI.
    pub beta: f64,
    /// Starting point; defaults to the per-family convention when empty.
    pub theta0: Vec<f64>,
    pub trust_region: TrustRegionConfig<f64>,
    /// FISTA iterations for final reconstructions.
    pub recon_iters: usize,
    /// MRI pattern threshold: modes with `theta <= threshold` are switched off.
    pub mri_threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::paper(ExperimentKind::Denoise1)
    }
}

impl ExperimentConfig {
    /// Full-size study configuration for a family.
    pub fn paper(kind: ExperimentKind) -> Self {
        let mut cfg = ExperimentConfig {
            kind,
            n_pixels: 256,
            n_images: 10,
            sigma: 0.1,
            seed: 1,
            solver: SolverKind::Fista,
            accuracy: AccuracySpec::Dynamic,
            beta: 0.0,
            theta0: Vec::new(),
            trust_region: TrustRegionConfig::default(),
            recon_iters: 2_000,
            mri_threshold: 1e-3,
        };
        match kind {
            ExperimentKind::Denoise1 => {
                cfg.trust_region.eval_budget = 20;
            }
            ExperimentKind::Denoise3 => {
                cfg.n_images = 20;
                cfg.beta = 1e-6;
                cfg.trust_region.eval_budget = 100;
            }
            ExperimentKind::Mri => {
                cfg.n_pixels = 64;
                cfg.sigma = 0.05;
                cfg.beta = 0.1;
                cfg.trust_region.eval_budget = 3_000;
            }
        }
        cfg
    }

    /// Reduced sizes for quick runs: N = 64, n = 5 denoising; N = 32 MRI.
    pub fn desk(kind: ExperimentKind) -> Self {
        let mut cfg = ExperimentConfig::paper(kind);
        match kind {
            ExperimentKind::Denoise1 => {
                cfg.n_pixels = 64;
                cfg.n_images = 5;
                cfg.trust_region.eval_budget = 40;
            }
            ExperimentKind::Denoise3 => {
                cfg.n_pixels = 64;
                cfg.n_images = 8;
                cfg.trust_region.eval_budget = 60;
            }
            ExperimentKind::Mri => {
                cfg.n_pixels = 32;
                cfg.trust_region.eval_budget = 1_200;
            }
        }
        cfg
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_accuracy(mut self, accuracy: AccuracySpec) -> Self {
        self.accuracy = accuracy;
        self
    }

    pub fn variant_label(&self) -> String {
        format!("{}-{}", self.accuracy.label(), self.solver.name())
    }

    /// Per-family default starting point.
    pub fn default_theta0(&self) -> Vec<f64> {
        match self.kind {
            ExperimentKind::Denoise1 => vec![0.0],
            ExperimentKind::Denoise3 => vec![0.0, -1.0, -1.0],
            ExperimentKind::Mri => vec![0.25; self.n_pixels],
        }
    }

    pub fn resolved_theta0(&self) -> Vec<f64> {
        if self.theta0.is_empty() {
            self.default_theta0()
        } else {
            self.theta0.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trust_region.validate()?;
        let spec = self.signal_spec();
        spec.validate()?;
        let d = match self.kind {
            ExperimentKind::Denoise1 => 1,
            ExperimentKind::Denoise3 => 3,
            ExperimentKind::Mri => self.n_pixels,
        };
        if !self.theta0.is_empty() && self.theta0.len() != d {
            return Err(Error::domain(format!(
                "theta0 has length {}, expected {d}",
                self.theta0.len()
            )));
        }
        if self.recon_iters == 0 {
            return Err(Error::domain("recon_iters must be positive"));
        }
        Ok(())
    }

    pub fn signal_spec(&self) -> SignalSpec {
        SignalSpec {
            n_pixels: self.n_pixels,
            sigma: self.sigma,
            n_images: self.n_images,
            seed: self.seed,
        }
    }

    /// The parameter map for this family.
    pub fn param_map(&self) -> ParamMap<f64> {
        match self.kind {
            ExperimentKind::Denoise1 => ParamMap::log_alpha(1e-3, 1e-3),
            ExperimentKind::Denoise3 => ParamMap::log_alpha_nu_xi(),
            ExperimentKind::Mri => ParamMap::mri_weights(self.n_pixels, 0.01, 0.01, 1e-4),
        }
    }

    pub fn regularizer(&self) -> Option<Regularizer<f64>> {
        match self.kind {
            ExperimentKind::Denoise1 => None,
            ExperimentKind::Denoise3 => {
                (self.beta > 0.0).then_some(Regularizer::Condition { beta: self.beta })
            }
            ExperimentKind::Mri => (self.beta > 0.0).then_some(Regularizer::L1 { beta: self.beta }),
        }
    }

    pub fn dataset(&self) -> Result<Dataset<f64>> {
        gen_dataset(&self.signal_spec(), self.kind.data_kind())
    }

    pub fn training_set(&self) -> Result<TrainingSet<f64>> {
        self.training_set_from(self.dataset()?)
    }

    pub fn training_set_from(&self, dataset: Dataset<f64>) -> Result<TrainingSet<f64>> {
        TrainingSet::from_dataset(dataset, self.param_map(), self.solver, self.regularizer())
    }
}

/// Per-image reconstruction quality report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconReport {
    pub image: usize,
    /// `||x_rec - x||^2 / N`.
    pub mse: f64,
    /// Zero-filled adjoint baseline MSE (MRI only).
    pub baseline_mse: Option<f64>,
}

/// MRI sampling pattern after thresholding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternEntry {
    pub mode: usize,
    pub theta: f64,
    pub weight: f64,
    pub active: bool,
}

/// Everything a single run produces.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub theta: Vec<f64>,
    /// Mapped lower-level parameters `(alpha, nu, xi)`.
    pub lower_params: (f64, f64, f64),
    pub f_tilde: f64,
    pub delta_f: f64,
    pub termination: Termination,
    pub evals_used: usize,
    pub lower_iters: u64,
    pub history: Vec<IterationRecord>,
    pub eval_log: Vec<EvalLogRow>,
    pub reconstructions: Vec<Array1<f64>>,
    pub recon_reports: Vec<ReconReport>,
    /// MRI only: per-mode thresholded pattern.
    pub pattern: Option<Vec<PatternEntry>>,
}

impl ExperimentResult {
    pub fn alpha(&self) -> f64 {
        self.lower_params.0
    }

    /// Best objective value by cumulative lower-level work: pairs
    /// `(cumulative iterations, best f_tilde so far)` per upper iteration.
    pub fn best_f_by_work(&self) -> Vec<(u64, f64)> {
        best_f_by_work(&self.history)
    }
}

/// Stepwise minimum of `f_tilde` against cumulative lower-level iterations.
pub fn best_f_by_work(history: &[IterationRecord]) -> Vec<(u64, f64)> {
    let mut best = f64::INFINITY;
    let mut out = Vec::with_capacity(history.len());
    for rec in history {
        best = best.min(rec.f_tilde);
        out.push((rec.cum_lower_iters, best));
    }
    out
}

/// Work at which a run first reaches within `rel` of its final best value.
pub fn work_to_reach(history: &[IterationRecord], rel: f64) -> Option<u64> {
    let series = best_f_by_work(history);
    let final_best = series.last()?.1;
    let target = final_best * (1.0 + rel);
    series.iter().find(|(_, f)| *f <= target).map(|(w, _)| *w)
}

/// Runs one experiment end to end.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let set = config.training_set()?;
    let mode = config.accuracy.resolve(config.solver);
    let mut tr = config.trust_region.clone();
    tr.dynamic_accuracy = matches!(mode, AccuracyMode::Dynamic);
    let mut oracle = BilevelOracle::new(set, mode);
    let theta0 = Array1::from_vec(config.resolved_theta0());
    let outcome = run_with_shadow(&mut oracle, theta0.view(), &tr, None)?;

    let theta = Array1::from_vec(outcome.theta.to_vec());
    let map = config.param_map();
    let lower_params = map.lower_params(theta.view());
    let (reconstructions, recon_reports, pattern) = finalize(config, theta.view())?;
    Ok(ExperimentResult {
        config: config.clone(),
        theta: theta.to_vec(),
        lower_params,
        f_tilde: outcome.f_tilde,
        delta_f: outcome.delta_f,
        termination: outcome.termination,
        evals_used: outcome.evals_used,
        lower_iters: outcome.lower_iters,
        history: outcome.history,
        eval_log: oracle.log().to_vec(),
        reconstructions,
        recon_reports,
        pattern,
    })
}

/// Final reconstructions at `theta` with a fixed FISTA budget, plus quality
/// reports and (for MRI) the thresholded sampling pattern.
pub fn finalize(
    config: &ExperimentConfig,
    theta: ArrayView1<f64>,
) -> Result<(Vec<Array1<f64>>, Vec<ReconReport>, Option<Vec<PatternEntry>>)> {
    let dataset = config.dataset()?;
    let map = config.param_map();
    let n_pix = config.n_pixels;

    let pattern = match config.kind {
        ExperimentKind::Mri => {
            let weights = map.sampling_weights(theta).expect("MRI map");
            Some(
                (0..n_pix)
                    .map(|j| PatternEntry {
                        mode: j,
                        theta: theta[j],
                        weight: if theta[j] > config.mri_threshold {
                            weights[j]
                        } else {
                            0.0
                        },
                        active: theta[j] > config.mri_threshold,
                    })
                    .collect::<Vec<_>>(),
            )
        }
        _ => None,
    };

    let mut reconstructions = Vec::with_capacity(dataset.signals.len());
    let mut reports = Vec::with_capacity(dataset.signals.len());
    for (i, (x, y)) in dataset
        .signals
        .iter()
        .zip(dataset.measurements.iter())
        .enumerate()
    {
        let (inst, x0, baseline_mse) = match (&pattern, y) {
            (Some(p), Measurement::Complex(yc)) => {
                // reconstruct with the thresholded weights; the Tikhonov term
                // keeps the objective strongly convex even with zeroed modes
                let weights = Array1::from_iter(p.iter().map(|e| e.weight));
                let (alpha, nu, xi) = map.lower_params(theta);
                let inst = ProblemInstance::new(
                    ForwardOp::UnitaryDft(UnitaryDft::new(n_pix)),
                    weights,
                    y.clone(),
                    alpha,
                    nu,
                    xi,
                )?;
                let dft = UnitaryDft::new(n_pix);
                let masked = Array1::from_shape_fn(n_pix, |j| {
                    if p[j].active {
                        yc[j]
                    } else {
                        num_complex::Complex::new(0.0, 0.0)
                    }
                });
                let zero_filled = dft.adjoint_real(masked.view());
                let baseline = mse(zero_filled.view(), x.view());
                (inst, dft.adjoint_real(masked.view()), Some(baseline))
            }
            (None, Measurement::Real(yr)) => {
                let inst = map.instantiate(theta, y)?;
                (inst, yr.clone(), None)
            }
            _ => return Err(Error::domain("dataset and experiment kind mismatch")),
        };
        let solve = fista_solve(
            &inst,
            x0.view(),
            StopRule::FixedIterations(config.recon_iters),
        )?;
        reports.push(ReconReport {
            image: i,
            mse: mse(solve.x_tilde.view(), x.view()),
            baseline_mse,
        });
        reconstructions.push(solve.x_tilde);
    }
    Ok((reconstructions, reports, pattern))
}

fn mse(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let d = &a - &b;
    d.dot(&d) / a.len() as f64
}

/// The six study variants: {dynamic, low, high} x {GD, FISTA}.
pub fn standard_variants() -> Vec<(SolverKind, AccuracySpec)> {
    vec![
        (SolverKind::gd(), AccuracySpec::Dynamic),
        (SolverKind::gd(), AccuracySpec::Low),
        (SolverKind::gd(), AccuracySpec::High),
        (SolverKind::Fista, AccuracySpec::Dynamic),
        (SolverKind::Fista, AccuracySpec::Low),
        (SolverKind::Fista, AccuracySpec::High),
    ]
}

/// Runs several variants of the same experiment on the same dataset.
pub fn compare_variants(
    base: &ExperimentConfig,
    variants: &[(SolverKind, AccuracySpec)],
) -> Result<Vec<(String, ExperimentResult)>> {
    let mut out = Vec::with_capacity(variants.len());
    for (solver, accuracy) in variants {
        let config = base.clone().with_solver(*solver).with_accuracy(*accuracy);
        let label = config.variant_label();
        log::info!("running variant {label}");
        let result = run_experiment(&config)?;
        out.push((label, result));
    }
    Ok(out)
}

/// Runs `denoise-1` per noise level; returns `(sigma, final alpha, f_tilde)`.
pub fn sweep_sigma(base: &ExperimentConfig, sigmas: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    if base.kind != ExperimentKind::Denoise1 {
        return Err(Error::domain("sigma sweep is a denoise-1 study"));
    }
    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let mut config = base.clone();
        config.sigma = sigma;
        let result = run_experiment(&config)?;
        rows.push((sigma, result.alpha(), result.f_tilde));
    }
    Ok(rows)
}
