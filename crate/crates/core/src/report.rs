//! On-disk run artifacts and cross-run reports.
//!
//! Every run directory holds `history.csv` (one row per trust-region
//! iteration, fixed column order with `theta_*` columns last), `evals.csv`
//! (the oracle evaluation log), `meta.json` (configuration, seed, dataset
//! hash, outcome), `final_params.csv`, `reconstructions.csv` and, for MRI,
//! `pattern.csv`. Datasets are a `dataset.csv` plus a `dataset.json` sidecar
//! recording the generating spec. CSV dialect: UTF-8, comma separated, `.`
//! decimal, header row; floats are written with Rust's shortest round-trip
//! formatting, so identical runs produce identical bytes.

use crate::bilevel::EvalLogRow;
use crate::datagen::{DataKind, Dataset, SignalSpec};
use crate::driver::{IterationRecord, StepKind, Termination};
use crate::error::{Error, Result};
use crate::experiments::{best_f_by_work, ExperimentConfig, ExperimentResult};
use crate::problems::Measurement;
use ndarray::Array1;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

const HISTORY_COLUMNS: &[&str] = &[
    "k",
    "delta",
    "f_tilde",
    "delta_fk",
    "g_norm",
    "rho_tilde",
    "rho_ref",
    "step",
    "fully_linear",
    "min_accuracy_enforced",
    "evals_used",
    "lower_iters",
    "cum_lower_iters",
];

/// Run metadata sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: ExperimentConfig,
    pub variant: String,
    pub dataset_sha256: String,
    pub theta: Vec<f64>,
    pub lower_params: (f64, f64, f64),
    pub f_tilde: f64,
    pub delta_f: f64,
    pub termination: Termination,
    pub evals_used: usize,
    pub lower_iters: u64,
}

/// Writes dataset files: `dataset.csv` with one row per image and component
/// (`truth`, `meas` or `meas_re`/`meas_im`) plus a `dataset.json` sidecar.
pub fn write_dataset(dir: &Path, dataset: &Dataset<f64>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("dataset.csv")).map_err(csv_err)?;
    let n = dataset.spec.n_pixels;
    let mut header = vec!["id".to_string(), "component".to_string()];
    header.extend((0..n).map(|j| format!("v{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, x) in dataset.signals.iter().enumerate() {
        write_value_row(&mut w, i, "truth", x.iter().copied())?;
        match &dataset.measurements[i] {
            Measurement::Real(y) => {
                write_value_row(&mut w, i, "meas", y.iter().copied())?;
            }
            Measurement::Complex(y) => {
                write_value_row(&mut w, i, "meas_re", y.iter().map(|c| c.re))?;
                write_value_row(&mut w, i, "meas_im", y.iter().map(|c| c.im))?;
            }
        }
    }
    w.flush()?;
    let sidecar = serde_json::json!({
        "kind": dataset.kind,
        "spec": dataset.spec,
    });
    fs::write(
        dir.join("dataset.json"),
        serde_json::to_string_pretty(&sidecar).map_err(json_err)?,
    )?;
    Ok(())
}

fn write_value_row<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    id: usize,
    component: &str,
    values: impl Iterator<Item = f64>,
) -> Result<()> {
    let mut record = vec![id.to_string(), component.to_string()];
    record.extend(values.map(fmt_f64));
    w.write_record(&record).map_err(csv_err)
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset<f64>> {
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("dataset.json"))?).map_err(json_err)?;
    let kind: DataKind =
        serde_json::from_value(sidecar["kind"].clone()).map_err(json_err)?;
    let spec: SignalSpec =
        serde_json::from_value(sidecar["spec"].clone()).map_err(json_err)?;
    let mut reader = csv::Reader::from_path(dir.join("dataset.csv")).map_err(csv_err)?;
    let mut signals: Vec<Array1<f64>> = Vec::new();
    let mut re_parts: Vec<Array1<f64>> = Vec::new();
    let mut im_parts: Vec<Array1<f64>> = Vec::new();
    let mut reals: Vec<Array1<f64>> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let component = row.get(1).ok_or_else(|| Error::format("missing component"))?;
        let values: Array1<f64> = row
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|e| Error::format(e.to_string())))
            .collect::<Result<Vec<_>>>()?
            .into();
        match component {
            "truth" => signals.push(values),
            "meas" => reals.push(values),
            "meas_re" => re_parts.push(values),
            "meas_im" => im_parts.push(values),
            other => return Err(Error::format(format!("unknown component {other}"))),
        }
    }
    let measurements: Vec<Measurement<f64>> = match kind {
        DataKind::Denoise => reals.into_iter().map(Measurement::Real).collect(),
        DataKind::Mri => {
            if re_parts.len() != im_parts.len() {
                return Err(Error::format("mismatched complex component rows"));
            }
            re_parts
                .into_iter()
                .zip(im_parts)
                .map(|(re, im)| {
                    Measurement::Complex(Array1::from_shape_fn(re.len(), |j| {
                        Complex::new(re[j], im[j])
                    }))
                })
                .collect()
        }
    };
    if signals.len() != measurements.len() || signals.is_empty() {
        return Err(Error::format("dataset rows incomplete"));
    }
    Ok(Dataset {
        kind,
        spec,
        signals,
        measurements,
    })
}

/// SHA-256 of the dataset CSV bytes, recorded in run metadata.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let bytes = fs::read(dir.join("dataset.csv"))?;
    Ok(hex_digest(&bytes))
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes all artifacts of one experiment run into `dir`.
pub fn write_run(dir: &Path, result: &ExperimentResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_history_csv(&dir.join("history.csv"), &result.history)?;
    write_eval_log_csv(&dir.join("evals.csv"), &result.eval_log)?;

    // dataset alongside the run for reproducibility and hashing
    let dataset = result.config.dataset()?;
    write_dataset(dir, &dataset)?;
    let meta = RunMeta {
        config: result.config.clone(),
        variant: result.config.variant_label(),
        dataset_sha256: dataset_hash(dir)?,
        theta: result.theta.clone(),
        lower_params: result.lower_params,
        f_tilde: result.f_tilde,
        delta_f: result.delta_f,
        termination: result.termination.clone(),
        evals_used: result.evals_used,
        lower_iters: result.lower_iters,
    };
    fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&meta).map_err(json_err)?,
    )?;

    // final mapped parameters
    let mut w = csv::Writer::from_path(dir.join("final_params.csv")).map_err(csv_err)?;
    w.write_record(["name", "value"]).map_err(csv_err)?;
    w.write_record(["alpha", &fmt_f64(result.lower_params.0)])
        .map_err(csv_err)?;
    w.write_record(["nu", &fmt_f64(result.lower_params.1)])
        .map_err(csv_err)?;
    w.write_record(["xi", &fmt_f64(result.lower_params.2)])
        .map_err(csv_err)?;
    for (j, t) in result.theta.iter().enumerate() {
        w.write_record([format!("theta_{j}"), fmt_f64(*t)])
            .map_err(csv_err)?;
    }
    w.write_record(["f_tilde", &fmt_f64(result.f_tilde)])
        .map_err(csv_err)?;
    w.flush()?;

    // reconstructions with per-image quality
    let mut w = csv::Writer::from_path(dir.join("reconstructions.csv")).map_err(csv_err)?;
    let n = result.reconstructions.first().map_or(0, |r| r.len());
    let mut header = vec!["id".to_string(), "mse".to_string(), "baseline_mse".to_string()];
    header.extend((0..n).map(|j| format!("v{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for (rep, rec) in result.recon_reports.iter().zip(&result.reconstructions) {
        let mut row = vec![
            rep.image.to_string(),
            fmt_f64(rep.mse),
            rep.baseline_mse.map(fmt_f64).unwrap_or_default(),
        ];
        row.extend(rec.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;

    if let Some(pattern) = &result.pattern {
        let mut w = csv::Writer::from_path(dir.join("pattern.csv")).map_err(csv_err)?;
        w.write_record(["mode", "theta", "weight", "active"])
            .map_err(csv_err)?;
        for e in pattern {
            w.write_record([
                e.mode.to_string(),
                fmt_f64(e.theta),
                fmt_f64(e.weight),
                e.active.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// History CSV: fixed columns then one `theta_j` column per dimension.
pub fn write_history_csv(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let d = history.first().map_or(0, |r| r.theta.len());
    let mut header: Vec<String> = HISTORY_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..d).map(|j| format!("theta_{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in history {
        let mut row = vec![
            r.k.to_string(),
            fmt_f64(r.delta),
            fmt_f64(r.f_tilde),
            fmt_f64(r.delta_fk),
            fmt_f64(r.g_norm),
            r.rho_tilde.map(fmt_f64).unwrap_or_default(),
            r.rho_ref.map(fmt_f64).unwrap_or_default(),
            r.step.as_str().to_string(),
            r.fully_linear.to_string(),
            r.min_accuracy_enforced.to_string(),
            r.evals_used.to_string(),
            r.lower_iters.to_string(),
            r.cum_lower_iters.to_string(),
        ];
        row.extend(r.theta.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a history CSV back into records.
pub fn read_history_csv(path: &Path) -> Result<Vec<IterationRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let fixed = HISTORY_COLUMNS.len();
    if headers.len() < fixed
        || headers.iter().take(fixed).ne(HISTORY_COLUMNS.iter().copied())
    {
        return Err(Error::format("history schema mismatch"));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let get = |i: usize| row.get(i).unwrap_or_default();
        let parse = |i: usize| -> Result<f64> {
            get(i)
                .parse::<f64>()
                .map_err(|e| Error::format(format!("bad float in history: {e}")))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            let s = get(i);
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse::<f64>().map_err(|e| {
                    Error::format(format!("bad float in history: {e}"))
                })?))
            }
        };
        let step = match get(7) {
            "successful" => StepKind::Successful,
            "model-improving" => StepKind::ModelImproving,
            "unsuccessful" => StepKind::Unsuccessful,
            "safety" => StepKind::Safety,
            other => return Err(Error::format(format!("unknown step kind {other}"))),
        };
        let theta = (fixed..row.len())
            .map(|i| {
                get(i)
                    .parse::<f64>()
                    .map_err(|e| Error::format(format!("bad theta: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(IterationRecord {
            k: get(0)
                .parse()
                .map_err(|e| Error::format(format!("bad k: {e}")))?,
            theta,
            delta: parse(1)?,
            f_tilde: parse(2)?,
            delta_fk: parse(3)?,
            g_norm: parse(4)?,
            rho_tilde: opt(5)?,
            rho_ref: opt(6)?,
            step,
            fully_linear: get(8) == "true",
            min_accuracy_enforced: get(9) == "true",
            evals_used: get(10)
                .parse()
                .map_err(|e| Error::format(format!("bad evals: {e}")))?,
            lower_iters: get(11)
                .parse()
                .map_err(|e| Error::format(format!("bad iters: {e}")))?,
            cum_lower_iters: get(12)
                .parse()
                .map_err(|e| Error::format(format!("bad iters: {e}")))?,
        });
    }
    Ok(out)
}

/// Per-iteration solver trace rows (`iteration, objective, grad_norm`).
pub fn write_solver_trace<T: crate::scalar::Scalar>(
    path: &Path,
    trace: &[crate::solvers::TraceRow<T>],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["iteration", "objective", "grad_norm"])
        .map_err(csv_err)?;
    for row in trace {
        w.write_record([
            row.iteration.to_string(),
            fmt_f64(row.objective.as_f64()),
            fmt_f64(row.grad_norm.as_f64()),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_eval_log_csv(path: &Path, log: &[EvalLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let d = log.first().map_or(0, |r| r.theta.len());
    let mut header = vec![
        "eval_index".to_string(),
        "f_tilde".to_string(),
        "delta_f".to_string(),
        "lower_iters".to_string(),
        "cum_lower_iters".to_string(),
    ];
    header.extend((0..d).map(|j| format!("theta_{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in log {
        let mut row = vec![
            r.eval_index.to_string(),
            fmt_f64(r.f_tilde),
            fmt_f64(r.delta_f),
            r.lower_iters.to_string(),
            r.cumulative_lower_iters.to_string(),
        ];
        row.extend(r.theta.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One run loaded for reporting.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub name: String,
    pub meta: RunMeta,
    pub history: Vec<IterationRecord>,
}

/// Loads every run directory (any directory containing `meta.json`).
pub fn load_runs(dirs: &[&Path]) -> Result<Vec<LoadedRun>> {
    let mut runs = Vec::new();
    for dir in dirs {
        if !dir.join("meta.json").exists() {
            continue;
        }
        let meta: RunMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)
            .map_err(json_err)?;
        let history = read_history_csv(&dir.join("history.csv"))?;
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| meta.variant.clone());
        runs.push(LoadedRun {
            name,
            meta,
            history,
        });
    }
    if runs.is_empty() {
        return Err(Error::format("no runs found"));
    }
    Ok(runs)
}

/// Joins run histories on cumulative lower-level iterations: for each work
/// checkpoint (the union over runs) the best objective value each run had
/// reached by then. Empty cells mean the run had not started by that point.
pub fn best_f_table(runs: &[LoadedRun]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut checkpoints: Vec<u64> = runs
        .iter()
        .flat_map(|r| r.history.iter().map(|rec| rec.cum_lower_iters))
        .collect();
    checkpoints.sort_unstable();
    checkpoints.dedup();

    let series: Vec<Vec<(u64, f64)>> = runs.iter().map(|r| best_f_by_work(&r.history)).collect();
    let mut header = vec!["cum_lower_iters".to_string()];
    header.extend(runs.iter().map(|r| r.name.clone()));
    let mut rows = Vec::with_capacity(checkpoints.len());
    for w in checkpoints {
        let mut row = vec![w.to_string()];
        for s in &series {
            // last best value at or before this work level
            let val = s
                .iter()
                .take_while(|(work, _)| *work <= w)
                .last()
                .map(|(_, f)| fmt_f64(*f))
                .unwrap_or_default();
            row.push(val);
        }
        rows.push(row);
    }
    (header, rows)
}

/// Writes the cross-run comparison: `best_f_vs_work.csv` and
/// `final_params.csv`.
pub fn write_report(dir: &Path, runs: &[LoadedRun]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (header, rows) = best_f_table(runs);
    let mut w = csv::Writer::from_path(dir.join("best_f_vs_work.csv")).map_err(csv_err)?;
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("final_params.csv")).map_err(csv_err)?;
    w.write_record([
        "run",
        "variant",
        "alpha",
        "nu",
        "xi",
        "f_tilde",
        "delta_f",
        "evals_used",
        "lower_iters",
        "termination",
    ])
    .map_err(csv_err)?;
    for r in runs {
        w.write_record([
            r.name.clone(),
            r.meta.variant.clone(),
            fmt_f64(r.meta.lower_params.0),
            fmt_f64(r.meta.lower_params.1),
            fmt_f64(r.meta.lower_params.2),
            fmt_f64(r.meta.f_tilde),
            fmt_f64(r.meta.delta_f),
            r.meta.evals_used.to_string(),
            r.meta.lower_iters.to_string(),
            format!("{:?}", r.meta.termination),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::format(e.to_string())
}

fn json_err(e: serde_json::Error) -> Error {
    Error::format(e.to_string())
}
