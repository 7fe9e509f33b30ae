//! Deterministic CSV artifact writers.
//!
//! Every file carries a header row naming each column, and every number
//! is written as `{:.16e}` — 17 significant digits, locale-independent —
//! so identical runs produce byte-identical files and values survive a
//! parse round trip exactly.

use crate::config::{MetricKind, OutputBlock};
use crate::error::{Error, Result};
use crate::flow::{RunResult, TraceRow};
use crate::oracle;
use nalgebra::DVector;
use std::path::Path;

/// Formats one float for CSV output (17 significant digits).
pub fn float_cell(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    csv::Writer::from_path(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush()
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// Writes one vector per particle with a `particle` index column and one
/// column per coordinate named `<prefix>_<k>`.
pub fn write_particles_csv(path: &Path, prefix: &str, particles: &[DVector<f64>]) -> Result<()> {
    let dim = particles.first().map_or(0, |p| p.len());
    let mut w = writer(path)?;
    let mut header = vec!["particle".to_string()];
    header.extend((0..dim).map(|k| format!("{prefix}_{k}")));
    w.write_record(&header)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    for (i, p) in particles.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(p.iter().map(|&v| float_cell(v)));
        w.write_record(&row)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    }
    finish(w, path)
}

/// Writes long-format `metric,value` rows.
pub fn write_metrics_csv(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["metric", "value"])
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    for (name, value) in rows {
        w.write_record([name.as_str(), &float_cell(*value)])
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    }
    finish(w, path)
}

/// Writes per-step, per-particle trace diagnostics.
pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "step",
        "s",
        "particle",
        "likelihood",
        "data_consistency",
        "u_norm",
        "v_norm",
    ])
    .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.s.to_string(),
            r.particle.to_string(),
            float_cell(r.likelihood),
            float_cell(r.data_consistency),
            float_cell(r.u_norm),
            float_cell(r.v_norm),
        ])
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    }
    finish(w, path)
}

/// One sweep result row; PSNR cells stay empty without ground truth.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub psnr_mean: Option<f64>,
    pub psnr_std: Option<f64>,
    pub ensemble_spread: f64,
}

/// Writes the per-value sweep summary.
pub fn write_sweep_summary_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["param", "value", "psnr_mean", "psnr_std", "ensemble_spread"])
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    for r in rows {
        let opt = |v: Option<f64>| v.map_or(String::new(), float_cell);
        w.write_record([
            r.param.clone(),
            r.value.clone(),
            opt(r.psnr_mean),
            opt(r.psnr_std),
            float_cell(r.ensemble_spread),
        ])
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    }
    finish(w, path)
}

/// Headline numbers of one run, reused by the sweep summary.
#[derive(Debug, Clone, Copy)]
pub struct RunSummary {
    pub psnr_mean: Option<f64>,
    pub psnr_std: Option<f64>,
    /// Trace of the latent ensemble covariance (zero for one particle).
    pub ensemble_spread: f64,
}

/// Computes the configured metric rows for a finished run.
pub fn metric_rows(
    result: &RunResult,
    x_true: Option<&DVector<f64>>,
    output: &OutputBlock,
) -> Result<(Vec<(String, f64)>, RunSummary)> {
    let mut rows = Vec::new();
    let mut summary = RunSummary {
        psnr_mean: None,
        psnr_std: None,
        ensemble_spread: 0.0,
    };

    if output.metrics.contains(&MetricKind::Psnr) {
        if let Some(x_ref) = x_true {
            let mut values = Vec::with_capacity(result.decoded.len());
            for (i, x) in result.decoded.iter().enumerate() {
                let p = oracle::psnr(x, x_ref, output.psnr_peak)?;
                rows.push((format!("psnr_particle_{i}"), p));
                values.push(p);
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            rows.push(("psnr_mean".to_string(), mean));
            rows.push(("psnr_std".to_string(), std));
            summary.psnr_mean = Some(mean);
            summary.psnr_std = Some(std);
        }
    }

    let ensemble = &result.ensemble;
    if ensemble.len() >= 2 {
        let (mean, cov) = oracle::ensemble_stats(ensemble)?;
        summary.ensemble_spread = cov.trace();
        if output.metrics.contains(&MetricKind::Ensemble) {
            for (k, &v) in mean.iter().enumerate() {
                rows.push((format!("latent_mean_{k}"), v));
            }
            for j in 0..cov.nrows() {
                for k in 0..cov.ncols() {
                    rows.push((format!("latent_cov_{j}_{k}"), cov[(j, k)]));
                }
            }
            rows.push(("ensemble_spread".to_string(), summary.ensemble_spread));
        }
    } else if output.metrics.contains(&MetricKind::Ensemble) {
        // A single particle still has a well-defined mean; the covariance
        // rows are omitted rather than reported as a fake zero.
        for (k, &v) in ensemble.particles[0].iter().enumerate() {
            rows.push((format!("latent_mean_{k}"), v));
        }
        rows.push(("ensemble_spread".to_string(), 0.0));
    }

    Ok((rows, summary))
}

/// Writes all artifacts of one run into `dir`: `particles_latent.csv`,
/// `particles_decoded.csv`, `metrics.csv`, and `trace.csv` when tracing
/// was enabled. Returns the summary used by sweeps.
pub fn write_run_artifacts(
    dir: &Path,
    result: &RunResult,
    x_true: Option<&DVector<f64>>,
    output: &OutputBlock,
) -> Result<RunSummary> {
    write_particles_csv(
        &dir.join("particles_latent.csv"),
        "z",
        &result.ensemble.particles,
    )?;
    write_particles_csv(&dir.join("particles_decoded.csv"), "x", &result.decoded)?;
    let (rows, summary) = metric_rows(result, x_true, output)?;
    write_metrics_csv(&dir.join("metrics.csv"), &rows)?;
    if let Some(trace) = &result.trace {
        write_trace_csv(&dir.join("trace.csv"), trace)?;
    }
    Ok(summary)
}
