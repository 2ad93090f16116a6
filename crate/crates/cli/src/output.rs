//! File formats of a run: a manifest written before the first evaluation,
//! one append-friendly CSV trace per repetition, and a JSON summary with the
//! aggregate statistics. Reruns with identical flags produce byte-identical
//! trace CSVs.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crashbo::harness::{ExperimentConfig, ExperimentTrace, Summary};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub created_unix: u64,
    pub config: serde_json::Value,
    pub repetition_seeds: Vec<u64>,
    pub trace_files: Vec<String>,
    pub summary_file: String,
}

pub fn trace_file_name(rep: usize) -> String {
    format!("trace_rep{rep:03}.csv")
}

pub fn write_manifest(dir: &Path, config: &ExperimentConfig) -> anyhow::Result<Manifest> {
    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: serde_json::to_value(config)?,
        repetition_seeds: (0..config.repetitions).map(|r| config.repetition_seed(r)).collect(),
        trace_files: (0..config.repetitions).map(trace_file_name).collect(),
        summary_file: "summary.json".to_string(),
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing manifest {}", path.display()))?;
    Ok(manifest)
}

fn cell(value: Option<f64>) -> String {
    value.map_or_else(String::new, |v| format!("{v}"))
}

/// One row per iteration:
/// `iter,x_1..x_D,label,y_f,y_g,eta_cons,c_hat,regret,regret_best`.
/// Cells without a defined value (failed iterations, baselines' `c_hat`)
/// stay empty.
pub fn write_trace_csv(
    dir: &Path,
    rep: usize,
    config: &ExperimentConfig,
    trace: &ExperimentTrace,
) -> anyhow::Result<PathBuf> {
    let dim = config.benchmark.dim();
    let mut out = String::new();
    out.push_str("iter");
    for d in 1..=dim {
        out.push_str(&format!(",x_{d}"));
    }
    out.push_str(",label,y_f,y_g,eta_cons,c_hat,regret,regret_best\n");
    for record in &trace.records {
        out.push_str(&record.iteration.to_string());
        for v in &record.x {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push(',');
        out.push_str(if record.success { "1" } else { "0" });
        for value in [
            record.objective_obs,
            record.constraint_obs,
            record.eta_cons,
            record.c_hat,
            record.regret,
            record.regret_best,
        ] {
            out.push(',');
            out.push_str(&cell(value));
        }
        out.push('\n');
    }
    let path = dir.join(trace_file_name(rep));
    std::fs::write(&path, out).with_context(|| format!("writing trace {}", path.display()))?;
    Ok(path)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RepetitionDetail {
    pub rep: usize,
    pub seed: u64,
    pub completed: bool,
    pub failures: usize,
    pub final_regret: Option<f64>,
    pub best_regret: Option<f64>,
    pub final_c_hat: Option<f64>,
    pub x_best: Option<Vec<f64>>,
    pub best_feasible: bool,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryFile {
    pub benchmark: String,
    pub method: String,
    pub iterations: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub aggregate: Summary,
    pub repetitions_detail: Vec<RepetitionDetail>,
    pub manifest: Manifest,
}

pub fn write_summary(
    dir: &Path,
    config: &ExperimentConfig,
    manifest: &Manifest,
    summary: &Summary,
    traces: &[ExperimentTrace],
) -> anyhow::Result<PathBuf> {
    let file = SummaryFile {
        benchmark: config.benchmark.name().to_string(),
        method: config.method.name().to_string(),
        iterations: config.iterations,
        repetitions: config.repetitions,
        seed: config.seed,
        aggregate: summary.clone(),
        repetitions_detail: traces
            .iter()
            .enumerate()
            .map(|(rep, t)| RepetitionDetail {
                rep,
                seed: config.repetition_seed(rep),
                completed: t.completed,
                failures: t.failure_count,
                final_regret: t.final_regret(),
                best_regret: t.best_regret(),
                final_c_hat: t.final_c_hat,
                x_best: t.x_best.clone(),
                best_feasible: t.best_feasible,
                wall_clock_secs: t.wall_clock_secs,
            })
            .collect(),
        manifest: manifest.clone(),
    };
    let path = dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&file)?)
        .with_context(|| format!("writing summary {}", path.display()))?;
    Ok(path)
}

/// The comparison-relevant slice of one summary file.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub benchmark: String,
    pub method: String,
    pub mean_final_regret: Option<f64>,
    pub std_final_regret: Option<f64>,
    pub mean_c_hat: Option<f64>,
    pub std_c_hat: Option<f64>,
}

pub fn read_summary_row(path: &Path) -> anyhow::Result<SummaryRow> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading summary {}", path.display()))?;
    let file: SummaryFile =
        serde_json::from_str(&text).with_context(|| format!("parsing summary {}", path.display()))?;
    Ok(SummaryRow {
        benchmark: file.benchmark,
        method: file.method,
        mean_final_regret: file.aggregate.mean_final_regret,
        std_final_regret: file.aggregate.std_final_regret,
        mean_c_hat: file.aggregate.mean_c_hat,
        std_c_hat: file.aggregate.std_c_hat,
    })
}

/// Bar-plot-ready table; methods without a threshold leave those cells empty.
pub fn render_comparison(rows: &[SummaryRow]) -> String {
    let mut out = String::from("method,mean_final_regret,std_final_regret,mean_c_hat,std_c_hat\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.method,
            cell(row.mean_final_regret),
            cell(row.std_final_regret),
            cell(row.mean_c_hat),
            cell(row.std_c_hat),
        ));
    }
    out
}
