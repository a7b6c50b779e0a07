use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::mc::MonteCarloSummary;
use super::run::{NodeSummary, RunSummary, ScenarioResult, TraceRow};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: plot failed: {msg}")]
    Plot { path: String, msg: String },
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn write_rows<T: serde::Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), OutputError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub const TRACE_HEADER: [&str; 4] = ["t", "node", "error", "flag"];
pub const SUMMARY_HEADER: [&str; 12] = [
    "seed",
    "outcome",
    "false_alarm",
    "first_detection",
    "detected_nodes",
    "max_final_error",
    "min_center_error",
    "max_center_error",
    "mean_snr_db",
    "network_snr_db",
    "spectral_radius",
    "final_gamma",
];
pub const NODES_HEADER: [&str; 5] = ["node", "sector", "detection_time", "final_error", "center_error"];

/// Trace as CSV text; floats use shortest round-trip formatting, so
/// re-reading is lossless.
pub fn trace_csv_string(trace: &[TraceRow]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(TRACE_HEADER).expect("in-memory write");
    for r in trace {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<(), OutputError> {
    write_rows(path, &TRACE_HEADER, trace)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

pub fn write_summary_csv(path: &Path, rows: &[RunSummary]) -> Result<(), OutputError> {
    write_rows(path, &SUMMARY_HEADER, rows)
}

pub fn write_nodes_csv(path: &Path, rows: &[NodeSummary]) -> Result<(), OutputError> {
    write_rows(path, &NODES_HEADER, rows)
}

fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    fs::write(path, text).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.display().to_string(),
        source,
    })
}

/// Writes `trace.csv`, `summary.csv`, `nodes.csv`, `config.resolved.json`
/// and, with the `plots` feature, `errors.svg` and `flags.svg`.
pub fn emit_outputs(result: &ScenarioResult, out_dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = out_dir.join(name);
        written.push(p.clone());
        p
    };
    write_trace_csv(&out("trace.csv"), &result.trace)?;
    write_summary_csv(&out("summary.csv"), std::slice::from_ref(&result.summary))?;
    write_nodes_csv(&out("nodes.csv"), &result.nodes)?;
    write_text(&out("config.resolved.json"), &result.config.to_json())?;
    #[cfg(feature = "plots")]
    {
        super::plot::error_plot(&result.trace, &out("errors.svg"))?;
        super::plot::flag_plot(&result.trace, &out("flags.svg"))?;
    }
    Ok(written)
}

/// Writes `mc_summary.csv` (one row per seed) and `config.resolved.json`.
pub fn emit_monte_carlo(
    summary: &MonteCarloSummary,
    config_json: &str,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, OutputError> {
    ensure_dir(out_dir)?;
    let table = out_dir.join("mc_summary.csv");
    let config = out_dir.join("config.resolved.json");
    write_summary_csv(&table, &summary.rows)?;
    write_text(&config, config_json)?;
    Ok(vec![table, config])
}
