//! CSV and JSON artifacts. Floats are written with fixed precision so the
//! files are byte-identical for a given seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Comparison, ControllerRun, JobSummary, ScenarioReport, SweepPoint};
use crate::domain::MetricsRecord;
use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 10] = [
    "time_s",
    "job_id",
    "knob_kind",
    "knob_value",
    "p95_ms",
    "mean_ms",
    "throughput",
    "power_w",
    "slo_ms",
    "violated",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_metrics<W: Write>(out: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.write_record([
            format!("{:.6}", r.time),
            r.job_id.to_string(),
            r.knob.kind.to_string(),
            r.knob.value.to_string(),
            format!("{:.6}", r.p95),
            format!("{:.6}", r.mean_latency),
            format!("{:.6}", r.throughput),
            format!("{:.6}", r.power),
            format!("{:.6}", r.slo),
            r.violated.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_sweep<W: Write>(out: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bs", "mtl", "throughput", "p95_ms", "mean_ms"])?;
    for p in points {
        w.write_record([
            p.bs.to_string(),
            p.mtl.to_string(),
            format!("{:.6}", p.throughput),
            format!("{:.6}", p.p95_ms),
            format!("{:.6}", p.mean_ms),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(out: W, c: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "job_id",
        "dnn_id",
        "approach",
        "dnnscaler_steady_throughput",
        "clipper_steady_throughput",
        "improvement_pct",
    ])?;
    for r in &c.rows {
        let approach = match r.approach {
            Some(crate::profiler::Approach::Batching) => "batching",
            Some(crate::profiler::Approach::MultiTenancy) => "multi_tenancy",
            None => "",
        };
        w.write_record([
            r.job_id.to_string(),
            r.dnn_id.clone(),
            approach.to_string(),
            format!("{:.6}", r.dnnscaler_steady_throughput),
            format!("{:.6}", r.clipper_steady_throughput),
            format!("{:.6}", r.improvement_pct),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Failure<'a> {
    job_id: u32,
    dnn_id: &'a str,
    error: String,
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    controller: String,
    jobs: Vec<&'a JobSummary>,
    failures: Vec<Failure<'a>>,
}

pub fn summary_json(run: &ControllerRun) -> Result<String> {
    let doc = RunSummary {
        controller: run.controller.to_string(),
        jobs: run.traces().map(|t| &t.summary).collect(),
        failures: run
            .jobs
            .iter()
            .filter_map(|j| {
                j.result.as_ref().err().map(|e| Failure {
                    job_id: j.job_id,
                    dnn_id: &j.dnn_id,
                    error: e.to_string(),
                })
            })
            .collect(),
    };
    to_json(&doc)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialising output: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Writes `metrics_<controller>.csv` and `summary_<controller>.json` for each
/// run, plus `comparison.{csv,json}` when present. Returns the written paths.
pub fn write_report(dir: &Path, report: &ScenarioReport) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    for run in &report.runs {
        let name = run.controller.to_string();
        let records: Vec<MetricsRecord> = run
            .traces()
            .flat_map(|t| t.records.iter().cloned())
            .collect();
        let mut csv_bytes = Vec::new();
        write_metrics(&mut csv_bytes, &records)?;
        let csv_path = dir.join(format!("metrics_{name}.csv"));
        write_file(&csv_path, &csv_bytes)?;
        written.push(csv_path);

        let json_path = dir.join(format!("summary_{name}.json"));
        write_file(&json_path, summary_json(run)?.as_bytes())?;
        written.push(json_path);
    }
    if let Some(c) = &report.comparison {
        let mut csv_bytes = Vec::new();
        write_comparison_csv(&mut csv_bytes, c)?;
        let csv_path = dir.join("comparison.csv");
        write_file(&csv_path, &csv_bytes)?;
        written.push(csv_path);
        let json_path = dir.join("comparison.json");
        write_file(&json_path, to_json(c)?.as_bytes())?;
        written.push(json_path);
    }
    Ok(written)
}

pub fn write_sweep_file(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut bytes = Vec::new();
    write_sweep(&mut bytes, points)?;
    write_file(path, &bytes)
}

pub fn write_trace_files(dir: &Path, stem: &str, trace: &super::JobTrace) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut bytes = Vec::new();
    write_metrics(&mut bytes, &trace.records)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    write_file(&csv_path, &bytes)?;
    let json_path = dir.join(format!("{stem}.json"));
    write_file(&json_path, to_json(&trace.summary)?.as_bytes())?;
    Ok(vec![csv_path, json_path])
}
