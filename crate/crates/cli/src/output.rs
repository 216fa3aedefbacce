use clap::ValueEnum;
use proxdiv::{ExperimentReport, ProximalTrace, StopReason};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRecord {
    pub model: String,
    pub estimator: String,
    pub lambda: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub objective: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Six significant digits, positional unless the exponent is extreme.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..6).contains(&e) {
        format!("{:.*}", (5 - e).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn json_bytes<T: Serialize + ?Sized>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    b.push(b'\n');
    Ok(b)
}

fn stop_name(s: StopReason) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn strings(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

pub fn estimate(r: &EstimateRecord, theta: &str, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => json_bytes(r),
        Format::Csv => {
            let header = strings(&["model", "estimator", "lambda", &format!("{theta}1"), &format!("{theta}2"), "objective", "iterations", "stop"]);
            let row = vec![
                r.model.clone(),
                r.estimator.clone(),
                sig6(r.lambda),
                sig6(r.theta1),
                sig6(r.theta2),
                sig6(r.objective),
                r.iterations.to_string(),
                stop_name(r.stop),
            ];
            csv_bytes(&header, [row])
        }
    }
}

pub fn trace(t: &ProximalTrace, theta: &str, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => json_bytes(t),
        Format::Csv => {
            let header = strings(&[
                "k",
                "lambda",
                &format!("{theta}1"),
                &format!("{theta}2"),
                "objective",
                "log1p_objective",
                "penalty",
                "step_norm",
            ]);
            let rows = t.records.iter().map(|r| {
                vec![
                    r.k.to_string(),
                    sig6(r.lambda),
                    sig6(r.theta1),
                    sig6(r.theta2),
                    sig6(r.objective),
                    sig6(r.log1p_objective),
                    sig6(r.penalty),
                    sig6(r.step_norm),
                ]
            });
            csv_bytes(&header, rows)
        }
    }
}

/// One row per scenario and estimator: means and standard deviations.
pub fn table(reports: &[ExperimentReport]) -> Result<Vec<u8>, CliError> {
    let theta = if reports.iter().any(|r| r.model.starts_with("weibull")) { "nu" } else { "mu" };
    let header = strings(&[
        "scenario",
        "estimator",
        "runs",
        "failures",
        "lambda",
        "lambda_sd",
        &format!("{theta}1"),
        &format!("{theta}1_sd"),
        &format!("{theta}2"),
        &format!("{theta}2_sd"),
        "tvd",
        "tvd_sd",
    ]);
    let rows = reports.iter().flat_map(|rep| {
        rep.summaries.iter().map(move |s| {
            let mut row = vec![rep.scenario.to_string(), s.estimator.clone(), s.runs.to_string(), s.failures.to_string()];
            for c in 0..3 {
                row.push(sig6(s.mean[c]));
                row.push(sig6(s.sd[c]));
            }
            row.push(sig6(s.tvd_mean));
            row.push(sig6(s.tvd_sd));
            row
        })
    });
    csv_bytes(&header, rows)
}
