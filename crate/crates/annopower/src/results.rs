//! Result serialization: the sweep CSV, score-line exports, and the
//! fit/test/summary documents.
//!
//! Floats in the CSV use the shortest round-trip decimal form; score
//! lines and fit documents use 17 significant digits so readers recover
//! bit-identical doubles.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{DatasetCounts, FitResult};
use crate::inference::TestResult;
use crate::metrics::MetricKind;
use crate::sweep::{find_min_budget, find_min_ci, GridCell, MinimumEntry, SweepReport, SweepRow};

/// Column order of the results CSV.
pub const RESULT_COLUMNS: [&str; 15] = [
    "preset_or_alpha",
    "metric",
    "epsilon",
    "nk",
    "k",
    "n",
    "skipped",
    "p_value",
    "ci_lower",
    "ci_upper",
    "ci_width",
    "delta",
    "replicates",
    "seed",
    "reason",
];

fn fmt_f64(v: f64) -> String {
    v.to_string()
}

/// Writes one row per grid cell, in grid order. Skipped and failed cells
/// leave the result fields empty and carry their reason in the trailing
/// column. Output is byte-deterministic for identical reports.
pub fn write_results_csv<W: Write>(report: &SweepReport, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(RESULT_COLUMNS)?;
    for row in &report.rows {
        let cell = &row.cell;
        let (p, lo, hi, width, delta) = match &row.result {
            Some(r) => (
                fmt_f64(r.p_value),
                fmt_f64(r.ci_lower),
                fmt_f64(r.ci_upper),
                fmt_f64(r.ci_width),
                fmt_f64(r.effect_size),
            ),
            None => Default::default(),
        };
        let reason = cell
            .skipped
            .clone()
            .or_else(|| row.error.clone())
            .unwrap_or_default();
        writer.write_record([
            report.label.as_str(),
            &cell.metric.to_string(),
            &fmt_f64(cell.epsilon),
            &cell.nk.to_string(),
            &cell.k.to_string(),
            &cell.n.to_string(),
            if cell.skipped.is_some() { "true" } else { "false" },
            &p,
            &lo,
            &hi,
            &width,
            &delta,
            &report.replicates.to_string(),
            &report.master_seed.to_string(),
            &reason,
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, line: usize) -> Result<T> {
    field.parse().map_err(|_| Error::Format {
        line: Some(line),
        msg: format!("cannot parse {name} from {field:?}"),
    })
}

/// Reads a results CSV back into a report (the inverse of
/// `write_results_csv`).
pub fn read_results_csv<R: Read>(source: R) -> Result<SweepReport> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(RESULT_COLUMNS) {
        return Err(Error::Format {
            line: Some(1),
            msg: format!("unexpected header: {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut label = String::new();
    let mut master_seed = 0u64;
    let mut replicates = 0usize;
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        if record.len() != RESULT_COLUMNS.len() {
            return Err(Error::Format {
                line: Some(line),
                msg: format!("expected {} fields, got {}", RESULT_COLUMNS.len(), record.len()),
            });
        }
        label = record[0].to_string();
        let metric: MetricKind = record[1].parse()?;
        let epsilon: f64 = parse_field(&record[2], "epsilon", line)?;
        let nk: u64 = parse_field(&record[3], "nk", line)?;
        let k: u32 = parse_field(&record[4], "k", line)?;
        let n: u64 = parse_field(&record[5], "n", line)?;
        let skipped: bool = parse_field(&record[6], "skipped", line)?;
        replicates = parse_field(&record[12], "replicates", line)?;
        master_seed = parse_field(&record[13], "seed", line)?;
        let reason = record[14].to_string();
        let cell = GridCell {
            ordinal: idx,
            nk,
            k,
            n,
            epsilon,
            metric,
            skipped: skipped.then_some(reason.clone()),
        };
        let result = if record[7].is_empty() {
            None
        } else {
            Some(TestResult {
                metric,
                p_value: parse_field(&record[7], "p_value", line)?,
                ci_lower: parse_field(&record[8], "ci_lower", line)?,
                ci_upper: parse_field(&record[9], "ci_upper", line)?,
                ci_width: parse_field(&record[10], "ci_width", line)?,
                effect_size: parse_field(&record[11], "delta", line)?,
                effect_size_standardized: f64::NAN,
                r_replicates: replicates,
                n_items: n as usize,
                k_responses: k as usize,
                nk_budget: nk,
                n_categories: 0,
                epsilon,
                master_seed,
            })
        };
        let error = (!skipped && result.is_none() && !reason.is_empty()).then_some(reason);
        rows.push(SweepRow { cell, result, error });
    }
    Ok(SweepReport {
        label,
        master_seed,
        replicates,
        rows,
    })
}

/// Writes one score per line with 17 significant digits (round-trip
/// exact), in generation order.
pub fn write_scores<W: Write>(scores: &[f64], mut sink: W) -> Result<()> {
    for s in scores {
        writeln!(sink, "{s:.16e}")?;
    }
    Ok(())
}

/// Reads a score-per-line file.
pub fn read_scores<R: Read>(source: R) -> Result<Vec<f64>> {
    let reader = BufReader::new(source);
    let mut scores = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        scores.push(parse_field(line.trim(), "score", idx + 1)?);
    }
    Ok(scores)
}

/// The fit document schema (floats carry 17 significant digits).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDocument {
    pub alpha_hat: Vec<f64>,
    pub theta_pooled: Vec<f64>,
    pub expected_theta: Vec<f64>,
    pub mab: f64,
    pub iterations: usize,
    pub converged: bool,
    pub label_names: Vec<String>,
}

fn json_float_array(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Writes the fit result plus the label mapping as a JSON document.
pub fn write_fit_document<W: Write>(
    fit: &FitResult,
    data: &DatasetCounts,
    mut sink: W,
) -> Result<()> {
    let labels: Vec<String> = data
        .label_names()
        .iter()
        .map(|l| serde_json::to_string(l).expect("string serializes"))
        .collect();
    writeln!(sink, "{{")?;
    writeln!(sink, "  \"alpha_hat\": {},", json_float_array(fit.alpha_hat.alpha()))?;
    writeln!(sink, "  \"theta_pooled\": {},", json_float_array(fit.theta_pooled.probs()))?;
    writeln!(sink, "  \"expected_theta\": {},", json_float_array(fit.expected_theta.probs()))?;
    writeln!(sink, "  \"mab\": {:.16e},", fit.mab)?;
    writeln!(sink, "  \"iterations\": {},", fit.iterations)?;
    writeln!(sink, "  \"converged\": {},", fit.converged)?;
    writeln!(sink, "  \"label_names\": [{}]", labels.join(", "))?;
    writeln!(sink, "}}")?;
    Ok(())
}

/// The minimal-budget / minimal-CI summary written next to a sweep CSV.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub label: String,
    pub p_threshold: f64,
    pub total_cells: usize,
    pub active_cells: usize,
    pub skipped_cells: usize,
    /// Per (metric, epsilon): lowest budget reaching the threshold.
    pub min_budget: Vec<MinimumEntry>,
    /// Per (metric, epsilon): smallest CI width within that lowest
    /// budget, when one was found.
    pub min_ci_at_budget: Vec<MinimumEntry>,
}

/// Builds the summary: budget minima at the threshold, and CI minima
/// evaluated at each pair's minimal budget.
pub fn summarize_report(report: &SweepReport, p_threshold: f64) -> Result<SweepSummary> {
    let min_budget = find_min_budget(report, p_threshold);
    let mut min_ci_at_budget = Vec::with_capacity(min_budget.len());
    for entry in &min_budget {
        if let Some(best) = &entry.best {
            let at_nk = find_min_ci(report, best.nk)?;
            if let Some(found) = at_nk.into_iter().find(|e| {
                e.metric == entry.metric && e.epsilon.to_bits() == entry.epsilon.to_bits()
            }) {
                min_ci_at_budget.push(found);
                continue;
            }
        }
        min_ci_at_budget.push(MinimumEntry {
            metric: entry.metric,
            epsilon: entry.epsilon,
            best: None,
        });
    }
    Ok(SweepSummary {
        label: report.label.clone(),
        p_threshold,
        total_cells: report.rows.len(),
        active_cells: report.active_rows().count(),
        skipped_cells: report.skipped_count(),
        min_budget,
        min_ci_at_budget,
    })
}
