//! Result files: metric tables as CSV and JSON, per-replicate digests as
//! newline-delimited JSON, and the prediction report.
//!
//! Every number is rendered once to text (currency with 2 decimals,
//! shares with 4) and both formats are written from that text, so CSV and
//! JSON always carry the same values. Column order is fixed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::equilibrium::PredictionReport;
use crate::error::EmitError;
use crate::metrics::{EfficiencyMode, SurplusMode};
use crate::model::FraudKind;
use crate::scenario::{OutputFormat, ReplicationReport};
use crate::tables::OutcomeRow;

/// One rendered table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    /// Currency, 2 decimals.
    Money(f64),
    /// Share or ratio, 4 decimals.
    Share(f64),
    Int(i64),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Money(x) => format!("{:.2}", x + 0.0),
            Cell::Share(x) => format!("{:.4}", x + 0.0),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Int(i) => Value::from(*i),
            Cell::Money(_) | Cell::Share(_) => {
                let text = self.render();
                serde_json::Number::from_f64(text.parse().expect("rendered number"))
                    .map_or(Value::Null, Value::Number)
            }
        }
    }
}

/// A table with fixed column order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, EmitError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| EmitError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("utf-8 csv"))
    }

    pub fn to_json(&self) -> Result<String, EmitError> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, cell)| ((*c).to_string(), cell.json()))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&rows)?;
        text.push('\n');
        Ok(text)
    }

    /// Column-aligned plain text for terminals.
    pub fn to_text(&self) -> String {
        let rendered: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(Cell::render).collect())
            .collect();
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                rendered
                    .iter()
                    .map(|r| r[i].len())
                    .chain([c.len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: Vec<&str>| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(self.columns.clone());
        for row in &rendered {
            out.push_str(&line(row.iter().map(String::as_str).collect()));
        }
        out
    }

    /// Writes `<stem>.csv` and/or `<stem>.json`; returns the paths written.
    pub fn write(
        &self,
        dir: &Path,
        stem: &str,
        formats: &[OutputFormat],
    ) -> Result<Vec<PathBuf>, EmitError> {
        let mut written = Vec::new();
        for format in formats {
            let (ext, text) = match format {
                OutputFormat::Csv => ("csv", self.to_csv()?),
                OutputFormat::Json => ("json", self.to_json()?),
            };
            let path = dir.join(format!("{stem}.{ext}"));
            write_file(&path, text.as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> EmitError + '_ {
    move |source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), EmitError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(path, bytes).map_err(io(path))
}

/// Metric table: one row per replicated cell.
pub fn metrics_table(reports: &[ReplicationReport]) -> Table {
    let mut t = Table::new(vec![
        "institution",
        "condition",
        "transparent",
        "n_reps",
        "efficiency_mode",
        "efficiency",
        "efficiency_se",
        "surplus_mode",
        "consumer_surplus",
        "expert_surplus",
        "delta",
        "approach_rate",
        "undertreatment",
        "overtreatment",
        "overcharging",
        "expert_any_fraud",
    ]);
    for r in reports {
        let m = &r.metrics;
        t.push(vec![
            Cell::Text(r.institution.label().into()),
            Cell::Text(r.label.clone()),
            Cell::Bool(r.transparent),
            Cell::Int(r.n_reps as i64),
            Cell::Text(efficiency_label(m.efficiency_mode).into()),
            Cell::Share(m.relative_efficiency),
            Cell::Share(m.efficiency_se),
            Cell::Text(surplus_label(m.surplus.mode).into()),
            Cell::Money(m.surplus.consumer.to_f64()),
            Cell::Money(m.surplus.expert.to_f64()),
            Cell::Money(m.surplus.delta.to_f64()),
            Cell::Share(m.approach_rate),
            Cell::Share(m.fraud.conditional[&FraudKind::Undertreatment]),
            Cell::Share(m.fraud.conditional[&FraudKind::Overtreatment]),
            Cell::Share(m.fraud.conditional[&FraudKind::Overcharging]),
            Cell::Share(m.fraud.expert_any),
        ]);
    }
    t
}

/// Attraction shares by decision source, one row per (cell, source).
pub fn attraction_table(reports: &[ReplicationReport]) -> Table {
    let mut t = Table::new(vec!["institution", "condition", "source", "attraction"]);
    for r in reports {
        for (source, share) in &r.metrics.objective_attraction {
            t.push(vec![
                Cell::Text(r.institution.label().into()),
                Cell::Text(r.label.clone()),
                Cell::Text(source.clone()),
                Cell::Share(*share),
            ]);
        }
    }
    t
}

/// Outcome table: institution × objective with approach share and behavior.
pub fn outcome_table(rows: &[OutcomeRow]) -> Table {
    let mut t = Table::new(vec![
        "institution",
        "objective",
        "approach_share",
        "behavior",
        "consumer_surplus",
        "expert_surplus",
        "delta",
        "efficiency",
    ]);
    for r in rows {
        t.push(vec![
            Cell::Text(r.institution.label().into()),
            Cell::Text(r.objective.label().into()),
            Cell::Share(r.approach_share.to_f64()),
            Cell::Text(r.behavior.clone()),
            Cell::Money(r.consumer_surplus.to_f64()),
            Cell::Money(r.expert_surplus.to_f64()),
            Cell::Money((r.consumer_surplus - r.expert_surplus).to_f64()),
            Cell::Share(r.efficiency),
        ]);
    }
    t
}

/// Prediction verification: one row per analytic cell.
pub fn prediction_table(report: &PredictionReport) -> Table {
    let mut t = Table::new(vec![
        "institution",
        "objective",
        "transparent",
        "low",
        "high",
        "consumer",
        "expert",
        "total",
        "pass",
        "mismatches",
    ]);
    for c in &report.checks {
        let r = &c.result;
        t.push(vec![
            Cell::Text(r.institution.label().into()),
            Cell::Text(r.objective.label().into()),
            Cell::Bool(r.transparent),
            Cell::Text(r.low.to_string()),
            Cell::Text(r.high.to_string()),
            Cell::Money(r.consumer_expected.to_f64()),
            Cell::Money(r.expert_expected.to_f64()),
            Cell::Money(r.total_market_income.to_f64()),
            Cell::Bool(c.pass),
            Cell::Text(c.mismatches.join("; ")),
        ]);
    }
    t
}

/// One JSON line per replicate, tagged with the cell label.
pub fn write_digests(path: &Path, reports: &[ReplicationReport]) -> Result<(), EmitError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    let file = fs::File::create(path).map_err(io(path))?;
    let mut w = BufWriter::new(file);
    for r in reports {
        for d in &r.digests {
            let mut line = serde_json::to_value(d)?;
            if let Value::Object(map) = &mut line {
                map.insert("cell".into(), Value::String(r.label.clone()));
            }
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n").map_err(io(path))?;
        }
    }
    w.flush().map_err(io(path))
}

/// Writes metric and attraction tables plus optional digests.
pub fn emit_results(
    dir: &Path,
    reports: &[ReplicationReport],
    formats: &[OutputFormat],
    digests: bool,
) -> Result<Vec<PathBuf>, EmitError> {
    let mut written = metrics_table(reports).write(dir, "metrics", formats)?;
    written.extend(attraction_table(reports).write(dir, "attraction", formats)?);
    if digests {
        let path = dir.join("digests.ndjson");
        write_digests(&path, reports)?;
        written.push(path);
    }
    Ok(written)
}

fn efficiency_label(mode: EfficiencyMode) -> &'static str {
    match mode {
        EfficiencyMode::Realized => "realized",
        EfficiencyMode::Expected => "expected",
    }
}

fn surplus_label(mode: SurplusMode) -> &'static str {
    match mode {
        SurplusMode::GroupTotal => "group_total",
        SurplusMode::PerCapita => "per_capita",
    }
}
