//! Numeric report tables written as CSV or JSON.
//!
//! Numbers use the shortest decimal that round-trips, so identical inputs
//! produce identical bytes on every platform. Metadata lines (`# key=value`
//! in CSV, a `meta` object in JSON) carry run settings.

use std::fmt::Write as _;
use std::path::Path;

use crate::distill::{RunHistory, SweepAxis, SweepRow};
use crate::error::{Error, Result};
use crate::losses::{BaselineLosses, LossBreakdown};
use crate::metrics::MetricsReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// `.json` selects JSON; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn from_metrics(m: &MetricsReport) -> Self {
        let mut t = Table::new(&[
            "abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3", "n_pixels",
        ]);
        t.push(vec![
            m.abs_rel,
            m.sq_rel,
            m.rmse,
            m.rmse_log,
            m.delta1,
            m.delta2,
            m.delta3,
            m.n_pixels as f64,
        ]);
        t
    }

    pub fn from_loss(loss: &LossBreakdown, baselines: &BaselineLosses) -> Self {
        let mut t = Table::new(&[
            "l_dpm", "l_depth", "total", "pixel_count", "ssim", "mse", "si", "ssim_si", "ssim_mse",
        ]);
        t.push(vec![
            loss.l_dpm,
            loss.l_depth,
            loss.total,
            loss.pixel_count as f64,
            baselines.ssim,
            baselines.mse,
            baselines.si,
            baselines.ssim_si,
            baselines.ssim_mse,
        ]);
        t
    }

    pub fn from_history(h: &RunHistory) -> Self {
        let mut t = Table::new(&["step", "lr", "l_dpm", "l_depth", "total", "absrel"]);
        for r in &h.records {
            t.push(vec![
                r.step as f64,
                r.lr,
                r.loss.l_dpm,
                r.loss.l_depth,
                r.loss.total,
                r.abs_rel,
            ]);
        }
        t
    }

    pub fn from_sweep(axis: SweepAxis, rows: &[SweepRow]) -> Self {
        let name = axis.to_string();
        let mut t = Table::new(&[name.as_str(), "l_dpm", "l_depth", "total", "absrel"]);
        for r in rows {
            t.push(vec![r.value, r.loss.l_dpm, r.loss.l_depth, r.loss.total, r.abs_rel]);
        }
        t
    }
}

/// Shortest round-trip decimal; integral values print without a fraction and
/// very small or large magnitudes use exponent notation.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if v == v.trunc() && a < 1e15 {
        format!("{}", v as i64)
    } else if (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn render_csv(table: &Table) -> Result<String> {
    let mut out = String::new();
    for (k, v) in &table.meta {
        let _ = writeln!(out, "# {k}={v}");
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(&table.columns).map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|&v| format_number(v))).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Malformed(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).expect("CSV output is UTF-8"));
    Ok(out)
}

pub fn render_json(table: &Table) -> String {
    let quote = |s: &str| serde_json::to_string(s).expect("strings always serialize");
    let number = |v: f64| if v.is_finite() { format_number(v) } else { "null".to_string() };
    let mut out = String::from("{\n  \"meta\": {");
    for (i, (k, v)) in table.meta.iter().enumerate() {
        let sep = if i == 0 { "" } else { "," };
        let _ = write!(out, "{sep}\n    {}: {}", quote(k), quote(v));
    }
    out.push_str(if table.meta.is_empty() { "},\n" } else { "\n  },\n" });
    out.push_str("  \"rows\": [");
    for (i, row) in table.rows.iter().enumerate() {
        let sep = if i == 0 { "" } else { "," };
        let fields: Vec<String> = table
            .columns
            .iter()
            .zip(row)
            .map(|(c, &v)| format!("{}: {}", quote(c), number(v)))
            .collect();
        let _ = write!(out, "{sep}\n    {{{}}}", fields.join(", "));
    }
    out.push_str(if table.rows.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
    out
}

pub fn write_report(table: &Table, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Csv => render_csv(table)?,
        ReportFormat::Json => render_json(table),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_csv_report(text: &str) -> Result<Table> {
    let mut meta = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(m) = line.strip_prefix("# ") {
            if let Some((k, v)) = m.split_once('=') {
                meta.push((k.to_string(), v.to_string()));
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut r = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let columns: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Malformed(format!("bad number {f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != columns.len() {
            return Err(Error::Malformed("ragged CSV report".into()));
        }
        rows.push(row);
    }
    Ok(Table { meta, columns, rows })
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_report(&text)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Malformed(format!("CSV: {e}"))
}
