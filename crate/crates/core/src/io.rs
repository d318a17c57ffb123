//! Result rows shared by the command-line front end and its tests.

use serde::{Deserialize, Serialize};

use crate::behaviors::fmt17;
use crate::error::{Error, Result};

pub const RESULT_HEADER: [&str; 8] =
    ["task", "functional", "loss_model", "eta1", "eta2", "value", "classical_bound", "converged"];

/// One line of a results file. Missing numbers (no crossing, no loss)
/// are written as empty fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub functional: String,
    pub loss_model: String,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub value: Option<f64>,
    pub classical_bound: f64,
    pub converged: bool,
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt17).unwrap_or_default()
}

pub fn results_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(RESULT_HEADER).map_err(io_err)?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.functional.clone(),
            r.loss_model.clone(),
            opt(r.eta1),
            opt(r.eta2),
            opt(r.value),
            fmt17(r.classical_bound),
            r.converged.to_string(),
        ])
        .map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn results_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != RESULT_HEADER {
        return Err(Error::Parse(format!("unexpected results header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(|e| Error::Parse(e.to_string()))).collect()
}

/// Generic numeric table with a header, used for curve samples.
pub fn table_to_csv(header: &[&str], rows: &[Vec<Option<f64>>], labels: Option<&[String]>) -> String {
    let mut out = String::new();
    if labels.is_some() {
        out.push_str("label,");
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (k, row) in rows.iter().enumerate() {
        if let Some(l) = labels {
            out.push_str(&l[k]);
            out.push(',');
        }
        let cells: Vec<String> = row.iter().map(|v| opt(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
