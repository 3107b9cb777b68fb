//! Result rows, append-only persistence, and comparison tables.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub dataset_id: String,
    pub kind: String,
    /// Sub-configuration within one experiment (ensemble variant, input
    /// condition), when the kind produces several comparable rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub split: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    pub decode: String,
    pub seed: u64,
    pub config_hash: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ResultRow {
    pub fn to_jsonl(&self) -> String {
        serde_json::to_string(self).expect("row serializes")
    }
}

/// Appends rows to a line-delimited results file, creating it if absent.
pub fn append_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    for r in rows {
        writeln!(f, "{}", r.to_jsonl())?;
    }
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line)?);
    }
    Ok(rows)
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}"),
        None => "-".to_string(),
    }
}

/// Pivots rows into an aligned text table: one line per experiment, one
/// column per (variant, split, metric) present in the data. Missing cells
/// render as "-". All rows must share a dataset id.
pub fn compare_report(rows: &[ResultRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("report: no rows".into()));
    }
    let dataset = &rows[0].dataset_id;
    if let Some(bad) = rows.iter().find(|r| &r.dataset_id != dataset) {
        return Err(Error::InvalidArgument(format!(
            "report: mixed dataset ids `{dataset}` and `{}`",
            bad.dataset_id
        )));
    }
    // column key: (variant, split, metric name)
    let mut columns: Vec<(String, String, &'static str)> = Vec::new();
    let mut cells: BTreeMap<(String, String, String, &'static str), f64> = BTreeMap::new();
    let mut line_keys: Vec<String> = Vec::new();
    for r in rows {
        let line = format!("{} [{}]", r.experiment_id, r.kind);
        if !line_keys.contains(&line) {
            line_keys.push(line.clone());
        }
        let variant = r.variant.clone().unwrap_or_default();
        for (metric, value) in [("wer", r.wer), ("cer", r.cer), ("bleu", r.bleu)] {
            if let Some(v) = value {
                let col = (variant.clone(), r.split.clone(), metric);
                if !columns.contains(&col) {
                    columns.push(col.clone());
                }
                cells.insert((line.clone(), variant.clone(), r.split.clone(), metric), v);
            }
        }
    }
    columns.sort();
    let headers: Vec<String> = columns
        .iter()
        .map(|(variant, split, metric)| {
            if variant.is_empty() {
                format!("{split}/{metric}")
            } else {
                format!("{variant}/{split}/{metric}")
            }
        })
        .collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len().max(6)).collect();
    let id_width = line_keys.iter().map(|k| k.len()).max().unwrap_or(10).max(10);
    let mut out = String::new();
    out.push_str(&format!("{:<id_width$}", "experiment"));
    for (h, w) in headers.iter().zip(&widths) {
        out.push_str(&format!("  {h:>w$}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(id_width + widths.iter().map(|w| w + 2).sum::<usize>()));
    out.push('\n');
    for line in &line_keys {
        out.push_str(&format!("{line:<id_width$}"));
        for ((variant, split, metric), w) in columns.iter().zip(&mut widths) {
            let v = cells
                .get(&(line.clone(), variant.clone(), split.clone(), metric))
                .copied();
            out.push_str(&format!("  {:>w$}", fmt_cell(v)));
        }
        out.push('\n');
    }
    // surface notes (inversion flags and the like) under the table
    let mut notes: Vec<&str> = rows
        .iter()
        .filter_map(|r| r.note.as_deref())
        .collect();
    notes.sort_unstable();
    notes.dedup();
    for n in notes {
        out.push_str(&format!("note: {n}\n"));
    }
    Ok(out)
}
