//! Cross-run reporting: merge evaluation summaries from several runs (one
//! per retrieval mode) into languages × modes matrices, one per metric.
//!
//! The text rendering puts languages on rows and retrieval modes on columns,
//! with one matrix each for character 3-gram recall, correct-language rate,
//! retrieval recall@k, and coverage. A machine-readable `report.json`
//! carries the same cells as a flat list.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mrag_core::lang::LanguageCode;

use crate::error::{Error, Result};
use crate::evaluation::EvalSummary;
use crate::ioutil;
use crate::pipeline::RetrievalMode;

/// One (dataset, language, mode) cell of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub lang: LanguageCode,
    pub mode: RetrievalMode,
    pub config_hash: String,
    pub char3_recall_pct: Option<f64>,
    pub token_recall_pct: Option<f64>,
    pub clr_pct: Option<f64>,
    pub clr_eligible: u64,
    pub recall_at_k_pct: Option<f64>,
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Cells sorted by (dataset, language, mode).
    pub rows: Vec<ReportRow>,
}

/// Merge evaluation summaries into one report.
///
/// Each (dataset, language, mode) cell must come from exactly one summary;
/// a collision means two runs claim the same cell and is refused.
pub fn build_report(summaries: &[EvalSummary]) -> Result<Report> {
    let mut cells: BTreeMap<(String, LanguageCode, RetrievalMode), ReportRow> = BTreeMap::new();
    for summary in summaries {
        for row in &summary.rows {
            let Some(lang) = row.lang else { continue };
            let key = (row.dataset.clone(), lang, row.mode);
            let cell = ReportRow {
                dataset: row.dataset.clone(),
                lang,
                mode: row.mode,
                config_hash: summary.config_hash.clone(),
                char3_recall_pct: row.char3_recall_pct,
                token_recall_pct: row.token_recall_pct,
                clr_pct: row.clr_pct,
                clr_eligible: row.clr_eligible,
                recall_at_k_pct: row.recall_at_k_pct,
                completed: row.completed,
                total: row.total,
            };
            if let Some(existing) = cells.insert(key, cell) {
                return Err(Error::Config(format!(
                    "two evaluations cover dataset {:?}, language {}, mode {} \
                     (config hashes {} and {})",
                    existing.dataset,
                    lang,
                    existing.mode,
                    &existing.config_hash[..12.min(existing.config_hash.len())],
                    &summary.config_hash[..12.min(summary.config_hash.len())],
                )));
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Config(
            "no evaluation rows to report (empty summaries)".into(),
        ));
    }
    Ok(Report {
        rows: cells.into_values().collect(),
    })
}

fn fmt_cell(value: Option<f64>, width: usize) -> String {
    match value {
        Some(v) => format!("{v:>width$.1}"),
        None => format!("{:>width$}", "-"),
    }
}

/// Render the languages × modes matrices for every dataset in the report.
pub fn render_report(report: &Report) -> String {
    let mut out = String::new();
    let datasets: BTreeSet<&str> = report.rows.iter().map(|r| r.dataset.as_str()).collect();
    for (i, dataset) in datasets.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        render_dataset(&mut out, report, dataset);
    }
    out
}

/// Formats one metric of a report row as a table cell.
type CellFn = fn(&ReportRow) -> String;

fn render_dataset(out: &mut String, report: &Report, dataset: &str) {
    let rows: Vec<&ReportRow> = report
        .rows
        .iter()
        .filter(|r| r.dataset == dataset)
        .collect();
    let modes: Vec<RetrievalMode> = RetrievalMode::ALL
        .into_iter()
        .filter(|m| rows.iter().any(|r| r.mode == *m))
        .collect();
    let langs: BTreeSet<LanguageCode> = rows.iter().map(|r| r.lang).collect();
    let widths: Vec<usize> = modes.iter().map(|m| m.as_str().len().max(7)).collect();

    let _ = writeln!(out, "dataset: {dataset}");
    let sections: [(&str, CellFn); 4] = [
        ("character 3-gram recall x100", |r| {
            fmt_cell(r.char3_recall_pct, 0)
        }),
        ("correct-language rate % (eligible responses)", |r| {
            fmt_cell(r.clr_pct, 0)
        }),
        ("retrieval recall@k %", |r| fmt_cell(r.recall_at_k_pct, 0)),
        ("coverage completed/total", |r| {
            format!("{}/{}", r.completed, r.total)
        }),
    ];
    for (title, value) in sections {
        let _ = writeln!(out, "\n{title}");
        let mut header = format!("{:<6}", "lang");
        for (mode, width) in modes.iter().zip(&widths) {
            let _ = write!(header, "  {:>width$}", mode.as_str(), width = width);
        }
        let _ = writeln!(out, "{header}");
        for &lang in &langs {
            let mut line = format!("{:<6}", lang.as_str());
            for (mode, width) in modes.iter().zip(&widths) {
                let text = rows
                    .iter()
                    .find(|r| r.lang == lang && r.mode == *mode)
                    .map_or_else(|| "-".to_string(), |row| value(row));
                let _ = write!(line, "  {text:>width$}", width = width);
            }
            let _ = writeln!(out, "{line}");
        }
    }
}

pub fn report_json_path(dir: &Path) -> PathBuf {
    dir.join("report.json")
}

pub fn report_table_path(dir: &Path) -> PathBuf {
    dir.join("report.txt")
}

/// Persist a report; returns the paths written.
pub fn write_report(out_dir: &Path, report: &Report) -> Result<Vec<PathBuf>> {
    let paths = vec![report_json_path(out_dir), report_table_path(out_dir)];
    ioutil::write_json(&paths[0], report)?;
    ioutil::write_string(&paths[1], &render_report(report))?;
    Ok(paths)
}
