//! Scoring of run artifacts: character 3-gram recall, whole-token recall,
//! correct-language rate, and retrieval recall@k, aggregated per language.
//!
//! Evaluation is a pure function of the run artifact plus the referenced
//! query file and passage stores: re-evaluating the same artifact produces
//! byte-identical outputs. It writes `metrics.jsonl` (one row per completed
//! query, sorted by query id), `summary.json` (per-language aggregates plus
//! a pooled row), and `table.txt` (an aligned plain-text view).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mrag_core::chunk::Passage;
use mrag_core::lang::LanguageCode;
use mrag_core::metrics::{
    char3_recall, clr_eligible, contains_normalized_answer, token_recall, ClrTally,
};
use mrag_core::normalize::NormalizationPolicy;

use crate::clients::LanguageIdService;
use crate::corpus::QueryRecord;
use crate::error::{Error, Result};
use crate::ioutil;
use crate::pipeline::{read_records, read_run_errors, read_run_manifest, RetrievalMode, RunManifest};

/// Per-query metrics for one completed query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub query_id: String,
    pub dataset: String,
    pub lang: LanguageCode,
    pub mode: RetrievalMode,
    pub unanswerable: bool,
    /// Every gold answer normalized to empty; the row is excluded from
    /// recall means.
    pub gold_empty: bool,
    /// Best character 3-gram recall over the gold answers, in [0, 1].
    pub char3_recall: f64,
    /// Best whole-token recall over the gold answers, in [0, 1].
    pub token_recall: f64,
    /// Response is long enough (> 20 characters) to language-identify.
    pub clr_eligible: bool,
    /// Identifier verdict; `None` when ineligible, unresolved, or errored.
    pub identified_lang: Option<LanguageCode>,
    /// Whether the response is in the query's language; `None` when
    /// ineligible, unresolved, or errored.
    pub in_user_lang: Option<bool>,
    /// Identifier service failure for this response, if any.
    pub identify_error: Option<String>,
    /// Any gold answer appears (normalized, substring) in the retrieved
    /// context; `None` when the gold answers normalize to empty.
    pub recall_at_k: Option<bool>,
}

/// Aggregates over one language (or pooled over all, when `lang` is `None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    /// `None` pools every language in the run.
    pub lang: Option<LanguageCode>,
    pub mode: RetrievalMode,
    /// Queries in scope = completed + errored.
    pub total: usize,
    pub completed: usize,
    pub errored: usize,
    /// Completed queries entering the recall means (gold answers usable).
    pub scored: usize,
    pub gold_empty: usize,
    /// Mean character 3-gram recall over scored queries, ×100.
    pub char3_recall_pct: Option<f64>,
    /// Mean whole-token recall over scored queries, ×100.
    pub token_recall_pct: Option<f64>,
    /// Correct-language rate over classified eligible responses, in [0,100].
    pub clr_pct: Option<f64>,
    /// Denominator of `clr_pct`: eligible responses with a usable verdict
    /// attempt (unresolved verdicts stay in the denominator).
    pub clr_eligible: u64,
    pub clr_in_user_lang: u64,
    pub clr_unresolved: u64,
    pub clr_skipped_short: u64,
    /// Eligible responses dropped because the identifier itself failed.
    pub identify_errors: usize,
    /// Share of queries whose context contained a gold answer, ×100.
    pub recall_at_k_pct: Option<f64>,
    pub recall_at_k_true: usize,
    pub recall_at_k_scored: usize,
}

/// The machine-readable evaluation summary (`summary.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub config_hash: String,
    pub dataset: String,
    pub mode: RetrievalMode,
    pub context_k: usize,
    /// Identity of the language identifier used for CLR.
    pub identifier: String,
    /// Per-language aggregates, sorted by language code.
    pub rows: Vec<SummaryRow>,
    /// Pooled aggregate across every language.
    pub overall: SummaryRow,
}

/// Full evaluation result: per-query rows plus the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub rows: Vec<MetricRow>,
    pub summary: EvalSummary,
}

/// Score one run artifact.
///
/// `queries` must be the dataset the run executed over (the manifest records
/// its path); `passages` must cover every context passage id. Both are
/// cross-checked and any mismatch is an error rather than a silent skew.
pub fn evaluate_run(
    run_dir: &Path,
    queries: &[QueryRecord],
    passages: &BTreeMap<String, Passage>,
    identifier: &dyn LanguageIdService,
    policy: &NormalizationPolicy,
) -> Result<EvalOutcome> {
    let manifest = read_run_manifest(run_dir)?;
    let records = read_records(run_dir)?;
    let errors = read_run_errors(run_dir)?;
    reconcile(&manifest, records.len(), errors.len(), run_dir)?;

    let selected: Vec<&QueryRecord> = queries
        .iter()
        .filter(|q| manifest.config.languages.contains(&q.lang))
        .collect();
    if selected.len() != manifest.total_queries {
        return Err(Error::Corrupt {
            path: run_dir.to_path_buf(),
            message: format!(
                "manifest ran {} queries but the dataset provides {} for languages {:?}",
                manifest.total_queries,
                selected.len(),
                manifest.config.languages
            ),
        });
    }
    let by_id: HashMap<&str, &QueryRecord> =
        selected.iter().map(|q| (q.query_id.as_str(), *q)).collect();

    let mut rows = Vec::with_capacity(records.len());
    for record in &records {
        let query = *by_id.get(record.query_id.as_str()).ok_or_else(|| Error::Corrupt {
            path: run_dir.to_path_buf(),
            message: format!("record for unknown query id {:?}", record.query_id),
        })?;

        let char3 = char3_recall(&query.gold_answers, &record.response, query.lang, policy);
        let token = token_recall(&query.gold_answers, &record.response, query.lang, policy);

        let eligible = clr_eligible(&record.response);
        let (identified_lang, in_user_lang, identify_error) = if !eligible {
            (None, None, None)
        } else {
            match identifier.identify(&record.response) {
                Ok(verdict) => (
                    verdict.lang,
                    verdict.lang.map(|l| l == query.lang),
                    None,
                ),
                Err(e) => (None, None, Some(e.to_string())),
            }
        };

        let mut context_texts = Vec::with_capacity(record.context_passage_ids.len());
        for id in &record.context_passage_ids {
            let passage = passages.get(id).ok_or_else(|| Error::Corrupt {
                path: run_dir.to_path_buf(),
                message: format!("record {} references unknown passage {id:?}", record.query_id),
            })?;
            context_texts.push(passage.embed_text());
        }
        let recall_at_k =
            contains_normalized_answer(&query.gold_answers, &context_texts, query.lang, policy);

        rows.push(MetricRow {
            query_id: record.query_id.clone(),
            dataset: manifest.config.dataset.clone(),
            lang: query.lang,
            mode: manifest.config.mode,
            unanswerable: query.unanswerable,
            gold_empty: char3.gold_empty,
            char3_recall: char3.score,
            token_recall: token.score,
            clr_eligible: eligible,
            identified_lang,
            in_user_lang,
            identify_error,
            recall_at_k,
        });
    }
    rows.sort_by(|a, b| a.query_id.cmp(&b.query_id));

    // Errored queries appear only in the per-language coverage counts.
    let mut errored_by_lang: BTreeMap<LanguageCode, usize> = BTreeMap::new();
    for error in &errors {
        let query = *by_id.get(error.query_id.as_str()).ok_or_else(|| Error::Corrupt {
            path: run_dir.to_path_buf(),
            message: format!("error ledger names unknown query id {:?}", error.query_id),
        })?;
        *errored_by_lang.entry(query.lang).or_default() += 1;
    }

    let mut summaries = Vec::new();
    for &lang in &manifest.config.languages {
        let lang_rows: Vec<&MetricRow> = rows.iter().filter(|r| r.lang == lang).collect();
        let errored = errored_by_lang.get(&lang).copied().unwrap_or(0);
        if lang_rows.is_empty() && errored == 0 {
            continue;
        }
        summaries.push(summarize(&manifest, Some(lang), &lang_rows, errored));
    }
    let overall = summarize(
        &manifest,
        None,
        &rows.iter().collect::<Vec<_>>(),
        errors.len(),
    );

    Ok(EvalOutcome {
        rows,
        summary: EvalSummary {
            config_hash: manifest.config_hash.clone(),
            dataset: manifest.config.dataset.clone(),
            mode: manifest.config.mode,
            context_k: manifest.config.context_k,
            identifier: identifier.identity(),
            rows: summaries,
            overall,
        },
    })
}

fn reconcile(
    manifest: &RunManifest,
    records: usize,
    errors: usize,
    run_dir: &Path,
) -> Result<()> {
    if records != manifest.completed || errors != manifest.errored {
        return Err(Error::Corrupt {
            path: run_dir.to_path_buf(),
            message: format!(
                "manifest counts ({} completed, {} errored) disagree with artifact \
                 ({records} records, {errors} errors)",
                manifest.completed, manifest.errored
            ),
        });
    }
    if manifest.completed + manifest.errored != manifest.total_queries {
        return Err(Error::Corrupt {
            path: run_dir.to_path_buf(),
            message: format!(
                "manifest counts do not add up: {} + {} != {}",
                manifest.completed, manifest.errored, manifest.total_queries
            ),
        });
    }
    Ok(())
}

fn summarize(
    manifest: &RunManifest,
    lang: Option<LanguageCode>,
    rows: &[&MetricRow],
    errored: usize,
) -> SummaryRow {
    let mut tally = ClrTally::default();
    let mut identify_errors = 0usize;
    let mut char3_sum = 0.0f64;
    let mut token_sum = 0.0f64;
    let mut scored = 0usize;
    let mut gold_empty = 0usize;
    let mut recall_true = 0usize;
    let mut recall_scored = 0usize;

    for row in rows {
        if row.gold_empty {
            gold_empty += 1;
        } else {
            scored += 1;
            char3_sum += row.char3_recall;
            token_sum += row.token_recall;
        }
        if row.identify_error.is_some() {
            identify_errors += 1;
        } else {
            tally.observe(row.clr_eligible, row.in_user_lang);
        }
        if let Some(hit) = row.recall_at_k {
            recall_scored += 1;
            if hit {
                recall_true += 1;
            }
        }
    }

    SummaryRow {
        dataset: manifest.config.dataset.clone(),
        lang,
        mode: manifest.config.mode,
        total: rows.len() + errored,
        completed: rows.len(),
        errored,
        scored,
        gold_empty,
        char3_recall_pct: (scored > 0).then(|| 100.0 * char3_sum / scored as f64),
        token_recall_pct: (scored > 0).then(|| 100.0 * token_sum / scored as f64),
        clr_pct: tally.rate_percent(),
        clr_eligible: tally.eligible,
        clr_in_user_lang: tally.in_user_lang,
        clr_unresolved: tally.unresolved,
        clr_skipped_short: tally.skipped_short,
        identify_errors,
        recall_at_k_pct: (recall_scored > 0)
            .then(|| 100.0 * recall_true as f64 / recall_scored as f64),
        recall_at_k_true: recall_true,
        recall_at_k_scored: recall_scored,
    }
}

fn fmt_pct(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.1}"),
        None => "-".to_string(),
    }
}

/// Render the single-run table: one row per language plus a pooled row.
pub fn render_eval_table(summary: &EvalSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "dataset {} | mode {} | context_k {} | identifier {} | config {}",
        summary.dataset,
        summary.mode,
        summary.context_k,
        summary.identifier,
        &summary.config_hash[..12.min(summary.config_hash.len())]
    );
    let _ = writeln!(
        out,
        "{:<6} {:>6} {:>6} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "lang", "total", "done", "err", "scored", "char3%", "token%", "r@k%", "clr%", "clr_n"
    );
    let mut render_row = |row: &SummaryRow| {
        let _ = writeln!(
            out,
            "{:<6} {:>6} {:>6} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            row.lang.map_or("all", |l| l.as_str()),
            row.total,
            row.completed,
            row.errored,
            row.scored,
            fmt_pct(row.char3_recall_pct),
            fmt_pct(row.token_recall_pct),
            fmt_pct(row.recall_at_k_pct),
            fmt_pct(row.clr_pct),
            row.clr_eligible,
        );
    };
    for row in &summary.rows {
        render_row(row);
    }
    render_row(&summary.overall);
    out
}

pub fn metrics_path(dir: &Path) -> PathBuf {
    dir.join("metrics.jsonl")
}

pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.json")
}

pub fn table_path(dir: &Path) -> PathBuf {
    dir.join("table.txt")
}

/// Persist an evaluation outcome; returns the paths written.
pub fn write_eval(out_dir: &Path, outcome: &EvalOutcome) -> Result<Vec<PathBuf>> {
    let paths = vec![
        metrics_path(out_dir),
        summary_path(out_dir),
        table_path(out_dir),
    ];
    ioutil::write_string(&paths[0], &ioutil::to_jsonl(&outcome.rows)?)?;
    ioutil::write_json(&paths[1], &outcome.summary)?;
    ioutil::write_string(&paths[2], &render_eval_table(&outcome.summary))?;
    Ok(paths)
}

pub fn read_eval_summary(dir: &Path) -> Result<EvalSummary> {
    ioutil::read_json(&summary_path(dir))
}
