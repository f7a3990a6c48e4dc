//! End-to-end run orchestration: optional query translation, dense
//! retrieval, reranking, prompt assembly, and generation, persisted as a
//! resumable run artifact.
//!
//! A run directory contains three canonical files — `manifest.json` (the
//! resolved config and completion status), `records.jsonl` (one generation
//! record per completed query, sorted by query id), and `errors.jsonl`
//! (quarantined per-query failures) — plus two scratch files: an append-only
//! `journal.jsonl` written in completion order that makes runs resumable,
//! and `timings.jsonl` with wall-clock durations. The canonical files carry
//! no timestamps, paths, or completion-order dependence, so reruns with the
//! same config and deterministic services are byte-identical.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use mrag_core::chunk::Passage;
use mrag_core::lang::LanguageCode;
use mrag_core::prompt::{
    build_chat, format_context, render_system_prompt, LanguageNameCatalog, PromptCatalog,
    PromptLabel,
};

use crate::clients::Services;
use crate::corpus::QueryRecord;
use crate::error::{Error, Result};
use crate::index::DenseIndex;
use crate::ioutil;

/// Version stamp written into run manifests.
pub const RUN_FORMAT_VERSION: u32 = 1;

/// Default number of queries processed concurrently.
pub const DEFAULT_PARALLELISM: usize = 8;

/// Which datastore a query retrieves from, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    /// Generation from the bare question; no retrieval calls at all.
    None,
    /// English datastore only.
    English,
    /// The datastore of the query's own language.
    UserLang,
    /// Merged English + user-language datastore.
    #[serde(rename = "english+user_lang")]
    EnglishPlusUserLang,
    /// One merged datastore over every language.
    AllLangs,
}

impl RetrievalMode {
    pub const ALL: [RetrievalMode; 5] = [
        RetrievalMode::None,
        RetrievalMode::English,
        RetrievalMode::UserLang,
        RetrievalMode::EnglishPlusUserLang,
        RetrievalMode::AllLangs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalMode::None => "none",
            RetrievalMode::English => "english",
            RetrievalMode::UserLang => "user_lang",
            RetrievalMode::EnglishPlusUserLang => "english+user_lang",
            RetrievalMode::AllLangs => "all_langs",
        }
    }

    /// Key of the index this mode searches for a query in `user_lang`, or
    /// `None` when the mode retrieves nothing.
    pub fn index_key(self, user_lang: LanguageCode) -> Option<String> {
        match self {
            RetrievalMode::None => None,
            RetrievalMode::English => Some("en".to_string()),
            RetrievalMode::UserLang => Some(user_lang.as_str().to_string()),
            RetrievalMode::EnglishPlusUserLang => {
                if user_lang == LanguageCode::En {
                    Some("en".to_string())
                } else {
                    Some(format!("en+{}", user_lang.as_str()))
                }
            }
            RetrievalMode::AllLangs => Some("all".to_string()),
        }
    }
}

impl core::fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for RetrievalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<RetrievalMode> {
        RetrievalMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown retrieval mode {s:?}")))
    }
}

/// Identities of the services a run was executed against, recorded in the
/// manifest so an artifact documents what produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceIdentities {
    pub embedder: String,
    pub reranker: String,
    pub generator: String,
    pub translator: String,
}

impl ServiceIdentities {
    pub fn of(services: &Services) -> ServiceIdentities {
        ServiceIdentities {
            embedder: services.embedder.identity(),
            reranker: services.reranker.identity(),
            generator: services.generator.identity(),
            translator: services.translator.identity(),
        }
    }
}

/// Everything that determines a run's output, with paths as written in the
/// config file. The output directory is deliberately not part of this
/// struct: runs into different directories from the same config must produce
/// identical artifacts, and the config hash keys resumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRunConfig {
    pub dataset: String,
    pub queries: String,
    pub languages: Vec<LanguageCode>,
    pub mode: RetrievalMode,
    pub prompt_label: PromptLabel,
    pub translate_queries: bool,
    pub translation_target: LanguageCode,
    pub first_stage_k: usize,
    pub context_k: usize,
    pub max_new_tokens: u32,
    pub tag: String,
    /// Index key (as produced by [`RetrievalMode::index_key`]) → index path.
    pub indexes: BTreeMap<String, String>,
    /// Passage store paths the retrieved ids resolve against.
    pub stores: Vec<String>,
    pub services: ServiceIdentities,
}

impl ResolvedRunConfig {
    /// Stable hash of the full config; keys resumption and artifact identity.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        ioutil::sha256_hex(&bytes)
    }
}

/// The search string actually sent to retrieval: the query verbatim, or its
/// translation when query translation is on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub query_id: String,
    pub text: String,
}

/// Build the search query for one record.
///
/// With translation off this is an identity copy. With translation on, the
/// query is translated into `target`; a query already in the target language
/// is a config error caught here and at preflight.
pub fn make_search_query(
    query: &QueryRecord,
    translate: bool,
    target: LanguageCode,
    services: &Services,
) -> Result<SearchQuery> {
    let text = if !translate {
        query.text.clone()
    } else {
        if query.lang == target {
            return Err(Error::InvalidRequest {
                service: "translator",
                message: format!(
                    "query {} is already in the translation target language {}",
                    query.query_id, target
                ),
            });
        }
        let translated = services.translator.translate(&query.text, query.lang, target)?;
        if translated.trim().is_empty() {
            return Err(Error::Service {
                service: "translator",
                retryable: false,
                message: format!("empty translation for query {}", query.query_id),
            });
        }
        translated
    };
    Ok(SearchQuery {
        query_id: query.query_id.clone(),
        text,
    })
}

/// The context selected for one query: reranked passages with their scores,
/// strongest first. Empty in retrieval mode `none`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet {
    pub query_id: String,
    pub ranked: Vec<(Passage, f32)>,
}

/// Two-stage retrieval: dense top-`first_stage_k` from the mode's index,
/// then rerank and keep the top `context_k`. Ties break by ascending passage
/// id at both stages.
#[allow(clippy::too_many_arguments)]
pub fn retrieve_and_rerank(
    search_query: &SearchQuery,
    user_lang: LanguageCode,
    mode: RetrievalMode,
    first_stage_k: usize,
    context_k: usize,
    indexes: &BTreeMap<String, DenseIndex>,
    passages: &BTreeMap<String, Passage>,
    services: &Services,
) -> Result<ContextSet> {
    let Some(key) = mode.index_key(user_lang) else {
        return Ok(ContextSet {
            query_id: search_query.query_id.clone(),
            ranked: Vec::new(),
        });
    };
    let index = indexes.get(&key).ok_or_else(|| {
        Error::Config(format!(
            "retrieval mode {mode} needs index {key:?}, which is not configured"
        ))
    })?;

    let embedded = services
        .embedder
        .embed(std::slice::from_ref(&search_query.text))?;
    let query_vector = embedded.first().ok_or_else(|| Error::Service {
        service: "embedder",
        retryable: false,
        message: "empty embedding batch for query".into(),
    })?;
    let hits = index.search(query_vector, first_stage_k)?;

    let mut candidates = Vec::with_capacity(hits.len());
    for (passage_id, _) in &hits {
        let passage = passages.get(passage_id).ok_or_else(|| Error::Corrupt {
            path: PathBuf::from(key.clone()),
            message: format!("index row {passage_id:?} is missing from the passage stores"),
        })?;
        candidates.push(passage.clone());
    }
    if candidates.is_empty() {
        return Ok(ContextSet {
            query_id: search_query.query_id.clone(),
            ranked: Vec::new(),
        });
    }

    let scores = services.reranker.rerank(&search_query.text, &candidates)?;
    let mut by_id: BTreeMap<&str, f32> = BTreeMap::new();
    for s in &scores {
        if !s.score.is_finite() {
            return Err(Error::Service {
                service: "reranker",
                retryable: false,
                message: format!("non-finite score for {:?}", s.passage_id),
            });
        }
        if by_id.insert(s.passage_id.as_str(), s.score).is_some() {
            return Err(Error::Service {
                service: "reranker",
                retryable: false,
                message: format!("duplicate score for {:?}", s.passage_id),
            });
        }
    }
    let mut ranked = Vec::with_capacity(candidates.len());
    for passage in candidates {
        let score = *by_id.get(passage.passage_id.as_str()).ok_or_else(|| Error::Service {
            service: "reranker",
            retryable: false,
            message: format!("no score returned for {:?}", passage.passage_id),
        })?;
        ranked.push((passage, score));
    }
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.0.passage_id.cmp(&b.0.passage_id))
    });
    ranked.truncate(context_k);
    Ok(ContextSet {
        query_id: search_query.query_id.clone(),
        ranked,
    })
}

/// One completed query: everything evaluation needs, nothing that varies
/// between identical runs. Wall-clock timings live in `timings.jsonl`; the
/// service identities live once in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub query_id: String,
    pub lang: LanguageCode,
    pub system_prompt: String,
    /// What retrieval saw: the query verbatim or its translation.
    pub search_text: String,
    pub context_passage_ids: Vec<String>,
    /// Model output, verbatim and untrimmed.
    pub response: String,
}

/// One line of the append-only journal, written as each query finishes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum JournalEntry {
    Ok { record: GenerationRecord },
    Err {
        query_id: String,
        error: String,
        retryable: bool,
    },
}

/// A quarantined per-query failure, as persisted in `errors.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub query_id: String,
    pub error: String,
    pub retryable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub config: ResolvedRunConfig,
    pub status: RunStatus,
    pub total_queries: usize,
    pub completed: usize,
    pub errored: usize,
}

#[derive(Serialize, Deserialize)]
struct RunState {
    config_hash: String,
}

#[derive(Serialize)]
struct TimingEntry<'a> {
    query_id: &'a str,
    millis: u64,
}

/// Knobs that affect how a run executes but not what it produces; none of
/// them enter the config hash.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub parallelism: usize,
    /// Recompute up to ten evenly spaced completed queries at the end and
    /// require byte-equal records (catches nondeterministic services).
    pub replay_check: bool,
    /// Discard an existing run directory written under a different config.
    pub force: bool,
}

impl Default for RunOptions {
    fn default() -> RunOptions {
        RunOptions {
            parallelism: DEFAULT_PARALLELISM,
            replay_check: true,
            force: false,
        }
    }
}

/// Everything a run needs beyond the config: live services, prompt and
/// language-name catalogs, opened indexes, and pooled passages.
pub struct RunInputs<'a> {
    pub services: &'a Services,
    pub prompts: &'a PromptCatalog,
    pub names: &'a LanguageNameCatalog,
    pub indexes: BTreeMap<String, DenseIndex>,
    pub passages: BTreeMap<String, Passage>,
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

pub fn records_path(dir: &Path) -> PathBuf {
    dir.join("records.jsonl")
}

pub fn errors_path(dir: &Path) -> PathBuf {
    dir.join("errors.jsonl")
}

fn journal_path(dir: &Path) -> PathBuf {
    dir.join("journal.jsonl")
}

fn timings_path(dir: &Path) -> PathBuf {
    dir.join("timings.jsonl")
}

fn run_state_path(dir: &Path) -> PathBuf {
    dir.join("run_state.json")
}

pub fn read_run_manifest(dir: &Path) -> Result<RunManifest> {
    let manifest: RunManifest = ioutil::read_json(&manifest_path(dir))?;
    if manifest.format_version != RUN_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            path: manifest_path(dir),
            found: manifest.format_version,
            expected: RUN_FORMAT_VERSION,
        });
    }
    Ok(manifest)
}

pub fn read_records(dir: &Path) -> Result<Vec<GenerationRecord>> {
    read_jsonl(&records_path(dir))
}

pub fn read_run_errors(dir: &Path) -> Result<Vec<RunError>> {
    read_jsonl(&errors_path(dir))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = ioutil::read_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(line).map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(rows)
}

/// Parse the journal, tolerating a torn final line (a crash mid-write).
/// Later entries win, so a retried query's fresh outcome replaces its old
/// error.
fn read_journal(
    path: &Path,
) -> Result<(BTreeMap<String, GenerationRecord>, BTreeMap<String, RunError>)> {
    let mut completed: BTreeMap<String, GenerationRecord> = BTreeMap::new();
    let mut errored: BTreeMap<String, RunError> = BTreeMap::new();
    let text = match ioutil::read_string(path) {
        Ok(text) => text,
        Err(_) => return Ok((completed, errored)),
    };
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: JournalEntry = match serde_json::from_str(line) {
            Ok(entry) => entry,
            Err(e) => {
                if i + 1 == lines.len() && !text.ends_with('\n') {
                    break; // torn final line from an interrupted append
                }
                return Err(Error::Corrupt {
                    path: path.to_path_buf(),
                    message: format!("journal line {}: {e}", i + 1),
                });
            }
        };
        match entry {
            JournalEntry::Ok { record } => {
                errored.remove(&record.query_id);
                completed.insert(record.query_id.clone(), record);
            }
            JournalEntry::Err {
                query_id,
                error,
                retryable,
            } => {
                if !completed.contains_key(&query_id) {
                    errored.insert(
                        query_id.clone(),
                        RunError {
                            query_id,
                            error,
                            retryable,
                        },
                    );
                }
            }
        }
    }
    Ok((completed, errored))
}

/// Process a single query end to end. Pure given deterministic services;
/// the replay self-check depends on that.
fn process_query(
    query: &QueryRecord,
    config: &ResolvedRunConfig,
    inputs: &RunInputs<'_>,
    system_prompts: &BTreeMap<LanguageCode, String>,
) -> Result<GenerationRecord> {
    let search_query = make_search_query(
        query,
        config.translate_queries,
        config.translation_target,
        inputs.services,
    )?;
    let context = retrieve_and_rerank(
        &search_query,
        query.lang,
        config.mode,
        config.first_stage_k,
        config.context_k,
        &inputs.indexes,
        &inputs.passages,
        inputs.services,
    )?;
    let system_prompt = system_prompts
        .get(&query.lang)
        .ok_or_else(|| Error::Config(format!("no system prompt rendered for {}", query.lang)))?;
    let context_block = format_context(context.ranked.iter().map(|(p, _)| p));
    // Generation always sees the original question, even when retrieval ran
    // on a translation.
    let chat = build_chat(system_prompt, &context_block, &query.text, config.max_new_tokens);
    let response = inputs.services.generator.generate(&chat)?;
    Ok(GenerationRecord {
        query_id: query.query_id.clone(),
        lang: query.lang,
        system_prompt: system_prompt.clone(),
        search_text: search_query.text,
        context_passage_ids: context
            .ranked
            .iter()
            .map(|(p, _)| p.passage_id.clone())
            .collect(),
        response,
    })
}

/// Cheap connectivity probes against every service the run will call, so a
/// dead endpoint aborts before any work rather than mid-run. Retrieval
/// services are only probed when the mode retrieves.
fn preflight_services(config: &ResolvedRunConfig, inputs: &RunInputs<'_>) -> Result<()> {
    if config.mode != RetrievalMode::None {
        inputs.services.embedder.embed(&["connectivity probe".to_string()])?;
        let probe = Passage {
            passage_id: "probe::0".to_string(),
            doc_id: "probe".to_string(),
            title: "probe".to_string(),
            text: "connectivity probe".to_string(),
            lang: LanguageCode::En,
            position: 0,
        };
        inputs.services.reranker.rerank("connectivity probe", &[probe])?;
    }
    if config.translate_queries {
        let source = config
            .languages
            .iter()
            .copied()
            .find(|l| *l != config.translation_target)
            .unwrap_or(LanguageCode::En);
        inputs
            .services
            .translator
            .translate("connectivity probe", source, config.translation_target)?;
    }
    let chat = build_chat("Reply with one word.", "", "ready?", 1);
    inputs.services.generator.generate(&chat)?;
    Ok(())
}

/// Validate config and inputs, erroring before any side effect. Returns the
/// queries to run (filtered to the configured languages, sorted by id) and
/// the pre-rendered system prompt per language.
fn preflight(
    config: &ResolvedRunConfig,
    inputs: &RunInputs<'_>,
    queries: &[QueryRecord],
) -> Result<(Vec<QueryRecord>, BTreeMap<LanguageCode, String>)> {
    if config.languages.is_empty() {
        return Err(Error::Config("no languages configured for the run".into()));
    }
    if config.first_stage_k == 0 && config.mode != RetrievalMode::None {
        return Err(Error::Config("first_stage_k must be positive".into()));
    }
    if config.context_k == 0 && config.mode != RetrievalMode::None {
        return Err(Error::Config("context_k must be positive".into()));
    }
    if config.context_k > config.first_stage_k {
        return Err(Error::Config(format!(
            "context_k ({}) cannot exceed first_stage_k ({})",
            config.context_k, config.first_stage_k
        )));
    }
    if config.max_new_tokens == 0 {
        return Err(Error::Config("max_new_tokens must be positive".into()));
    }
    if config.translate_queries && config.languages.contains(&config.translation_target) {
        return Err(Error::Config(format!(
            "query translation into {} conflicts with running queries of that language; \
             exclude it from languages or turn translation off",
            config.translation_target
        )));
    }

    let mut selected: Vec<QueryRecord> = queries
        .iter()
        .filter(|q| config.languages.contains(&q.lang))
        .cloned()
        .collect();
    if selected.is_empty() {
        return Err(Error::Config(
            "no queries match the configured languages".into(),
        ));
    }
    selected.sort_by(|a, b| a.query_id.cmp(&b.query_id));

    let mut system_prompts = BTreeMap::new();
    for &lang in &config.languages {
        let prompt = render_system_prompt(inputs.prompts, inputs.names, config.prompt_label, lang)?;
        system_prompts.insert(lang, prompt);
    }

    if config.mode != RetrievalMode::None {
        let embedder_identity = inputs.services.embedder.identity();
        for &lang in &config.languages {
            let key = config.mode.index_key(lang).expect("mode retrieves");
            let index = inputs.indexes.get(&key).ok_or_else(|| {
                Error::Config(format!(
                    "retrieval mode {} over {} needs index {key:?}, which is not loaded",
                    config.mode, lang
                ))
            })?;
            if index.manifest.embedder_identity != embedder_identity {
                return Err(Error::Config(format!(
                    "index {key:?} was built by {:?} but the run uses embedder {:?}",
                    index.manifest.embedder_identity, embedder_identity
                )));
            }
            for id in index.ids() {
                if !inputs.passages.contains_key(id) {
                    return Err(Error::Corrupt {
                        path: PathBuf::from(key.clone()),
                        message: format!(
                            "index row {id:?} is missing from the configured passage stores"
                        ),
                    });
                }
            }
        }
    }

    preflight_services(config, inputs)?;
    Ok((selected, system_prompts))
}

fn wipe_run_dir(dir: &Path) {
    for path in [
        manifest_path(dir),
        records_path(dir),
        errors_path(dir),
        journal_path(dir),
        timings_path(dir),
        run_state_path(dir),
    ] {
        let _ = std::fs::remove_file(path);
    }
}

/// Execute a run into `out_dir`.
///
/// Re-running with the same config resumes: completed queries are skipped,
/// errored ones are retried, and the final artifact equals an uninterrupted
/// run's. A run directory holding a different config is refused unless
/// `options.force` wipes it.
pub fn run(
    config: &ResolvedRunConfig,
    inputs: &RunInputs<'_>,
    queries: &[QueryRecord],
    out_dir: &Path,
    options: &RunOptions,
) -> Result<RunManifest> {
    let (selected, system_prompts) = preflight(config, inputs, queries)?;
    let config_hash = config.hash();

    match ioutil::read_json::<RunState>(&run_state_path(out_dir)) {
        Ok(state) if state.config_hash != config_hash => {
            if options.force {
                wipe_run_dir(out_dir);
            } else {
                return Err(Error::Config(format!(
                    "run directory {} holds a different run (config hash {}); \
                     pass force to discard it",
                    out_dir.display(),
                    state.config_hash
                )));
            }
        }
        Ok(_) if options.force => wipe_run_dir(out_dir),
        _ => {}
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    ioutil::write_json(
        &run_state_path(out_dir),
        &RunState {
            config_hash: config_hash.clone(),
        },
    )?;

    let (mut completed, _stale_errors) = read_journal(&journal_path(out_dir))?;
    for id in completed.keys() {
        if !selected.iter().any(|q| &q.query_id == id) {
            return Err(Error::Corrupt {
                path: journal_path(out_dir),
                message: format!("journal holds unknown query id {id:?}"),
            });
        }
    }
    let pending: Vec<&QueryRecord> = selected
        .iter()
        .filter(|q| !completed.contains_key(&q.query_id))
        .collect();

    let journal = Mutex::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(journal_path(out_dir))
            .map_err(|e| Error::io(journal_path(out_dir), e))?,
    );
    let outcomes: Mutex<Vec<(String, std::result::Result<GenerationRecord, RunError>)>> =
        Mutex::new(Vec::new());
    let timings: Mutex<Vec<(String, u64)>> = Mutex::new(Vec::new());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| {
        use rayon::prelude::*;
        pending.par_iter().for_each(|query| {
            let started = Instant::now();
            let outcome = process_query(query, config, inputs, &system_prompts);
            let millis = started.elapsed().as_millis() as u64;
            let entry = match &outcome {
                Ok(record) => JournalEntry::Ok {
                    record: record.clone(),
                },
                Err(e) => JournalEntry::Err {
                    query_id: query.query_id.clone(),
                    error: e.to_string(),
                    retryable: e.is_retryable(),
                },
            };
            let line = serde_json::to_string(&entry).expect("journal entry serializes");
            {
                let mut journal = journal.lock().expect("journal lock");
                let _ = writeln!(journal, "{line}");
                let _ = journal.flush();
            }
            timings
                .lock()
                .expect("timings lock")
                .push((query.query_id.clone(), millis));
            outcomes.lock().expect("outcomes lock").push((
                query.query_id.clone(),
                outcome.map_err(|e| RunError {
                    query_id: query.query_id.clone(),
                    error: e.to_string(),
                    retryable: e.is_retryable(),
                }),
            ));
        });
    });

    let mut errors: BTreeMap<String, RunError> = BTreeMap::new();
    for (query_id, outcome) in outcomes.into_inner().expect("outcomes lock") {
        match outcome {
            Ok(record) => {
                completed.insert(query_id, record);
            }
            Err(error) => {
                errors.insert(query_id, error);
            }
        }
    }

    let records: Vec<&GenerationRecord> = completed.values().collect();
    let error_rows: Vec<&RunError> = errors.values().collect();
    ioutil::write_string(&records_path(out_dir), &ioutil::to_jsonl(&records)?)?;
    ioutil::write_string(&errors_path(out_dir), &ioutil::to_jsonl(&error_rows)?)?;

    let mut timing_rows = timings.into_inner().expect("timings lock");
    timing_rows.sort();
    let timing_entries: Vec<TimingEntry<'_>> = timing_rows
        .iter()
        .map(|(query_id, millis)| TimingEntry {
            query_id,
            millis: *millis,
        })
        .collect();
    ioutil::write_string(&timings_path(out_dir), &ioutil::to_jsonl(&timing_entries)?)?;

    let manifest = RunManifest {
        format_version: RUN_FORMAT_VERSION,
        config_hash,
        config: config.clone(),
        status: if errors.is_empty() {
            RunStatus::Complete
        } else {
            RunStatus::Partial
        },
        total_queries: selected.len(),
        completed: completed.len(),
        errored: errors.len(),
    };
    ioutil::write_json(&manifest_path(out_dir), &manifest)?;

    if options.replay_check && !completed.is_empty() {
        let ids: Vec<&String> = completed.keys().collect();
        let samples = 10.min(ids.len());
        for i in 0..samples {
            let idx = if samples == 1 {
                0
            } else {
                i * (ids.len() - 1) / (samples - 1)
            };
            let id = ids[idx];
            let query = selected
                .iter()
                .find(|q| &q.query_id == id)
                .expect("completed id is a selected query");
            let replayed = process_query(query, config, inputs, &system_prompts)?;
            if &replayed != completed.get(id).expect("sampled id is completed") {
                return Err(Error::Replay {
                    query_id: id.clone(),
                });
            }
        }
    }

    Ok(manifest)
}
