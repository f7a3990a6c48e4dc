//! Declarative TOML configuration driving every command: service endpoints,
//! chunking, ingest jobs, index jobs, and the run/eval/report sections.
//!
//! Paths in the file are resolved relative to the config file's directory,
//! so a config tree is relocatable and artifacts stay reproducible across
//! checkouts. Endpoints resolve with precedence: command-line override,
//! then `MRAG_<SERVICE>_URL` environment variable, then the config value.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use mrag_core::chunk::ChunkPolicy;
use mrag_core::lang::LanguageCode;
use mrag_core::prompt::{LanguageNameCatalog, PromptCatalog, PromptLabel};

use crate::clients::http::{
    HttpClient, HttpEmbedder, HttpGenerator, HttpIdentifier, HttpReranker, HttpTranslator,
};
use crate::clients::mock::{
    BuiltinIdentifier, MockEmbedder, MockGenerator, MockReranker, MockTranslator,
};
use crate::clients::{RetryPolicy, Services, WithRetry};
use crate::error::{Error, Result};
use crate::ioutil;
use crate::pipeline::{
    ResolvedRunConfig, RetrievalMode, RunOptions, ServiceIdentities, DEFAULT_PARALLELISM,
};

/// Endpoint value selecting the in-process mock implementation.
pub const MOCK_ENDPOINT: &str = "mock://";
/// Endpoint value selecting the in-process script/stopword identifier.
pub const BUILTIN_ENDPOINT: &str = "builtin";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub services: ServicesSection,
    #[serde(default)]
    pub prompts: PromptsSection,
    #[serde(default)]
    pub chunking: ChunkingSection,
    #[serde(default)]
    pub ingest: Vec<IngestJob>,
    #[serde(default)]
    pub index: Vec<IndexJob>,
    pub run: Option<RunSection>,
    pub eval: Option<EvalSection>,
    pub report: Option<ReportSection>,
    #[serde(default)]
    pub serve: ServeSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServicesSection {
    #[serde(default = "default_mock")]
    pub embedder: String,
    #[serde(default = "default_mock")]
    pub reranker: String,
    #[serde(default = "default_mock")]
    pub generator: String,
    #[serde(default = "default_mock")]
    pub translator: String,
    #[serde(default = "default_builtin")]
    pub identifier: String,
    #[serde(default)]
    pub mock: MockSection,
    #[serde(default)]
    pub http: HttpSection,
}

fn default_mock() -> String {
    MOCK_ENDPOINT.to_string()
}

fn default_builtin() -> String {
    BUILTIN_ENDPOINT.to_string()
}

impl Default for ServicesSection {
    fn default() -> Self {
        ServicesSection {
            embedder: default_mock(),
            reranker: default_mock(),
            generator: default_mock(),
            translator: default_mock(),
            identifier: default_builtin(),
            mock: MockSection::default(),
            http: HttpSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSection {
    #[serde(default = "default_embed_dims")]
    pub embed_dims: usize,
    #[serde(default)]
    pub embed_seed: u64,
    #[serde(default)]
    pub generator_fail_marker: Option<String>,
    /// Lexicon files for the mock translator (`pair <src> <tgt>` header plus
    /// tab-separated token pairs).
    #[serde(default)]
    pub lexicons: Vec<String>,
}

fn default_embed_dims() -> usize {
    64
}

impl Default for MockSection {
    fn default() -> Self {
        MockSection {
            embed_dims: default_embed_dims(),
            embed_seed: 0,
            generator_fail_marker: None,
            lexicons: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpSection {
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retry_attempts")]
    pub retry_attempts: u32,
    #[serde(default = "default_retry_base_delay_ms")]
    pub retry_base_delay_ms: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_retry_attempts() -> u32 {
    3
}

fn default_retry_base_delay_ms() -> u64 {
    100
}

impl Default for HttpSection {
    fn default() -> Self {
        HttpSection {
            timeout_secs: default_timeout_secs(),
            retry_attempts: default_retry_attempts(),
            retry_base_delay_ms: default_retry_base_delay_ms(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsSection {
    /// Extra prompt catalog files layered over the builtin catalog.
    #[serde(default)]
    pub catalogs: Vec<String>,
    /// Extra language-name files layered over the builtin names.
    #[serde(default)]
    pub language_names: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkingSection {
    #[serde(default = "default_word_limit")]
    pub word_limit: usize,
    #[serde(default = "default_char_limit")]
    pub char_limit: usize,
}

fn default_word_limit() -> usize {
    100
}

fn default_char_limit() -> usize {
    100
}

impl Default for ChunkingSection {
    fn default() -> Self {
        ChunkingSection {
            word_limit: default_word_limit(),
            char_limit: default_char_limit(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestJob {
    /// Documents file, one JSON object per line.
    pub input: String,
    /// Store directory to write.
    pub store: String,
    pub collection_id: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexJob {
    /// Key this index is referenced by (retrieval modes look up keys like
    /// `en`, `fr`, `en+fr`, `all`).
    pub name: String,
    /// Store to embed (build job).
    pub store: Option<String>,
    /// Names of other index jobs to merge (merge job).
    #[serde(default)]
    pub merge: Vec<String>,
    pub out: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_batch_size() -> usize {
    crate::index::DEFAULT_BATCH_SIZE
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub out: String,
    pub queries: String,
    pub dataset: String,
    pub languages: Vec<LanguageCode>,
    pub mode: RetrievalMode,
    pub prompt_label: PromptLabel,
    #[serde(default)]
    pub translate_queries: bool,
    #[serde(default = "default_translation_target")]
    pub translation_target: LanguageCode,
    #[serde(default = "default_first_stage_k")]
    pub first_stage_k: usize,
    #[serde(default = "default_context_k")]
    pub context_k: usize,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default)]
    pub tag: String,
    pub stores: Vec<String>,
    /// Index key → index directory; defaults to every `[[index]]` job's
    /// `name → out`.
    #[serde(default)]
    pub indexes: Option<BTreeMap<String, String>>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_true")]
    pub replay_check: bool,
}

fn default_translation_target() -> LanguageCode {
    LanguageCode::En
}

fn default_first_stage_k() -> usize {
    50
}

fn default_context_k() -> usize {
    5
}

fn default_max_new_tokens() -> u32 {
    128
}

fn default_parallelism() -> usize {
    DEFAULT_PARALLELISM
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Run directory to score; defaults to `[run].out`.
    pub run: Option<String>,
    pub out: String,
    /// Stores resolving context passages; defaults to `[run].stores`.
    #[serde(default)]
    pub stores: Option<Vec<String>>,
    /// Queries file; defaults to the path recorded in the run manifest.
    #[serde(default)]
    pub queries: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    /// Evaluation output directories to merge.
    pub evals: Vec<String>,
    pub out: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    #[serde(default = "default_serve_addr")]
    pub addr: String,
}

fn default_serve_addr() -> String {
    "127.0.0.1:0".to_string()
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection {
            addr: default_serve_addr(),
        }
    }
}

/// Endpoint overrides from `--endpoint-override service=url` flags; the
/// environment (`MRAG_<SERVICE>_URL`) is consulted when no flag matches.
#[derive(Debug, Clone, Default)]
pub struct EndpointOverrides {
    flags: BTreeMap<String, String>,
}

const SERVICE_NAMES: [&str; 5] = [
    "embedder",
    "reranker",
    "generator",
    "translator",
    "identifier",
];

impl EndpointOverrides {
    pub fn from_flags<S: AsRef<str>>(flags: &[S]) -> Result<EndpointOverrides> {
        let mut map = BTreeMap::new();
        for flag in flags {
            let flag = flag.as_ref();
            let (service, url) = flag.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "endpoint override {flag:?} is not of the form service=url"
                ))
            })?;
            if !SERVICE_NAMES.contains(&service) {
                return Err(Error::Config(format!(
                    "unknown service {service:?} in endpoint override (expected one of {})",
                    SERVICE_NAMES.join(", ")
                )));
            }
            map.insert(service.to_string(), url.to_string());
        }
        Ok(EndpointOverrides { flags: map })
    }

    fn resolve(&self, service: &str, configured: &str) -> String {
        if let Some(url) = self.flags.get(service) {
            return url.clone();
        }
        let var = format!("MRAG_{}_URL", service.to_uppercase());
        if let Ok(url) = std::env::var(&var) {
            if !url.is_empty() {
                return url;
            }
        }
        configured.to_string()
    }
}

/// A loaded config file plus the directory its relative paths resolve
/// against.
#[derive(Debug, Clone)]
pub struct Config {
    pub dir: PathBuf,
    pub file: ConfigFile,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = ioutil::read_string(path)?;
        let file: ConfigFile = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let config = Config { dir, file };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        for job in &self.file.index {
            match (&job.store, job.merge.is_empty()) {
                (Some(_), true) | (None, false) => {}
                (Some(_), false) => {
                    return Err(Error::Config(format!(
                        "index job {:?} sets both store and merge; pick one",
                        job.name
                    )));
                }
                (None, true) => {
                    return Err(Error::Config(format!(
                        "index job {:?} needs either store or merge",
                        job.name
                    )));
                }
            }
            if job.batch_size == 0 {
                return Err(Error::Config(format!(
                    "index job {:?} has batch_size 0",
                    job.name
                )));
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for job in &self.file.index {
            if !names.insert(job.name.as_str()) {
                return Err(Error::Config(format!(
                    "two index jobs share the name {:?}",
                    job.name
                )));
            }
        }
        for job in &self.file.index {
            for part in &job.merge {
                if part == &job.name {
                    return Err(Error::Config(format!(
                        "index job {:?} merges itself",
                        job.name
                    )));
                }
                if !names.contains(part.as_str()) {
                    return Err(Error::Config(format!(
                        "index job {:?} merges unknown job {part:?}",
                        job.name
                    )));
                }
            }
        }
        if self.file.chunking.word_limit == 0 || self.file.chunking.char_limit == 0 {
            return Err(Error::Config("chunking limits must be positive".into()));
        }
        Ok(())
    }

    /// Resolve a config-relative path.
    pub fn resolve(&self, rel: &str) -> PathBuf {
        let path = Path::new(rel);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.dir.join(path)
        }
    }

    pub fn chunk_policy(&self) -> ChunkPolicy {
        ChunkPolicy {
            word_limit: self.file.chunking.word_limit,
            char_limit: self.file.chunking.char_limit,
        }
    }

    pub fn prompt_catalog(&self) -> Result<PromptCatalog> {
        let mut catalog = PromptCatalog::builtin();
        for rel in &self.file.prompts.catalogs {
            let text = ioutil::read_string(&self.resolve(rel))?;
            catalog.extend_from_tsv(&text)?;
        }
        Ok(catalog)
    }

    pub fn language_names(&self) -> Result<LanguageNameCatalog> {
        let mut names = LanguageNameCatalog::builtin();
        for rel in &self.file.prompts.language_names {
            let text = ioutil::read_string(&self.resolve(rel))?;
            names.extend_from_tsv(&text)?;
        }
        Ok(names)
    }

    pub(crate) fn mock_translator(&self) -> Result<MockTranslator> {
        let mut translator = MockTranslator::default();
        for rel in &self.file.services.mock.lexicons {
            let text = ioutil::read_string(&self.resolve(rel))?;
            translator.load_lexicon(&text)?;
        }
        Ok(translator)
    }

    fn http_client(&self, url: &str) -> HttpClient {
        HttpClient::new(url, Duration::from_secs(self.file.services.http.timeout_secs))
    }

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.file.services.http.retry_attempts,
            base_delay_ms: self.file.services.http.retry_base_delay_ms,
        }
    }

    /// Instantiate the five services from endpoints (after overrides).
    pub fn build_services(&self, overrides: &EndpointOverrides) -> Result<Services> {
        let s = &self.file.services;
        let endpoint = |name: &str, configured: &str| overrides.resolve(name, configured);

        let embedder = endpoint("embedder", &s.embedder);
        let embedder: Box<dyn crate::clients::Embedder> = match embedder.as_str() {
            MOCK_ENDPOINT => Box::new(MockEmbedder {
                dims: s.mock.embed_dims,
                seed: s.mock.embed_seed,
            }),
            url if is_http(url) => Box::new(WithRetry::new(
                HttpEmbedder::new(self.http_client(url), None),
                self.retry_policy(),
            )),
            other => return Err(bad_endpoint("embedder", other)),
        };

        let reranker = endpoint("reranker", &s.reranker);
        let reranker: Box<dyn crate::clients::Reranker> = match reranker.as_str() {
            MOCK_ENDPOINT => Box::new(MockReranker),
            url if is_http(url) => Box::new(WithRetry::new(
                HttpReranker::new(self.http_client(url)),
                self.retry_policy(),
            )),
            other => return Err(bad_endpoint("reranker", other)),
        };

        let generator = endpoint("generator", &s.generator);
        let generator: Box<dyn crate::clients::Generator> = match generator.as_str() {
            MOCK_ENDPOINT => Box::new(MockGenerator {
                fail_marker: s.mock.generator_fail_marker.clone(),
            }),
            url if is_http(url) => Box::new(WithRetry::new(
                HttpGenerator::new(self.http_client(url)),
                self.retry_policy(),
            )),
            other => return Err(bad_endpoint("generator", other)),
        };

        let translator = endpoint("translator", &s.translator);
        let translator: Box<dyn crate::clients::Translator> = match translator.as_str() {
            MOCK_ENDPOINT => Box::new(self.mock_translator()?),
            url if is_http(url) => Box::new(WithRetry::new(
                HttpTranslator::new(self.http_client(url)),
                self.retry_policy(),
            )),
            other => return Err(bad_endpoint("translator", other)),
        };

        let identifier = endpoint("identifier", &s.identifier);
        let identifier: Box<dyn crate::clients::LanguageIdService> = match identifier.as_str() {
            BUILTIN_ENDPOINT | MOCK_ENDPOINT => Box::new(BuiltinIdentifier::default()),
            url if is_http(url) => Box::new(WithRetry::new(
                HttpIdentifier::new(self.http_client(url)),
                self.retry_policy(),
            )),
            other => return Err(bad_endpoint("identifier", other)),
        };

        Ok(Services {
            embedder,
            reranker,
            generator,
            translator,
            identifier,
        })
    }

    /// Index key → path (as written in the config, still relative), from the
    /// `[run] indexes` override or the `[[index]]` jobs.
    pub fn index_paths(&self) -> BTreeMap<String, String> {
        if let Some(run) = &self.file.run {
            if let Some(map) = &run.indexes {
                return map.clone();
            }
        }
        self.file
            .index
            .iter()
            .map(|job| (job.name.clone(), job.out.clone()))
            .collect()
    }

    /// The `[run]` section, or a config error naming it.
    pub fn run_section(&self) -> Result<&RunSection> {
        self.file
            .run
            .as_ref()
            .ok_or_else(|| Error::Config("config has no [run] section".into()))
    }

    pub fn eval_section(&self) -> Result<&EvalSection> {
        self.file
            .eval
            .as_ref()
            .ok_or_else(|| Error::Config("config has no [eval] section".into()))
    }

    pub fn report_section(&self) -> Result<&ReportSection> {
        self.file
            .report
            .as_ref()
            .ok_or_else(|| Error::Config("config has no [report] section".into()))
    }

    /// Assemble the full resolved run config (hashable identity of a run).
    pub fn resolved_run_config(&self, services: &Services) -> Result<ResolvedRunConfig> {
        let run = self.run_section()?;
        let mut languages = run.languages.clone();
        languages.sort();
        languages.dedup();
        Ok(ResolvedRunConfig {
            dataset: run.dataset.clone(),
            queries: run.queries.clone(),
            languages,
            mode: run.mode,
            prompt_label: run.prompt_label,
            translate_queries: run.translate_queries,
            translation_target: run.translation_target,
            first_stage_k: run.first_stage_k,
            context_k: run.context_k,
            max_new_tokens: run.max_new_tokens,
            tag: run.tag.clone(),
            indexes: self.index_paths(),
            stores: run.stores.clone(),
            services: ServiceIdentities::of(services),
        })
    }

    /// Execution knobs for a run (not part of the config hash).
    pub fn run_options(&self, parallelism_flag: Option<usize>, force: bool) -> RunOptions {
        let section = self.file.run.as_ref();
        RunOptions {
            parallelism: parallelism_flag
                .or(section.map(|r| r.parallelism))
                .unwrap_or(DEFAULT_PARALLELISM),
            replay_check: section.is_none_or(|r| r.replay_check),
            force,
        }
    }
}

fn is_http(url: &str) -> bool {
    url.starts_with("http://") || url.starts_with("https://")
}

fn bad_endpoint(service: &str, value: &str) -> Error {
    Error::Config(format!(
        "{service} endpoint {value:?} is not {MOCK_ENDPOINT:?}, {BUILTIN_ENDPOINT:?}, or an http(s) URL"
    ))
}
