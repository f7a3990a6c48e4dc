//! Command-line surface: one config file, one subcommand per pipeline stage.
//!
//! Every command loads and validates the full config before touching the
//! filesystem, so a bad config (exit status 2) never leaves partial
//! artifacts behind. Exit statuses are stable:
//!
//! * `0` — success
//! * `1` — the run finished but quarantined at least one query
//! * `2` — config or preflight rejection, nothing was written
//! * `3` — I/O, data corruption, or service failure

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use mrag_core::normalize::NormalizationPolicy;

use crate::clients::mock::{BuiltinIdentifier, MockEmbedder, MockGenerator, MockReranker};
use crate::clients::server::{MockServer, MockServices};
use crate::config::{Config, EndpointOverrides};
use crate::corpus::{self, Collection};
use crate::error::{Error, Result};
use crate::evaluation::{self, render_eval_table};
use crate::index::{self, DenseIndex};
use crate::pipeline::{self, RunInputs, RunStatus};
use crate::report;

/// Zero-shot multilingual retrieval-augmented generation harness.
#[derive(Debug, Parser)]
#[command(name = "mrag", version, about)]
pub struct Cli {
    /// Config file; relative paths inside it resolve against its directory.
    #[arg(long, global = true, default_value = "mrag.toml", value_name = "FILE")]
    pub config: PathBuf,

    /// Override a service endpoint, e.g. `embedder=http://host:8404`.
    /// Repeatable. Takes precedence over `MRAG_<SERVICE>_URL` environment
    /// variables, which in turn override the config file.
    #[arg(long = "endpoint-override", global = true, value_name = "SERVICE=URL")]
    pub endpoint_override: Vec<String>,

    /// Worker threads for answering queries (default 8).
    #[arg(long, global = true, value_name = "N")]
    pub parallelism: Option<usize>,

    /// Overwrite existing stores/indexes and discard run state written under
    /// a different config.
    #[arg(long, global = true)]
    pub force: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chunk the configured document files into passage stores.
    Ingest,
    /// Build, merge, or probe dense retrieval indexes.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Answer every configured query and write the run artifacts.
    Run {
        /// Write run artifacts here instead of the configured `[run] out`.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Score a finished run: lexical recall, language match, retrieval hit
    /// rate.
    Eval {
        /// Write metric artifacts here instead of the configured `[eval] out`.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Run directory to score (default: `[eval] run`, then `[run] out`).
        #[arg(long, value_name = "DIR")]
        run: Option<PathBuf>,
    },
    /// Merge evaluation summaries into language × retrieval-mode tables.
    Report {
        /// Write the report here instead of the configured `[report] out`.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Serve the mock model services over HTTP until interrupted.
    ServeMock,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Embed passage stores into indexes (every build job, or one by name).
    Build {
        /// Index job name from the config; omit to build all.
        name: Option<String>,
    },
    /// Merge built indexes (every merge job, or one by name).
    Merge {
        /// Index job name from the config; omit to merge all.
        name: Option<String>,
    },
    /// Embed a query and print the closest passages from one index.
    Search {
        /// Index job name from the config.
        name: String,
        /// Query text to embed.
        query: String,
        /// How many passages to print.
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
}

/// What a command did: a process exit status, human-readable summary lines,
/// and the artifact paths it wrote.
#[derive(Debug)]
pub struct CommandOutcome {
    pub status: i32,
    pub summary: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

impl CommandOutcome {
    fn ok(summary: Vec<String>, artifacts: Vec<PathBuf>) -> CommandOutcome {
        CommandOutcome {
            status: 0,
            summary,
            artifacts,
        }
    }
}

/// Map an error to the stable exit status taxonomy: config and preflight
/// rejections are 2, runtime failures (I/O, corruption, services) are 3.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Schema { .. }
        | Error::InvalidRequest { .. }
        | Error::FormatVersion { .. }
        | Error::DuplicateId { .. }
        | Error::Render(_)
        | Error::Catalog(_) => 2,
        Error::Io { .. }
        | Error::Corrupt { .. }
        | Error::Service { .. }
        | Error::Dims { .. }
        | Error::Replay { .. }
        | Error::Json(_) => 3,
    }
}

/// Load the config and dispatch the subcommand.
pub fn execute(cli: &Cli) -> Result<CommandOutcome> {
    let config = Config::load(&cli.config)?;
    let overrides = EndpointOverrides::from_flags(&cli.endpoint_override)?;
    match &cli.command {
        Command::Ingest => cmd_ingest(&config, cli.force),
        Command::Index(IndexCommand::Build { name }) => {
            cmd_index_build(&config, &overrides, name.as_deref(), cli.force)
        }
        Command::Index(IndexCommand::Merge { name }) => {
            cmd_index_merge(&config, name.as_deref(), cli.force)
        }
        Command::Index(IndexCommand::Search { name, query, k }) => {
            cmd_index_search(&config, &overrides, name, query, *k)
        }
        Command::Run { out } => cmd_run(&config, &overrides, out.as_deref(), cli),
        Command::Eval { out, run } => cmd_eval(&config, &overrides, out.as_deref(), run.as_deref()),
        Command::Report { out } => cmd_report(&config, out.as_deref()),
        Command::ServeMock => cmd_serve_mock(&config),
    }
}

fn store_manifest(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

fn open_stores(config: &Config, rels: &[String]) -> Result<Vec<Collection>> {
    let mut collections = Vec::with_capacity(rels.len());
    for rel in rels {
        let dir = config.resolve(rel);
        if !store_manifest(&dir).exists() {
            return Err(Error::Config(format!(
                "store {} does not exist; run `mrag ingest` first",
                dir.display()
            )));
        }
        collections.push(corpus::open_store(&dir)?);
    }
    Ok(collections)
}

fn open_named_index(config: &Config, name: &str) -> Result<DenseIndex> {
    let paths = config.index_paths();
    let rel = paths.get(name).ok_or_else(|| {
        Error::Config(format!("no index named {name:?} is configured"))
    })?;
    let dir = config.resolve(rel);
    if !dir.join("manifest.json").exists() {
        return Err(Error::Config(format!(
            "index {name:?} at {} is not built yet; run `mrag index build` (and `merge`) first",
            dir.display()
        )));
    }
    index::open_index(&dir)
}

fn cmd_ingest(config: &Config, force: bool) -> Result<CommandOutcome> {
    let jobs = &config.file.ingest;
    if jobs.is_empty() {
        return Err(Error::Config("config has no [[ingest]] jobs".into()));
    }
    let policy = config.chunk_policy();

    // Refuse overwrites and duplicate targets before chunking anything, and
    // chunk everything before persisting anything: a rejected job must not
    // leave earlier jobs half-written.
    let mut targets = std::collections::BTreeSet::new();
    for job in jobs {
        let dir = config.resolve(&job.store);
        if !targets.insert(dir.clone()) {
            return Err(Error::Config(format!(
                "two ingest jobs write the same store {}",
                dir.display()
            )));
        }
        if store_manifest(&dir).exists() && !force {
            return Err(Error::Config(format!(
                "store {} already exists; pass --force to replace it",
                dir.display()
            )));
        }
    }

    let mut built = Vec::with_capacity(jobs.len());
    for job in jobs {
        let docs = corpus::load_documents(&config.resolve(&job.input))?;
        let collection = corpus::build_collection(&job.collection_id, &docs, policy)?;
        built.push((job, docs.len(), collection));
    }

    let mut summary = Vec::new();
    let mut artifacts = Vec::new();
    for (job, doc_count, collection) in &built {
        let dir = config.resolve(&job.store);
        corpus::persist_store(collection, &dir, force)?;
        let langs: Vec<&str> = collection.langs.iter().map(|l| l.as_str()).collect();
        summary.push(format!(
            "store {}: {} documents -> {} passages ({})",
            collection.collection_id,
            doc_count,
            collection.passages.len(),
            langs.join(", ")
        ));
        artifacts.push(dir);
    }
    Ok(CommandOutcome::ok(summary, artifacts))
}

fn select_index_jobs<'c>(
    config: &'c Config,
    name: Option<&str>,
    merge_jobs: bool,
) -> Result<Vec<&'c crate::config::IndexJob>> {
    let kind = if merge_jobs { "merge" } else { "build" };
    if let Some(name) = name {
        let job = config
            .file
            .index
            .iter()
            .find(|job| job.name == name)
            .ok_or_else(|| Error::Config(format!("no index job named {name:?}")))?;
        if job.merge.is_empty() == merge_jobs {
            let other = if merge_jobs { "build" } else { "merge" };
            return Err(Error::Config(format!(
                "index job {name:?} is a {other} job; use `mrag index {other} {name}`"
            )));
        }
        return Ok(vec![job]);
    }
    let jobs: Vec<_> = config
        .file
        .index
        .iter()
        .filter(|job| job.merge.is_empty() != merge_jobs)
        .collect();
    if jobs.is_empty() {
        return Err(Error::Config(format!(
            "config has no index {kind} jobs"
        )));
    }
    Ok(jobs)
}

fn cmd_index_build(
    config: &Config,
    overrides: &EndpointOverrides,
    name: Option<&str>,
    force: bool,
) -> Result<CommandOutcome> {
    let jobs = select_index_jobs(config, name, false)?;
    let services = config.build_services(overrides)?;
    let embedder = services.embedder.as_ref();

    // Open every store before building any index so a missing store cannot
    // interrupt a multi-job build halfway.
    let mut inputs = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let store = job.store.as_ref().expect("selected jobs are build jobs");
        let collection = open_stores(config, std::slice::from_ref(store))?
            .pop()
            .expect("one store opened");
        inputs.push((job, collection));
    }

    let mut summary = Vec::new();
    let mut artifacts = Vec::new();
    for (job, collection) in &inputs {
        let dir = config.resolve(&job.out);
        if dir.join("manifest.json").exists() && !force {
            let existing = index::open_index(&dir)?;
            if existing.manifest.embedder_identity != embedder.identity() {
                return Err(Error::Config(format!(
                    "index {:?} was built with embedder {:?} but the current endpoint is {:?}; pass --force to rebuild",
                    job.name,
                    existing.manifest.embedder_identity,
                    embedder.identity()
                )));
            }
            summary.push(format!(
                "index {}: already built ({} vectors, dims {}), skipped",
                job.name,
                existing.len(),
                existing.dims()
            ));
            continue;
        }
        let built = index::build_index(collection, embedder, job.batch_size, &dir, force)?;
        summary.push(format!(
            "index {}: embedded {} passages (dims {})",
            job.name,
            built.len(),
            built.dims()
        ));
        artifacts.push(dir);
    }
    Ok(CommandOutcome::ok(summary, artifacts))
}

fn cmd_index_merge(config: &Config, name: Option<&str>, force: bool) -> Result<CommandOutcome> {
    let jobs = select_index_jobs(config, name, true)?;

    // Open every input index up front; a missing part must not interrupt a
    // multi-job merge after the first write.
    let mut inputs = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let dir = config.resolve(&job.out);
        if dir.join("manifest.json").exists() && !force {
            inputs.push((job, None));
            continue;
        }
        let mut parts = Vec::with_capacity(job.merge.len());
        for part in &job.merge {
            parts.push(open_named_index(config, part)?);
        }
        inputs.push((job, Some(parts)));
    }

    let mut summary = Vec::new();
    let mut artifacts = Vec::new();
    for (job, parts) in inputs {
        let dir = config.resolve(&job.out);
        let Some(parts) = parts else {
            let existing = index::open_index(&dir)?;
            summary.push(format!(
                "index {}: already merged ({} vectors), skipped",
                job.name,
                existing.len()
            ));
            continue;
        };
        let merged = index::merge_indexes(&job.name, &parts)?;
        index::persist_index(&merged, &dir, force)?;
        summary.push(format!(
            "index {}: merged {} parts into {} vectors",
            job.name,
            job.merge.len(),
            merged.len()
        ));
        artifacts.push(dir);
    }
    Ok(CommandOutcome::ok(summary, artifacts))
}

fn cmd_index_search(
    config: &Config,
    overrides: &EndpointOverrides,
    name: &str,
    query: &str,
    k: usize,
) -> Result<CommandOutcome> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let index = open_named_index(config, name)?;
    let services = config.build_services(overrides)?;
    let mut vectors = services.embedder.embed(&[query.to_string()])?;
    let vector = vectors.pop().ok_or_else(|| Error::Service {
        service: "embedder",
        retryable: false,
        message: "sent 1 text, got 0 vectors".into(),
    })?;
    let hits = index.search(&vector, k)?;

    let mut summary = vec![format!(
        "index {name}: top {} of {} passages for {query:?}",
        hits.len(),
        index.len()
    )];
    for (rank, (id, score)) in hits.iter().enumerate() {
        summary.push(format!("{:>3}. {score:>9.6}  {id}", rank + 1));
    }
    Ok(CommandOutcome::ok(summary, Vec::new()))
}

fn cmd_run(
    config: &Config,
    overrides: &EndpointOverrides,
    out_flag: Option<&Path>,
    cli: &Cli,
) -> Result<CommandOutcome> {
    let run = config.run_section()?;
    let services = config.build_services(overrides)?;
    let prompts = config.prompt_catalog()?;
    let names = config.language_names()?;
    let resolved = config.resolved_run_config(&services)?;

    let queries = corpus::load_queries(&config.resolve(&run.queries), &run.dataset)?;
    let collections = open_stores(config, &run.stores)?;
    let passages = corpus::merged_passages(&collections)?;

    // Open exactly the indexes this mode and language set will query.
    let mut indexes = BTreeMap::new();
    for lang in &resolved.languages {
        let Some(key) = resolved.mode.index_key(*lang) else {
            continue;
        };
        if !indexes.contains_key(&key) {
            indexes.insert(key.clone(), open_named_index(config, &key)?);
        }
    }

    let inputs = RunInputs {
        services: &services,
        prompts: &prompts,
        names: &names,
        indexes,
        passages,
    };
    let out = out_flag
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.resolve(&run.out));
    let options = config.run_options(cli.parallelism, cli.force);
    let manifest = pipeline::run(&resolved, &inputs, &queries, &out, &options)?;

    let (status, word) = match manifest.status {
        RunStatus::Complete => (0, "complete"),
        RunStatus::Partial => (1, "partial"),
    };
    let summary = vec![format!(
        "run {word}: {}/{} queries answered, {} failed (mode {}, config {})",
        manifest.completed,
        manifest.total_queries,
        manifest.errored,
        resolved.mode,
        &manifest.config_hash[..12]
    )];
    let artifacts = vec![
        pipeline::manifest_path(&out),
        pipeline::records_path(&out),
        pipeline::errors_path(&out),
    ];
    Ok(CommandOutcome {
        status,
        summary,
        artifacts,
    })
}

fn cmd_eval(
    config: &Config,
    overrides: &EndpointOverrides,
    out_flag: Option<&Path>,
    run_flag: Option<&Path>,
) -> Result<CommandOutcome> {
    let section = config.file.eval.as_ref();
    let run_dir = run_flag
        .map(Path::to_path_buf)
        .or_else(|| section.and_then(|s| s.run.as_ref()).map(|r| config.resolve(r)))
        .or_else(|| config.file.run.as_ref().map(|r| config.resolve(&r.out)))
        .ok_or_else(|| {
            Error::Config("no run to score: pass --run or configure [eval] run / [run] out".into())
        })?;
    let out = out_flag
        .map(Path::to_path_buf)
        .or_else(|| section.map(|s| config.resolve(&s.out)))
        .ok_or_else(|| {
            Error::Config("no output directory: pass --out or configure [eval] out".into())
        })?;
    if !pipeline::manifest_path(&run_dir).exists() {
        return Err(Error::Config(format!(
            "run directory {} has no manifest; run `mrag run` first",
            run_dir.display()
        )));
    }

    // The run manifest records the queries file, dataset, and stores the run
    // used, so scoring defaults to exactly those inputs.
    let manifest = pipeline::read_run_manifest(&run_dir)?;
    let queries_path = section
        .and_then(|s| s.queries.as_ref())
        .map(|q| config.resolve(q))
        .unwrap_or_else(|| config.resolve(&manifest.config.queries));
    let queries = corpus::load_queries(&queries_path, &manifest.config.dataset)?;
    let store_rels = section
        .and_then(|s| s.stores.clone())
        .unwrap_or_else(|| manifest.config.stores.clone());
    let collections = open_stores(config, &store_rels)?;
    let passages = corpus::merged_passages(&collections)?;

    let services = config.build_services(overrides)?;
    let outcome = evaluation::evaluate_run(
        &run_dir,
        &queries,
        &passages,
        services.identifier.as_ref(),
        &NormalizationPolicy::default(),
    )?;
    let artifacts = evaluation::write_eval(&out, &outcome)?;
    let mut summary: Vec<String> = render_eval_table(&outcome.summary)
        .lines()
        .map(str::to_string)
        .collect();
    summary.push(format!("scored {} records", outcome.rows.len()));
    Ok(CommandOutcome::ok(summary, artifacts))
}

fn cmd_report(config: &Config, out_flag: Option<&Path>) -> Result<CommandOutcome> {
    let section = config.report_section()?;
    let mut summaries = Vec::with_capacity(section.evals.len());
    for rel in &section.evals {
        let dir = config.resolve(rel);
        if !dir.join("summary.json").exists() {
            return Err(Error::Config(format!(
                "evaluation {} has no summary.json; run `mrag eval` first",
                dir.display()
            )));
        }
        summaries.push(evaluation::read_eval_summary(&dir)?);
    }
    let report = report::build_report(&summaries)?;
    let out = out_flag
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.resolve(&section.out));
    let artifacts = report::write_report(&out, &report)?;
    let summary = vec![format!(
        "report over {} evaluations ({} table cells)",
        summaries.len(),
        report.rows.len()
    )];
    Ok(CommandOutcome::ok(summary, artifacts))
}

fn cmd_serve_mock(config: &Config) -> Result<CommandOutcome> {
    let mock = &config.file.services.mock;
    let services = MockServices {
        embedder: MockEmbedder {
            dims: mock.embed_dims,
            seed: mock.embed_seed,
        },
        reranker: MockReranker,
        generator: MockGenerator {
            fail_marker: mock.generator_fail_marker.clone(),
        },
        translator: config.mock_translator()?,
        identifier: BuiltinIdentifier::default(),
    };
    let server = MockServer::spawn(services, &config.file.serve.addr)?;
    println!("serving mock services at {}", server.base_url());
    println!("endpoints: /v1/embed /v1/rerank /v1/chat /v1/translate /v1/identify");
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_declaration_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_split_config_from_runtime_failures() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(
            exit_code(&Error::DuplicateId {
                id: "p".into(),
                context: "merge".into()
            }),
            2
        );
        assert_eq!(
            exit_code(&Error::io(Path::new("/nope"), std::io::Error::other("gone"))),
            3
        );
        assert_eq!(
            exit_code(&Error::Service {
                service: "generator",
                retryable: false,
                message: "down".into()
            }),
            3
        );
        assert_eq!(
            exit_code(&Error::Replay {
                query_id: "q1".into()
            }),
            3
        );
    }

    #[test]
    fn help_documents_global_flags() {
        let help = Cli::command().render_long_help().to_string();
        for flag in ["--config", "--endpoint-override", "--parallelism", "--force"] {
            assert!(help.contains(flag), "help lost {flag}: {help}");
        }
    }
}
