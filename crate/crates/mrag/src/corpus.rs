//! Corpus ingestion and the on-disk passage store.
//!
//! Documents and queries arrive as JSON Lines; chunked passages persist into
//! a store directory holding `passages.jsonl` plus a `manifest.json` with a
//! format version and a content checksum, so truncated or hand-edited stores
//! are rejected instead of quietly evaluated.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mrag_core::chunk::{chunk_document, ChunkPolicy, Document, Passage};
use mrag_core::lang::LanguageCode;

use crate::error::{Error, Result};
use crate::ioutil;

/// One evaluation question with its gold answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    /// Unique within a query set.
    pub query_id: String,
    /// Question text in `lang`.
    pub text: String,
    pub lang: LanguageCode,
    /// Acceptable answers; scoring takes the best match.
    pub gold_answers: Vec<String>,
    /// Which dataset the query came from; carried into reports.
    pub dataset: String,
    /// Marked queries run through the pipeline but are excluded from scoring.
    pub unanswerable: bool,
}

/// A chunked corpus: the unit that stores, indexes, and retrieval work over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collection {
    pub collection_id: String,
    /// Languages present, derived from the passages.
    pub langs: BTreeSet<LanguageCode>,
    /// Passages in ingestion order (document order, then position).
    pub passages: Vec<Passage>,
}

impl Collection {
    /// Index passages by id for context lookup.
    pub fn passage_map(&self) -> HashMap<&str, &Passage> {
        self.passages
            .iter()
            .map(|p| (p.passage_id.as_str(), p))
            .collect()
    }
}

/// Wire shape of one document line: `{"id", "title", "text", "lang"}`.
#[derive(Deserialize)]
struct DocumentLine {
    id: String,
    title: String,
    text: String,
    lang: String,
}

/// Wire shape of one query line.
#[derive(Deserialize)]
struct QueryLine {
    query_id: String,
    text: String,
    lang: String,
    #[serde(default)]
    gold_answers: Vec<String>,
    #[serde(default)]
    unanswerable: bool,
}

fn schema_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_lang(path: &Path, line: usize, code: &str) -> Result<LanguageCode> {
    code.parse()
        .map_err(|e: mrag_core::lang::UnknownLanguage| schema_error(path, line, e.to_string()))
}

/// Load a JSONL document file. Every malformed line aborts the load with the
/// offending line number; ingestion is all-or-nothing.
pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    let text = ioutil::read_string(path)?;
    let mut docs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: DocumentLine = serde_json::from_str(raw)
            .map_err(|e| schema_error(path, line, format!("invalid document: {e}")))?;
        if parsed.id.is_empty() {
            return Err(schema_error(path, line, "document id must not be empty"));
        }
        let lang = parse_lang(path, line, &parsed.lang)?;
        docs.push(Document {
            doc_id: parsed.id,
            title: parsed.title,
            body: parsed.text,
            lang,
        });
    }
    Ok(docs)
}

/// Load a JSONL query file, tagging every record with `dataset`.
///
/// Queries must have non-empty text and either at least one gold answer or
/// the `unanswerable` flag; ids must be unique within the file.
pub fn load_queries(path: &Path, dataset: &str) -> Result<Vec<QueryRecord>> {
    let text = ioutil::read_string(path)?;
    let mut queries = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: QueryLine = serde_json::from_str(raw)
            .map_err(|e| schema_error(path, line, format!("invalid query: {e}")))?;
        if parsed.query_id.is_empty() {
            return Err(schema_error(path, line, "query_id must not be empty"));
        }
        if !seen.insert(parsed.query_id.clone()) {
            return Err(schema_error(
                path,
                line,
                format!("duplicate query_id {:?}", parsed.query_id),
            ));
        }
        if parsed.text.trim().is_empty() {
            return Err(schema_error(path, line, "query text must not be empty"));
        }
        if parsed.gold_answers.is_empty() && !parsed.unanswerable {
            return Err(schema_error(
                path,
                line,
                format!(
                    "query {:?} has no gold answers and is not marked unanswerable",
                    parsed.query_id
                ),
            ));
        }
        let lang = parse_lang(path, line, &parsed.lang)?;
        queries.push(QueryRecord {
            query_id: parsed.query_id,
            text: parsed.text,
            lang,
            gold_answers: parsed.gold_answers,
            dataset: dataset.to_string(),
            unanswerable: parsed.unanswerable,
        });
    }
    Ok(queries)
}

/// Chunk documents into a collection, enforcing unique document ids.
pub fn build_collection(
    collection_id: &str,
    docs: &[Document],
    policy: ChunkPolicy,
) -> Result<Collection> {
    let mut seen_docs: BTreeSet<&str> = BTreeSet::new();
    let mut langs = BTreeSet::new();
    let mut passages = Vec::new();
    for doc in docs {
        if !seen_docs.insert(doc.doc_id.as_str()) {
            return Err(Error::DuplicateId {
                id: doc.doc_id.clone(),
                context: format!("chunking documents for collection {collection_id:?}"),
            });
        }
        for passage in chunk_document(doc, policy) {
            langs.insert(passage.lang);
            passages.push(passage);
        }
    }
    Ok(Collection {
        collection_id: collection_id.to_string(),
        langs,
        passages,
    })
}

/// Union several collections into one, requiring globally unique passage ids.
pub fn merge_collections(collection_id: &str, parts: &[Collection]) -> Result<Collection> {
    let mut langs = BTreeSet::new();
    let mut passages = Vec::new();
    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    for part in parts {
        for passage in &part.passages {
            match seen.entry(passage.passage_id.as_str()) {
                Entry::Occupied(first) => {
                    return Err(Error::DuplicateId {
                        id: passage.passage_id.clone(),
                        context: format!(
                            "merging collections {:?} and {:?} into {collection_id:?}",
                            first.get(),
                            part.collection_id
                        ),
                    });
                }
                Entry::Vacant(slot) => {
                    slot.insert(part.collection_id.as_str());
                }
            }
            langs.insert(passage.lang);
            passages.push(passage.clone());
        }
    }
    Ok(Collection {
        collection_id: collection_id.to_string(),
        langs,
        passages,
    })
}

/// Pool passages from several collections into one id-keyed map, used when a
/// run draws context from more than one store.
pub fn merged_passages(parts: &[Collection]) -> Result<BTreeMap<String, Passage>> {
    let mut map: BTreeMap<String, Passage> = BTreeMap::new();
    for part in parts {
        for passage in &part.passages {
            if map
                .insert(passage.passage_id.clone(), passage.clone())
                .is_some()
            {
                return Err(Error::DuplicateId {
                    id: passage.passage_id.clone(),
                    context: format!(
                        "pooling passages (collection {:?} repeats an id)",
                        part.collection_id
                    ),
                });
            }
        }
    }
    Ok(map)
}

/// Version stamp written into store manifests.
pub const STORE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoreManifest {
    format_version: u32,
    collection_id: String,
    langs: Vec<LanguageCode>,
    passage_count: usize,
    passages_sha256: String,
}

fn store_manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

fn store_passages_path(dir: &Path) -> PathBuf {
    dir.join("passages.jsonl")
}

/// Write a collection to a store directory.
///
/// The passages file is written first and the manifest (with its checksum)
/// last, so an interrupted persist leaves a store that fails to open rather
/// than one that reads back partial data. Refuses to overwrite an existing
/// store unless `overwrite` is set.
pub fn persist_store(collection: &Collection, dir: &Path, overwrite: bool) -> Result<()> {
    let manifest_path = store_manifest_path(dir);
    if manifest_path.exists() && !overwrite {
        return Err(Error::Config(format!(
            "store {} already exists (pass overwrite to replace it)",
            dir.display()
        )));
    }
    let passages = ioutil::to_jsonl(&collection.passages)?;
    ioutil::write_string(&store_passages_path(dir), &passages)?;
    let manifest = StoreManifest {
        format_version: STORE_FORMAT_VERSION,
        collection_id: collection.collection_id.clone(),
        langs: collection.langs.iter().copied().collect(),
        passage_count: collection.passages.len(),
        passages_sha256: ioutil::sha256_hex(passages.as_bytes()),
    };
    ioutil::write_json(&manifest_path, &manifest)
}

/// Open a store directory, verifying format version, checksum, passage
/// count, and passage-id uniqueness.
pub fn open_store(dir: &Path) -> Result<Collection> {
    let manifest: StoreManifest = ioutil::read_json(&store_manifest_path(dir))?;
    if manifest.format_version != STORE_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            path: store_manifest_path(dir),
            found: manifest.format_version,
            expected: STORE_FORMAT_VERSION,
        });
    }
    let passages_path = store_passages_path(dir);
    let raw = ioutil::read_string(&passages_path)?;
    let checksum = ioutil::sha256_hex(raw.as_bytes());
    if checksum != manifest.passages_sha256 {
        return Err(Error::Corrupt {
            path: passages_path,
            message: format!(
                "checksum mismatch: manifest says {}, file hashes to {checksum}",
                manifest.passages_sha256
            ),
        });
    }

    let mut passages: Vec<Passage> = Vec::with_capacity(manifest.passage_count);
    let mut langs = BTreeSet::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (idx, line) in raw.lines().enumerate() {
        let passage: Passage = serde_json::from_str(line).map_err(|e| Error::Corrupt {
            path: passages_path.clone(),
            message: format!("line {}: {e}", idx + 1),
        })?;
        if !seen.insert(passage.passage_id.clone()) {
            return Err(Error::Corrupt {
                path: passages_path.clone(),
                message: format!("duplicate passage_id {:?}", passage.passage_id),
            });
        }
        langs.insert(passage.lang);
        passages.push(passage);
    }
    if passages.len() != manifest.passage_count {
        return Err(Error::Corrupt {
            path: passages_path,
            message: format!(
                "manifest says {} passages, file holds {}",
                manifest.passage_count,
                passages.len()
            ),
        });
    }
    Ok(Collection {
        collection_id: manifest.collection_id,
        langs,
        passages,
    })
}
