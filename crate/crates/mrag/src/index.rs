//! Flat dense vector index: build, persist, merge, search.
//!
//! An index directory holds `manifest.json` (format version, dimensions,
//! embedder identity, content checksum), `ids.txt` (passage ids, one per
//! line, strictly ascending), and `vectors.f32` (row-major little-endian
//! floats). Rows are sorted by passage id so equal-score ties resolve by id
//! everywhere. Builds checkpoint after every embedded batch into `.partial`
//! files and can resume after a crash; the manifest is only written once the
//! build completes, so a half-built index can never be opened.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mrag_core::topk;

use crate::clients::{Embedder, EmbeddingVector};
use crate::corpus::Collection;
use crate::error::{Error, Result};
use crate::ioutil;

/// Version stamp written into index manifests.
pub const INDEX_FORMAT_VERSION: u32 = 1;

/// Default number of passages embedded per service call.
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    pub collection_id: String,
    pub dims: usize,
    pub count: usize,
    /// Identity of the embedder that produced the vectors. Searching with a
    /// different embedder is refused: scores would be meaningless.
    pub embedder_identity: String,
    /// SHA-256 over `ids.txt` bytes followed by `vectors.f32` bytes.
    pub content_sha256: String,
}

/// An in-memory dense index ready to serve searches.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    pub manifest: IndexManifest,
    ids: Vec<String>,
    vectors: Vec<f32>,
}

/// One retrieval result list for a query.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub query_id: String,
    /// `(passage_id, score)` sorted by score descending, ties by id.
    pub ranked: Vec<(String, f32)>,
}

impl DenseIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.manifest.dims
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Exact top-`k` inner-product search.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<(String, f32)>> {
        if query.dims() != self.manifest.dims {
            return Err(Error::Dims {
                expected: self.manifest.dims,
                got: query.dims(),
            });
        }
        let hits = topk::top_k(&self.vectors, self.manifest.dims, &query.values, k)
            .map_err(|e| Error::Config(format!("index shape invariant broken: {e}")))?;
        Ok(hits
            .into_iter()
            .map(|(row, score)| (self.ids[row].clone(), score))
            .collect())
    }
}

fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

fn ids_path(dir: &Path) -> PathBuf {
    dir.join("ids.txt")
}

fn vectors_path(dir: &Path) -> PathBuf {
    dir.join("vectors.f32")
}

fn progress_path(dir: &Path) -> PathBuf {
    dir.join("progress.json")
}

fn ids_partial_path(dir: &Path) -> PathBuf {
    dir.join("ids.partial")
}

fn vectors_partial_path(dir: &Path) -> PathBuf {
    dir.join("vectors.partial")
}

fn vectors_to_bytes(values: &[f32]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn bytes_to_vectors(bytes: &[u8], path: &Path) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            message: format!("length {} is not a multiple of 4", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|chunk| f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
        .collect())
}

fn index_content_checksum(ids_text: &str, vector_bytes: &[u8]) -> String {
    let mut content = Vec::with_capacity(ids_text.len() + vector_bytes.len());
    content.extend_from_slice(ids_text.as_bytes());
    content.extend_from_slice(vector_bytes);
    ioutil::sha256_hex(&content)
}

/// Identifies one build job; resuming requires an exact match so checkpoints
/// from a different collection or embedder are never mixed in.
fn build_fingerprint(collection_id: &str, embedder_identity: &str, ids: &[&str]) -> String {
    let mut content = Vec::new();
    content.extend_from_slice(collection_id.as_bytes());
    content.push(0);
    content.extend_from_slice(embedder_identity.as_bytes());
    content.push(0);
    for id in ids {
        content.extend_from_slice(id.as_bytes());
        content.push(b'\n');
    }
    ioutil::sha256_hex(&content)
}

#[derive(Serialize, Deserialize)]
struct BuildProgress {
    fingerprint: String,
    dims: usize,
    rows_done: usize,
}

/// Where to restart an interrupted build: number of rows already embedded.
fn resume_point(dir: &Path, fingerprint: &str, expected_ids: &[&str]) -> usize {
    let progress: BuildProgress = match ioutil::read_json(&progress_path(dir)) {
        Ok(p) => p,
        Err(_) => return 0,
    };
    if progress.fingerprint != fingerprint
        || progress.dims == 0
        || progress.rows_done == 0
        || progress.rows_done > expected_ids.len()
    {
        return 0;
    }
    // The ids written so far must be exactly the expected prefix.
    let ids_text = match ioutil::read_string(&ids_partial_path(dir)) {
        Ok(text) => text,
        Err(_) => return 0,
    };
    let written: Vec<&str> = ids_text.lines().collect();
    if written.len() != progress.rows_done
        || written
            .iter()
            .zip(expected_ids)
            .any(|(got, want)| got != want)
    {
        return 0;
    }
    // The vector file may carry a torn batch beyond the checkpoint; trim it.
    let want_bytes = (progress.rows_done * progress.dims * 4) as u64;
    let vec_path = vectors_partial_path(dir);
    match fs::metadata(&vec_path) {
        Ok(meta) if meta.len() >= want_bytes => {
            if meta.len() > want_bytes {
                let Ok(file) = OpenOptions::new().write(true).open(&vec_path) else {
                    return 0;
                };
                if file.set_len(want_bytes).is_err() {
                    return 0;
                }
            }
            progress.rows_done
        }
        _ => 0,
    }
}

fn clear_build_state(dir: &Path) {
    for path in [
        progress_path(dir),
        ids_partial_path(dir),
        vectors_partial_path(dir),
    ] {
        let _ = fs::remove_file(path);
    }
}

/// Embed every passage of `collection` and write an index into `dir`.
///
/// Passages are embedded in passage-id order in batches of `batch_size`;
/// after every batch the partial vectors, ids, and a progress record hit
/// disk, so a killed build resumes where it stopped and produces files
/// byte-identical to an uninterrupted build. Errors out if a completed index
/// already exists, unless `overwrite` is set.
pub fn build_index(
    collection: &Collection,
    embedder: &dyn Embedder,
    batch_size: usize,
    dir: &Path,
    overwrite: bool,
) -> Result<DenseIndex> {
    if manifest_path(dir).exists() {
        if !overwrite {
            return Err(Error::Config(format!(
                "index {} already exists (pass overwrite to rebuild)",
                dir.display()
            )));
        }
        for path in [manifest_path(dir), ids_path(dir), vectors_path(dir)] {
            let _ = fs::remove_file(path);
        }
        clear_build_state(dir);
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut rows: Vec<&mrag_core::chunk::Passage> = collection.passages.iter().collect();
    rows.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));
    let ids: Vec<&str> = rows.iter().map(|p| p.passage_id.as_str()).collect();

    let identity = embedder.identity();
    let fingerprint = build_fingerprint(&collection.collection_id, &identity, &ids);
    let mut rows_done = resume_point(dir, &fingerprint, &ids);
    if rows_done == 0 {
        clear_build_state(dir);
    }

    let batch_size = batch_size.max(1);
    let mut dims: usize = if rows_done > 0 {
        let progress: BuildProgress = ioutil::read_json(&progress_path(dir))?;
        progress.dims
    } else {
        0
    };

    while rows_done < rows.len() {
        let batch = &rows[rows_done..(rows_done + batch_size).min(rows.len())];
        let texts: Vec<String> = batch.iter().map(|p| p.embed_text()).collect();
        let vectors = embedder.embed(&texts)?;
        if vectors.len() != texts.len() {
            return Err(Error::Service {
                service: "embedder",
                retryable: false,
                message: format!("sent {} texts, got {} vectors", texts.len(), vectors.len()),
            });
        }
        for vector in &vectors {
            vector.ensure_finite("embedder")?;
            if dims == 0 {
                dims = vector.dims();
                if dims == 0 {
                    return Err(Error::Service {
                        service: "embedder",
                        retryable: false,
                        message: "embedder returned zero-dimensional vectors".into(),
                    });
                }
            }
            if vector.dims() != dims {
                return Err(Error::Dims {
                    expected: dims,
                    got: vector.dims(),
                });
            }
        }

        let mut vec_file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(vectors_partial_path(dir))
            .map_err(|e| Error::io(vectors_partial_path(dir), e))?;
        for vector in &vectors {
            vec_file
                .write_all(&vectors_to_bytes(&vector.values))
                .map_err(|e| Error::io(vectors_partial_path(dir), e))?;
        }
        vec_file
            .flush()
            .map_err(|e| Error::io(vectors_partial_path(dir), e))?;

        let mut ids_file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(ids_partial_path(dir))
            .map_err(|e| Error::io(ids_partial_path(dir), e))?;
        for passage in batch {
            ids_file
                .write_all(passage.passage_id.as_bytes())
                .and_then(|()| ids_file.write_all(b"\n"))
                .map_err(|e| Error::io(ids_partial_path(dir), e))?;
        }
        ids_file
            .flush()
            .map_err(|e| Error::io(ids_partial_path(dir), e))?;

        rows_done += batch.len();
        ioutil::write_json(
            &progress_path(dir),
            &BuildProgress {
                fingerprint: fingerprint.clone(),
                dims,
                rows_done,
            },
        )?;
    }

    // Empty collections produce an empty (but valid) index.
    let ids_text = if rows.is_empty() {
        String::new()
    } else {
        ioutil::read_string(&ids_partial_path(dir))?
    };
    let vector_bytes = if rows.is_empty() {
        Vec::new()
    } else {
        ioutil::read_bytes(&vectors_partial_path(dir))?
    };

    let manifest = IndexManifest {
        format_version: INDEX_FORMAT_VERSION,
        collection_id: collection.collection_id.clone(),
        dims,
        count: rows.len(),
        embedder_identity: identity,
        content_sha256: index_content_checksum(&ids_text, &vector_bytes),
    };
    ioutil::write_string(&ids_path(dir), &ids_text)?;
    ioutil::write_bytes(&vectors_path(dir), &vector_bytes)?;
    ioutil::write_json(&manifest_path(dir), &manifest)?;
    clear_build_state(dir);

    open_index(dir)
}

/// Write an in-memory index (typically a merge result) to `dir`.
pub fn persist_index(index: &DenseIndex, dir: &Path, overwrite: bool) -> Result<()> {
    if manifest_path(dir).exists() && !overwrite {
        return Err(Error::Config(format!(
            "index {} already exists (pass overwrite to replace it)",
            dir.display()
        )));
    }
    let mut ids_text = String::new();
    for id in &index.ids {
        ids_text.push_str(id);
        ids_text.push('\n');
    }
    let vector_bytes = vectors_to_bytes(&index.vectors);
    let mut manifest = index.manifest.clone();
    manifest.content_sha256 = index_content_checksum(&ids_text, &vector_bytes);
    ioutil::write_string(&ids_path(dir), &ids_text)?;
    ioutil::write_bytes(&vectors_path(dir), &vector_bytes)?;
    ioutil::write_json(&manifest_path(dir), &manifest)
}

/// Open an index directory, verifying version, checksum, shape, and id order.
pub fn open_index(dir: &Path) -> Result<DenseIndex> {
    let manifest: IndexManifest = ioutil::read_json(&manifest_path(dir))?;
    if manifest.format_version != INDEX_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            path: manifest_path(dir),
            found: manifest.format_version,
            expected: INDEX_FORMAT_VERSION,
        });
    }
    let ids_text = ioutil::read_string(&ids_path(dir))?;
    let vector_bytes = ioutil::read_bytes(&vectors_path(dir))?;
    if index_content_checksum(&ids_text, &vector_bytes) != manifest.content_sha256 {
        return Err(Error::Corrupt {
            path: dir.to_path_buf(),
            message: "content checksum does not match manifest".into(),
        });
    }

    let ids: Vec<String> = ids_text.lines().map(str::to_string).collect();
    if ids.len() != manifest.count {
        return Err(Error::Corrupt {
            path: ids_path(dir),
            message: format!("manifest says {} ids, file holds {}", manifest.count, ids.len()),
        });
    }
    for pair in ids.windows(2) {
        if pair[0] >= pair[1] {
            return Err(Error::Corrupt {
                path: ids_path(dir),
                message: format!("ids not strictly ascending near {:?}", pair[0]),
            });
        }
    }
    let vectors = bytes_to_vectors(&vector_bytes, &vectors_path(dir))?;
    if vectors.len() != manifest.count * manifest.dims {
        return Err(Error::Corrupt {
            path: vectors_path(dir),
            message: format!(
                "expected {} floats ({} rows x {} dims), found {}",
                manifest.count * manifest.dims,
                manifest.count,
                manifest.dims,
                vectors.len()
            ),
        });
    }
    Ok(DenseIndex {
        manifest,
        ids,
        vectors,
    })
}

/// Merge several indexes into one, keeping global id order.
///
/// All parts must share dimensions and embedder identity, and their id sets
/// must be disjoint — merged search is then exactly equivalent to searching
/// the parts separately and merging the ranked lists.
pub fn merge_indexes(collection_id: &str, parts: &[DenseIndex]) -> Result<DenseIndex> {
    let first = parts.first().ok_or_else(|| {
        Error::Config("cannot merge zero indexes".into())
    })?;
    let dims = first.manifest.dims;
    let identity = first.manifest.embedder_identity.clone();
    for part in parts {
        if part.manifest.dims != dims {
            return Err(Error::Dims {
                expected: dims,
                got: part.manifest.dims,
            });
        }
        if part.manifest.embedder_identity != identity {
            return Err(Error::Config(format!(
                "cannot merge indexes built by different embedders: {:?} vs {:?}",
                identity, part.manifest.embedder_identity
            )));
        }
    }

    let total: usize = parts.iter().map(|p| p.ids.len()).sum();
    let mut rows: Vec<(&str, &[f32])> = Vec::with_capacity(total);
    for part in parts {
        for (i, id) in part.ids.iter().enumerate() {
            rows.push((id.as_str(), &part.vectors[i * dims..(i + 1) * dims]));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(b.0));
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DuplicateId {
                id: pair[0].0.to_string(),
                context: format!("merging indexes into {collection_id:?}"),
            });
        }
    }

    let mut ids = Vec::with_capacity(total);
    let mut vectors = Vec::with_capacity(total * dims);
    for (id, row) in rows {
        ids.push(id.to_string());
        vectors.extend_from_slice(row);
    }
    let mut ids_text = String::new();
    for id in &ids {
        ids_text.push_str(id);
        ids_text.push('\n');
    }
    let content_sha256 = index_content_checksum(&ids_text, &vectors_to_bytes(&vectors));
    Ok(DenseIndex {
        manifest: IndexManifest {
            format_version: INDEX_FORMAT_VERSION,
            collection_id: collection_id.to_string(),
            dims,
            count: ids.len(),
            embedder_identity: identity,
            content_sha256,
        },
        ids,
        vectors,
    })
}
