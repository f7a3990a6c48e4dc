//! Retrieval-augmented generation harness for multilingual question
//! answering: corpus ingestion, dense retrieval with reranking,
//! language-aware prompt assembly, generation through pluggable model
//! services, and lexical evaluation with per-language reporting.
//!
//! The language-independent logic (chunking, normalization, metrics, exact
//! top-k, prompt catalog) lives in [`mrag_core`]; this crate adds file
//! formats, service clients, the run pipeline, and the command-line tool.

pub mod cli;
pub mod clients;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod index;
pub mod ioutil;
pub mod pipeline;
pub mod report;
