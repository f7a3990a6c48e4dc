//! Splitting documents into fixed-size retrieval passages.
//!
//! Whitespace-separated languages are chunked by word count; Chinese,
//! Japanese, and Thai are chunked by Unicode scalar value count because
//! whitespace does not mark word boundaries there. In both cases the body's
//! whitespace runs are first collapsed to single spaces, so chunking is a
//! pure function of the visible text and re-running it is byte-stable.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::lang::LanguageCode;

/// A source document as ingested, before chunking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    /// Stable identifier, unique within a collection.
    pub doc_id: String,
    /// Title; prepended to every passage when building embedding text.
    pub title: String,
    /// Full body text.
    pub body: String,
    /// Language of both title and body.
    pub lang: LanguageCode,
}

/// One retrieval unit produced by chunking a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    /// `{doc_id}::{position}`; unique within a collection.
    pub passage_id: String,
    /// Identifier of the source document.
    pub doc_id: String,
    /// Title copied from the source document.
    pub title: String,
    /// The chunk text (title not included).
    pub text: String,
    /// Language inherited from the source document.
    pub lang: LanguageCode,
    /// Zero-based chunk index within the document.
    pub position: u32,
}

impl Passage {
    /// The text representation handed to embedding and reranking services:
    /// title and chunk joined by a single newline.
    pub fn embed_text(&self) -> String {
        let mut s = String::with_capacity(self.title.len() + 1 + self.text.len());
        s.push_str(&self.title);
        s.push('\n');
        s.push_str(&self.text);
        s
    }
}

/// Chunk size limits. Word limit applies to whitespace-separated languages,
/// character limit to the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPolicy {
    /// Maximum whitespace-delimited words per passage.
    pub word_limit: usize,
    /// Maximum Unicode scalar values per passage for zh/ja/th.
    pub char_limit: usize,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        ChunkPolicy {
            word_limit: 100,
            char_limit: 100,
        }
    }
}

/// Collapse every run of Unicode whitespace to a single ASCII space and trim.
///
/// This is the canonical body text that chunks are sliced from; the
/// concatenation of all chunk texts (joined by the same separator rules)
/// reproduces it exactly.
fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Split a document into passages according to `policy`.
///
/// An empty or whitespace-only body yields no passages. Otherwise every
/// passage except possibly the last is exactly at the size limit, and chunk
/// order follows document order. Passage ids are `{doc_id}::{position}` with
/// positions counting from zero.
pub fn chunk_document(doc: &Document, policy: ChunkPolicy) -> Vec<Passage> {
    let texts: Vec<String> = if doc.lang.whitespace_separated() {
        let words: Vec<&str> = doc.body.split_whitespace().collect();
        words
            .chunks(policy.word_limit.max(1))
            .map(|chunk| chunk.join(" "))
            .collect()
    } else {
        let collapsed = collapse_whitespace(&doc.body);
        let chars: Vec<char> = collapsed.chars().collect();
        chars
            .chunks(policy.char_limit.max(1))
            .map(|chunk| chunk.iter().collect())
            .collect()
    };

    texts
        .into_iter()
        .enumerate()
        .map(|(position, text)| Passage {
            passage_id: format!("{}::{}", doc.doc_id, position),
            doc_id: doc.doc_id.clone(),
            title: doc.title.clone(),
            text,
            lang: doc.lang,
            position: position as u32,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn doc(id: &str, title: &str, body: &str, lang: LanguageCode) -> Document {
        Document {
            doc_id: id.to_string(),
            title: title.to_string(),
            body: body.to_string(),
            lang,
        }
    }

    fn words(n: usize) -> String {
        (1..=n)
            .map(|i| format!("w{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn splits_english_words_into_hundred_word_chunks() {
        let d = doc("d1", "T", &words(250), LanguageCode::En);
        let passages = chunk_document(&d, ChunkPolicy::default());
        assert_eq!(passages.len(), 3);
        let counts: Vec<usize> = passages
            .iter()
            .map(|p| p.text.split_whitespace().count())
            .collect();
        assert_eq!(counts, vec![100, 100, 50]);
        assert_eq!(passages[0].passage_id, "d1::0");
        assert_eq!(passages[2].passage_id, "d1::2");
        assert!(passages.iter().all(|p| p.title == "T"));
        assert_eq!(passages[1].text.split_whitespace().next(), Some("w101"));
    }

    #[test]
    fn short_document_yields_single_passage() {
        let d = doc("d", "T", "only five words in here", LanguageCode::En);
        let passages = chunk_document(&d, ChunkPolicy::default());
        assert_eq!(passages.len(), 1);
        assert_eq!(passages[0].text, "only five words in here");
        assert_eq!(passages[0].position, 0);
    }

    #[test]
    fn empty_and_whitespace_only_bodies_yield_nothing() {
        for body in ["", "   ", "\n\t  \u{3000}"] {
            let d = doc("d", "T", body, LanguageCode::En);
            assert!(chunk_document(&d, ChunkPolicy::default()).is_empty());
            let d = doc("d", "T", body, LanguageCode::Ja);
            assert!(chunk_document(&d, ChunkPolicy::default()).is_empty());
        }
    }

    #[test]
    fn japanese_chunks_count_scalar_values() {
        // 100 scalar values exactly: one passage, no split.
        let body: String = "あ".repeat(100);
        let d = doc("jp", "見出し", &body, LanguageCode::Ja);
        let passages = chunk_document(&d, ChunkPolicy::default());
        assert_eq!(passages.len(), 1);
        assert_eq!(passages[0].text.chars().count(), 100);

        // 250 scalar values: 100/100/50.
        let body: String = "語".repeat(250);
        let d = doc("jp", "見出し", &body, LanguageCode::Ja);
        let passages = chunk_document(&d, ChunkPolicy::default());
        let counts: Vec<usize> = passages.iter().map(|p| p.text.chars().count()).collect();
        assert_eq!(counts, vec![100, 100, 50]);
    }

    #[test]
    fn cjk_whitespace_runs_collapse_before_counting() {
        let d = doc("zh", "题", "前文\n\n  后文", LanguageCode::Zh);
        let passages = chunk_document(&d, ChunkPolicy::default());
        assert_eq!(passages.len(), 1);
        assert_eq!(passages[0].text, "前文 后文");
    }

    #[test]
    fn word_chunks_reconstruct_collapsed_body() {
        let body = "  a\tb\nc   d e  ";
        let d = doc("d", "T", body, LanguageCode::En);
        let passages = chunk_document(&d, ChunkPolicy { word_limit: 2, char_limit: 2 });
        let joined = passages
            .iter()
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        assert_eq!(joined, "a b c d e");
    }

    #[test]
    fn char_chunks_reconstruct_collapsed_body() {
        let body = "一二三 四五六七";
        let d = doc("d", "T", body, LanguageCode::Zh);
        let passages = chunk_document(&d, ChunkPolicy { word_limit: 3, char_limit: 3 });
        let joined: String = passages.iter().map(|p| p.text.as_str()).collect();
        assert_eq!(joined, "一二三 四五六七");
        assert_eq!(passages.len(), 3);
    }

    #[test]
    fn embed_text_joins_title_and_chunk_with_newline() {
        let d = doc("d", "Title here", "some body words", LanguageCode::En);
        let passages = chunk_document(&d, ChunkPolicy::default());
        assert_eq!(passages[0].embed_text(), "Title here\nsome body words");
    }

    #[test]
    fn chunking_is_deterministic() {
        let d = doc("d", "T", &words(431), LanguageCode::En);
        let a = chunk_document(&d, ChunkPolicy::default());
        let b = chunk_document(&d, ChunkPolicy::default());
        assert_eq!(a, b);
    }
}
