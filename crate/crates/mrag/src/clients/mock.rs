//! Deterministic in-process service mocks.
//!
//! These stand in for real model services in tests, dry runs, and the wire
//! server. Determinism is load-bearing: the same input must produce the same
//! output across processes and platforms, because run artifacts are compared
//! byte-for-byte. That is why hashing uses an explicit FNV-1a implementation
//! rather than the standard library's randomly seeded hasher.

use std::collections::{BTreeMap, BTreeSet};

use mrag_core::chunk::Passage;
use mrag_core::lang::LanguageCode;
use mrag_core::langid::{LangIdentifier, LangVerdict};
use mrag_core::metrics::char_ngrams;
use mrag_core::normalize::{normalize, NormalizationPolicy};
use mrag_core::prompt::{ChatRequest, Role};

use crate::error::{Error, Result};

use super::{
    validate_chat_request, validate_embed_request, validate_rerank_request,
    validate_translate_request, Embedder, EmbeddingVector, Generator, LanguageIdService,
    RerankScore, Reranker, Translator,
};

/// Fixed string the mock generator returns when it has no context to quote.
pub const NO_ANSWER: &str = "no answer found in the provided context";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Seeded FNV-1a over bytes; stable across processes and platforms.
fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for b in seed.to_le_bytes() {
        hash = (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME);
    }
    for &b in bytes {
        hash = (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Lowercased, punctuation-free tokens used by all mocks, so "Paragonia." and
/// "Paragonia" agree.
fn mock_tokens(text: &str) -> Vec<String> {
    normalize(text, LanguageCode::En, &NormalizationPolicy::without_articles())
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Hash-based bag-of-trigrams embedder.
///
/// Each character trigram of each normalized token hashes to one coordinate
/// with a ±1 sign; the accumulated vector is L2-normalized. Texts sharing
/// trigrams land near each other, which is all the retrieval tests need.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    pub dims: usize,
    pub seed: u64,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        MockEmbedder { dims: 64, seed: 0 }
    }
}

impl MockEmbedder {
    fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut grams: Vec<String> = Vec::new();
        for token in mock_tokens(text) {
            grams.extend(char_ngrams(&token, 3));
        }
        if grams.is_empty() {
            // Text that normalizes to nothing (pure punctuation) still gets a
            // deterministic non-zero vector from its raw bytes.
            grams.push(text.to_string());
        }
        let mut values = vec![0.0f32; self.dims];
        for gram in &grams {
            let hash = fnv1a64(self.seed, gram.as_bytes());
            let idx = (hash % self.dims as u64) as usize;
            let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
            values[idx] += sign;
        }
        let norm = values.iter().map(|v| v * v).sum::<f32>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        } else {
            // All grams cancelled (possible with colliding ± signs): fall
            // back to a fixed unit vector so downstream math stays sane.
            values[0] = 1.0;
        }
        EmbeddingVector { values }
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        validate_embed_request(texts)?;
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn identity(&self) -> String {
        format!("mock-embedder/trigram-d{}-s{}", self.dims, self.seed)
    }
}

/// Token-overlap reranker: the fraction of the query's distinct normalized
/// tokens that appear in the passage (title and text).
#[derive(Debug, Clone, Default)]
pub struct MockReranker;

impl Reranker for MockReranker {
    fn rerank(&self, query: &str, candidates: &[Passage]) -> Result<Vec<RerankScore>> {
        validate_rerank_request(query, candidates)?;
        let query_tokens: BTreeSet<String> = mock_tokens(query).into_iter().collect();
        let scores = candidates
            .iter()
            .map(|passage| {
                let doc_tokens: BTreeSet<String> =
                    mock_tokens(&passage.embed_text()).into_iter().collect();
                let score = if query_tokens.is_empty() {
                    0.0
                } else {
                    let hits = query_tokens.intersection(&doc_tokens).count();
                    hits as f32 / query_tokens.len() as f32
                };
                RerankScore {
                    passage_id: passage.passage_id.clone(),
                    score,
                }
            })
            .collect();
        Ok(scores)
    }

    fn identity(&self) -> String {
        "mock-reranker/token-overlap".into()
    }
}

/// Extractive generator: replies with the context sentence sharing the most
/// tokens with the question, truncated to the request's token budget.
#[derive(Debug, Clone, Default)]
pub struct MockGenerator {
    /// When set, any user message containing this marker fails the request —
    /// used to exercise per-query fault quarantine end to end.
    pub fail_marker: Option<String>,
}

impl MockGenerator {
    fn split_sentences(context: &str) -> Vec<&str> {
        context
            .split(['.', '!', '?', '。', '！', '？', '\n'])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect()
    }
}

impl Generator for MockGenerator {
    fn generate(&self, request: &ChatRequest) -> Result<String> {
        validate_chat_request(request)?;
        let user = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .ok_or_else(|| Error::InvalidRequest {
                service: "generator",
                message: "chat request has no user message".into(),
            })?;

        if let Some(marker) = &self.fail_marker {
            if user.content.contains(marker.as_str()) {
                return Err(Error::Service {
                    service: "generator",
                    retryable: false,
                    message: format!("injected failure: user message contains {marker:?}"),
                });
            }
        }

        // The user message is `context\n\nquestion` (or a bare question).
        let (context, question) = match user.content.rsplit_once("\n\n") {
            Some((ctx, q)) => (ctx, q),
            None => return Ok(NO_ANSWER.to_string()),
        };

        let question_tokens: BTreeSet<String> = mock_tokens(question).into_iter().collect();
        let mut best: Option<(usize, &str)> = None;
        for sentence in Self::split_sentences(context) {
            let tokens: BTreeSet<String> = mock_tokens(sentence).into_iter().collect();
            let overlap = question_tokens.intersection(&tokens).count();
            let better = match best {
                Some((best_overlap, _)) => overlap > best_overlap,
                None => true,
            };
            if better {
                best = Some((overlap, sentence));
            }
        }

        let answer = match best {
            Some((overlap, sentence)) if overlap > 0 => sentence,
            _ => return Ok(NO_ANSWER.to_string()),
        };
        let budget = request.max_new_tokens as usize;
        let truncated: Vec<&str> = answer.split_whitespace().take(budget).collect();
        Ok(truncated.join(" "))
    }

    fn identity(&self) -> String {
        "mock-generator/extractive".into()
    }
}

/// Token-substitution translator backed by bilingual lexicons. Tokens missing
/// from the lexicon (or whole missing language pairs) pass through unchanged.
#[derive(Debug, Clone, Default)]
pub struct MockTranslator {
    lexicons: BTreeMap<(LanguageCode, LanguageCode), BTreeMap<String, String>>,
}

impl MockTranslator {
    pub fn with_lexicon<I, K, V>(
        mut self,
        source: LanguageCode,
        target: LanguageCode,
        entries: I,
    ) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let map = self.lexicons.entry((source, target)).or_default();
        for (k, v) in entries {
            map.insert(k.into().to_lowercase(), v.into());
        }
        self
    }

    /// Parse a lexicon file: a `pair <source> <target>` line followed by
    /// `token<TAB>translation` lines; `#` starts a comment.
    pub fn load_lexicon(&mut self, src: &str) -> Result<()> {
        let mut pair: Option<(LanguageCode, LanguageCode)> = None;
        for (idx, raw) in src.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("pair ") {
                let mut parts = rest.split_whitespace();
                let (src_code, tgt_code) = (parts.next(), parts.next());
                let parse = |code: Option<&str>| -> Result<LanguageCode> {
                    code.and_then(|c| c.parse().ok()).ok_or_else(|| {
                        Error::Config(format!("lexicon line {line}: invalid pair declaration"))
                    })
                };
                pair = Some((parse(src_code)?, parse(tgt_code)?));
                continue;
            }
            let (token, translation) = trimmed.split_once('\t').ok_or_else(|| {
                Error::Config(format!(
                    "lexicon line {line}: expected token<TAB>translation"
                ))
            })?;
            let (source, target) = pair.ok_or_else(|| {
                Error::Config(format!(
                    "lexicon line {line}: entry appears before any `pair` declaration"
                ))
            })?;
            self.lexicons
                .entry((source, target))
                .or_default()
                .insert(token.to_lowercase(), translation.to_string());
        }
        Ok(())
    }
}

impl Translator for MockTranslator {
    fn translate(
        &self,
        text: &str,
        source: LanguageCode,
        target: LanguageCode,
    ) -> Result<String> {
        validate_translate_request(text, source, target)?;
        let lexicon = self.lexicons.get(&(source, target));
        let translated: Vec<&str> = text
            .split_whitespace()
            .map(|token| {
                lexicon
                    .and_then(|lex| lex.get(&token.to_lowercase()))
                    .map(String::as_str)
                    .unwrap_or(token)
            })
            .collect();
        Ok(translated.join(" "))
    }

    fn identity(&self) -> String {
        "mock-translator/lexicon".into()
    }
}

/// The builtin script/stopword identifier exposed behind the service trait.
pub struct BuiltinIdentifier {
    identifier: LangIdentifier,
}

impl Default for BuiltinIdentifier {
    fn default() -> Self {
        BuiltinIdentifier {
            identifier: LangIdentifier::builtin(),
        }
    }
}

impl LanguageIdService for BuiltinIdentifier {
    fn identify(&self, text: &str) -> Result<LangVerdict> {
        Ok(self.identifier.identify(text))
    }

    fn identity(&self) -> String {
        "builtin-langid".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mrag_core::prompt::build_chat;

    fn passage(id: &str, title: &str, text: &str) -> Passage {
        Passage {
            passage_id: id.into(),
            doc_id: "d".into(),
            title: title.into(),
            text: text.into(),
            lang: LanguageCode::En,
            position: 0,
        }
    }

    #[test]
    fn embeddings_are_unit_length_and_deterministic() {
        let embedder = MockEmbedder::default();
        let texts = vec!["hello world".to_string(), "Bonjour le monde !".to_string()];
        let a = embedder.embed(&texts).unwrap();
        let b = embedder.embed(&texts).unwrap();
        assert_eq!(a, b);
        for vector in &a {
            assert_eq!(vector.dims(), 64);
            let norm: f32 = vector.values.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5, "norm was {norm}");
        }
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn embedding_ignores_case_and_punctuation() {
        let embedder = MockEmbedder::default();
        let a = embedder.embed(&["Paragonia.".to_string()]).unwrap();
        let b = embedder.embed(&["paragonia".to_string()]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_give_different_spaces() {
        let a = MockEmbedder { dims: 64, seed: 0 }
            .embed(&["hello".to_string()])
            .unwrap();
        let b = MockEmbedder { dims: 64, seed: 1 }
            .embed(&["hello".to_string()])
            .unwrap();
        assert_ne!(a, b);
        assert_ne!(
            MockEmbedder { dims: 64, seed: 0 }.identity(),
            MockEmbedder { dims: 64, seed: 1 }.identity()
        );
    }

    #[test]
    fn reranker_scores_by_query_token_coverage() {
        let reranker = MockReranker;
        let candidates = vec![
            passage("p1", "Foxes", "The red fox jumps."),
            passage("p2", "Weather", "It rained all day."),
        ];
        let scores = reranker.rerank("red fox", &candidates).unwrap();
        assert_eq!(scores.len(), 2);
        assert_eq!(scores[0].passage_id, "p1");
        assert!((scores[0].score - 1.0).abs() < 1e-6);
        assert_eq!(scores[1].score, 0.0);
    }

    #[test]
    fn generator_extracts_best_overlapping_sentence() {
        let context = "Document 1: Cities\nParis is the capital of France. Berlin is the capital of Germany.";
        let request = build_chat("sys", context, "What is the capital of France?", 128);
        let out = MockGenerator::default().generate(&request).unwrap();
        assert_eq!(out, "Paris is the capital of France");
    }

    #[test]
    fn generator_without_context_says_no_answer() {
        let request = build_chat("sys", "", "What is the capital of France?", 128);
        let out = MockGenerator::default().generate(&request).unwrap();
        assert_eq!(out, NO_ANSWER);
    }

    #[test]
    fn generator_honors_token_budget() {
        let long_sentence = (0..300).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let context = format!("Document 1: T\nw1 {long_sentence}");
        let request = build_chat("sys", &context, "w1", 128);
        let out = MockGenerator::default().generate(&request).unwrap();
        assert_eq!(out.split_whitespace().count(), 128);
    }

    #[test]
    fn generator_fail_marker_injects_service_errors() {
        let generator = MockGenerator {
            fail_marker: Some("[FAIL]".into()),
        };
        let bad = build_chat("sys", "ctx text", "Tell me [FAIL] now", 128);
        let err = generator.generate(&bad).unwrap_err();
        assert!(matches!(
            err,
            Error::Service {
                retryable: false,
                ..
            }
        ));
        let ok = build_chat("sys", "ctx text question words", "question words", 128);
        assert!(generator.generate(&ok).is_ok());
    }

    #[test]
    fn translator_substitutes_known_tokens_and_passes_through_rest() {
        let translator = MockTranslator::default().with_lexicon(
            LanguageCode::Fr,
            LanguageCode::En,
            [("quelle", "what"), ("est", "is"), ("la", "the"), ("capitale", "capital"), ("de", "of")],
        );
        let out = translator
            .translate("Quelle est la capitale de Paragonia ?", LanguageCode::Fr, LanguageCode::En)
            .unwrap();
        assert_eq!(out, "what is the capital of Paragonia ?");

        // Missing pair: everything passes through.
        let out = translator
            .translate("hola mundo", LanguageCode::Es, LanguageCode::En)
            .unwrap();
        assert_eq!(out, "hola mundo");
    }

    #[test]
    fn translator_rejects_same_language_pairs() {
        let translator = MockTranslator::default();
        let err = translator
            .translate("text", LanguageCode::En, LanguageCode::En)
            .unwrap_err();
        assert!(matches!(err, Error::InvalidRequest { .. }));
    }

    #[test]
    fn lexicon_files_parse_with_pair_headers() {
        let mut translator = MockTranslator::default();
        translator
            .load_lexicon("# demo\npair fr en\nchat\tcat\nchien\tdog\n")
            .unwrap();
        let out = translator
            .translate("le chat", LanguageCode::Fr, LanguageCode::En)
            .unwrap();
        assert_eq!(out, "le cat");

        let err = translator.load_lexicon("chat\tcat\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn builtin_identifier_wraps_core_langid() {
        let id = BuiltinIdentifier::default();
        let verdict = id.identify("서울은 대한민국의 수도입니다").unwrap();
        assert_eq!(verdict.lang, Some(LanguageCode::Ko));
    }
}
