//! Model-service abstractions: embedding, reranking, generation, translation,
//! and language identification.
//!
//! Each service is a trait with two families of implementations: HTTP clients
//! speaking the JSON wire contract (see [`http`]) and deterministic in-process
//! mocks (see [`mock`]) that stand in for real models during tests and dry
//! runs. The pipeline only sees the traits, so swapping a mock for a live
//! endpoint is a configuration change.

pub mod http;
pub mod mock;
pub mod server;

use mrag_core::chunk::Passage;
use mrag_core::lang::LanguageCode;
use mrag_core::langid::LangVerdict;
use mrag_core::prompt::ChatRequest;

use crate::error::{Error, Result};

/// A dense embedding as returned by the embedding service.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn dims(&self) -> usize {
        self.values.len()
    }

    /// Reject NaN/infinite components, which would poison score ordering.
    pub fn ensure_finite(&self, service: &'static str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Service {
                service,
                retryable: false,
                message: "embedding contains non-finite values".into(),
            })
        }
    }
}

/// Relevance score the reranker assigned to one candidate passage.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankScore {
    pub passage_id: String,
    pub score: f32,
}

/// Batch text embedding.
pub trait Embedder: Send + Sync {
    /// Embed each text; output order matches input order and all vectors
    /// share one dimensionality.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
    /// Stable identity string recorded in index manifests; indexes built
    /// under one identity refuse to serve queries embedded under another.
    fn identity(&self) -> String;
}

/// Query-conditioned candidate scoring.
pub trait Reranker: Send + Sync {
    /// Score every candidate against the query; one score per candidate.
    fn rerank(&self, query: &str, candidates: &[Passage]) -> Result<Vec<RerankScore>>;
    fn identity(&self) -> String;
}

/// Answer generation from an assembled chat request.
pub trait Generator: Send + Sync {
    fn generate(&self, request: &ChatRequest) -> Result<String>;
    fn identity(&self) -> String;
}

/// Text translation between two supported languages.
pub trait Translator: Send + Sync {
    fn translate(&self, text: &str, source: LanguageCode, target: LanguageCode)
        -> Result<String>;
    fn identity(&self) -> String;
}

/// Language identification as a service (the response-audit step).
pub trait LanguageIdService: Send + Sync {
    fn identify(&self, text: &str) -> Result<LangVerdict>;
    fn identity(&self) -> String;
}

macro_rules! forward_box {
    ($trait_:ident, $($method:ident(&self $(, $arg:ident : $ty:ty)*) -> $ret:ty);+ $(;)?) => {
        impl<T: $trait_ + ?Sized> $trait_ for Box<T> {
            $(fn $method(&self $(, $arg: $ty)*) -> $ret {
                (**self).$method($($arg),*)
            })+
        }
    };
}

forward_box!(Embedder,
    embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
    identity(&self) -> String;
);
forward_box!(Reranker,
    rerank(&self, query: &str, candidates: &[Passage]) -> Result<Vec<RerankScore>>;
    identity(&self) -> String;
);
forward_box!(Generator,
    generate(&self, request: &ChatRequest) -> Result<String>;
    identity(&self) -> String;
);
forward_box!(Translator,
    translate(&self, text: &str, source: LanguageCode, target: LanguageCode) -> Result<String>;
    identity(&self) -> String;
);
forward_box!(LanguageIdService,
    identify(&self, text: &str) -> Result<LangVerdict>;
    identity(&self) -> String;
);

/// The full set of services a run needs.
pub struct Services {
    pub embedder: Box<dyn Embedder>,
    pub reranker: Box<dyn Reranker>,
    pub generator: Box<dyn Generator>,
    pub translator: Box<dyn Translator>,
    pub identifier: Box<dyn LanguageIdService>,
}

/// Validation shared by every embedder implementation.
pub fn validate_embed_request(texts: &[String]) -> Result<()> {
    if texts.is_empty() {
        return Err(Error::InvalidRequest {
            service: "embedder",
            message: "batch must contain at least one text".into(),
        });
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(Error::InvalidRequest {
            service: "embedder",
            message: format!("text at batch position {i} is empty"),
        });
    }
    Ok(())
}

/// Validation shared by every reranker implementation.
pub fn validate_rerank_request(query: &str, candidates: &[Passage]) -> Result<()> {
    if query.trim().is_empty() {
        return Err(Error::InvalidRequest {
            service: "reranker",
            message: "query must not be empty".into(),
        });
    }
    if candidates.is_empty() {
        return Err(Error::InvalidRequest {
            service: "reranker",
            message: "candidate list must not be empty".into(),
        });
    }
    Ok(())
}

/// Validation shared by every generator implementation.
pub fn validate_chat_request(request: &ChatRequest) -> Result<()> {
    if request.messages.is_empty() {
        return Err(Error::InvalidRequest {
            service: "generator",
            message: "chat request has no messages".into(),
        });
    }
    if request.max_new_tokens == 0 {
        return Err(Error::InvalidRequest {
            service: "generator",
            message: "max_new_tokens must be positive".into(),
        });
    }
    Ok(())
}

/// Validation shared by every translator implementation.
pub fn validate_translate_request(
    text: &str,
    source: LanguageCode,
    target: LanguageCode,
) -> Result<()> {
    if source == target {
        return Err(Error::InvalidRequest {
            service: "translator",
            message: format!("source and target language are both {source}"),
        });
    }
    if text.trim().is_empty() {
        return Err(Error::InvalidRequest {
            service: "translator",
            message: "text must not be empty".into(),
        });
    }
    Ok(())
}

/// Retry schedule for transient service failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub attempts: u32,
    /// Delay before the second attempt; doubles each retry.
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay_ms: 100,
        }
    }
}

impl RetryPolicy {
    /// Run `call`, retrying on retryable errors with exponential backoff.
    /// Non-retryable errors and the final failure pass through unchanged.
    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T>) -> Result<T> {
        let mut delay = self.base_delay_ms;
        let attempts = self.attempts.max(1);
        for attempt in 1..=attempts {
            match call() {
                Ok(value) => return Ok(value),
                Err(err) if err.is_retryable() && attempt < attempts => {
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                    delay = delay.saturating_mul(2);
                }
                Err(err) => return Err(err),
            }
        }
        unreachable!("loop always returns")
    }
}

/// Wraps any service so its calls retry per `policy`.
pub struct WithRetry<S> {
    inner: S,
    policy: RetryPolicy,
}

impl<S> WithRetry<S> {
    pub fn new(inner: S, policy: RetryPolicy) -> Self {
        WithRetry { inner, policy }
    }
}

impl<S: Embedder> Embedder for WithRetry<S> {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.policy.run(|| self.inner.embed(texts))
    }
    fn identity(&self) -> String {
        self.inner.identity()
    }
}

impl<S: Reranker> Reranker for WithRetry<S> {
    fn rerank(&self, query: &str, candidates: &[Passage]) -> Result<Vec<RerankScore>> {
        self.policy.run(|| self.inner.rerank(query, candidates))
    }
    fn identity(&self) -> String {
        self.inner.identity()
    }
}

impl<S: Generator> Generator for WithRetry<S> {
    fn generate(&self, request: &ChatRequest) -> Result<String> {
        self.policy.run(|| self.inner.generate(request))
    }
    fn identity(&self) -> String {
        self.inner.identity()
    }
}

impl<S: Translator> Translator for WithRetry<S> {
    fn translate(
        &self,
        text: &str,
        source: LanguageCode,
        target: LanguageCode,
    ) -> Result<String> {
        self.policy.run(|| self.inner.translate(text, source, target))
    }
    fn identity(&self) -> String {
        self.inner.identity()
    }
}

impl<S: LanguageIdService> LanguageIdService for WithRetry<S> {
    fn identify(&self, text: &str) -> Result<LangVerdict> {
        self.policy.run(|| self.inner.identify(text))
    }
    fn identity(&self) -> String {
        self.inner.identity()
    }
}
