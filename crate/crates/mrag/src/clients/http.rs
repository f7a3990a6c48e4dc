//! HTTP JSON clients for externally hosted model services.
//!
//! Every service speaks `POST {base}/v1/<op>` with a JSON body and a JSON
//! reply. Transport failures and 5xx statuses are retryable; 4xx statuses
//! and malformed bodies are not, since resending the same request cannot fix
//! them.

use std::collections::HashMap;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mrag_core::chunk::Passage;
use mrag_core::lang::LanguageCode;
use mrag_core::langid::{IdMethod, LangVerdict};
use mrag_core::prompt::{ChatRequest, Role};

use crate::error::{Error, Result};

use super::{
    validate_chat_request, validate_embed_request, validate_rerank_request,
    validate_translate_request, Embedder, EmbeddingVector, Generator, LanguageIdService,
    RerankScore, Reranker, Translator,
};

/// Shared transport: one base URL, one agent, JSON in and out.
#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    base_url: String,
}

impl HttpClient {
    pub fn new(base_url: &str, timeout: Duration) -> HttpClient {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpClient {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post_json<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        service: &'static str,
        path: &str,
        request: &Req,
    ) -> Result<Resp> {
        let url = format!("{}{path}", self.base_url);
        match self.agent.post(&url).send_json(request) {
            Ok(mut response) => response.body_mut().read_json().map_err(|e| Error::Service {
                service,
                retryable: false,
                message: format!("invalid response body from {url}: {e}"),
            }),
            Err(ureq::Error::StatusCode(code)) => Err(Error::Service {
                service,
                retryable: code >= 500,
                message: format!("{url} returned HTTP {code}"),
            }),
            Err(e) => Err(Error::Service {
                service,
                retryable: true,
                message: format!("{url}: {e}"),
            }),
        }
    }
}

// ---- Wire shapes -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct EmbedWireRequest {
    pub texts: Vec<String>,
}

#[derive(Serialize, Deserialize)]
pub struct EmbedWireResponse {
    pub vectors: Vec<Vec<f32>>,
    pub dims: usize,
}

#[derive(Serialize, Deserialize)]
pub struct RerankWireDocument {
    pub id: String,
    pub text: String,
}

#[derive(Serialize, Deserialize)]
pub struct RerankWireRequest {
    pub query: String,
    pub documents: Vec<RerankWireDocument>,
}

#[derive(Serialize, Deserialize)]
pub struct RerankWireScore {
    pub id: String,
    pub score: f32,
}

#[derive(Serialize, Deserialize)]
pub struct RerankWireResponse {
    pub scores: Vec<RerankWireScore>,
}

#[derive(Serialize, Deserialize)]
pub struct ChatWireMessage {
    pub role: String,
    pub content: String,
}

#[derive(Serialize, Deserialize)]
pub struct ChatWireRequest {
    pub messages: Vec<ChatWireMessage>,
    pub max_new_tokens: u32,
    /// Greedy decoding travels as temperature zero.
    pub temperature: f32,
}

#[derive(Serialize, Deserialize)]
pub struct ChatWireResponse {
    pub text: String,
}

#[derive(Serialize, Deserialize)]
pub struct TranslateWireRequest {
    pub text: String,
    pub source: String,
    pub target: String,
}

#[derive(Serialize, Deserialize)]
pub struct TranslateWireResponse {
    pub text: String,
}

#[derive(Serialize, Deserialize)]
pub struct IdentifyWireRequest {
    pub text: String,
}

#[derive(Serialize, Deserialize)]
pub struct IdentifyWireResponse {
    /// A supported language code, or "unknown".
    pub lang: String,
    pub confidence: f64,
}

impl ChatWireRequest {
    pub fn from_chat(request: &ChatRequest) -> ChatWireRequest {
        ChatWireRequest {
            messages: request
                .messages
                .iter()
                .map(|m| ChatWireMessage {
                    role: match m.role {
                        Role::System => "system".to_string(),
                        Role::User => "user".to_string(),
                    },
                    content: m.content.clone(),
                })
                .collect(),
            max_new_tokens: request.max_new_tokens,
            temperature: if request.greedy { 0.0 } else { 1.0 },
        }
    }
}

// ---- Service clients -------------------------------------------------------

pub struct HttpEmbedder {
    client: HttpClient,
    identity: String,
}

impl HttpEmbedder {
    /// `identity` defaults to the endpoint URL; supply one explicitly when an
    /// endpoint moves but serves the same model, so existing indexes stay
    /// valid.
    pub fn new(client: HttpClient, identity: Option<String>) -> HttpEmbedder {
        let identity = identity.unwrap_or_else(|| format!("http:{}", client.base_url()));
        HttpEmbedder { client, identity }
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        validate_embed_request(texts)?;
        let request = EmbedWireRequest {
            texts: texts.to_vec(),
        };
        let response: EmbedWireResponse = self.client.post_json("embedder", "/v1/embed", &request)?;
        if response.vectors.len() != texts.len() {
            return Err(Error::Service {
                service: "embedder",
                retryable: false,
                message: format!(
                    "sent {} texts, received {} vectors",
                    texts.len(),
                    response.vectors.len()
                ),
            });
        }
        let mut out = Vec::with_capacity(response.vectors.len());
        for values in response.vectors {
            if values.len() != response.dims {
                return Err(Error::Dims {
                    expected: response.dims,
                    got: values.len(),
                });
            }
            let vector = EmbeddingVector { values };
            vector.ensure_finite("embedder")?;
            out.push(vector);
        }
        Ok(out)
    }

    fn identity(&self) -> String {
        self.identity.clone()
    }
}

pub struct HttpReranker {
    client: HttpClient,
}

impl HttpReranker {
    pub fn new(client: HttpClient) -> HttpReranker {
        HttpReranker { client }
    }
}

impl Reranker for HttpReranker {
    fn rerank(&self, query: &str, candidates: &[Passage]) -> Result<Vec<RerankScore>> {
        validate_rerank_request(query, candidates)?;
        let request = RerankWireRequest {
            query: query.to_string(),
            documents: candidates
                .iter()
                .map(|p| RerankWireDocument {
                    id: p.passage_id.clone(),
                    text: p.embed_text(),
                })
                .collect(),
        };
        let response: RerankWireResponse =
            self.client.post_json("reranker", "/v1/rerank", &request)?;
        // Align by id: the service must score every candidate exactly once.
        let mut by_id: HashMap<&str, f32> = HashMap::with_capacity(response.scores.len());
        for entry in &response.scores {
            if by_id.insert(entry.id.as_str(), entry.score).is_some() {
                return Err(Error::Service {
                    service: "reranker",
                    retryable: false,
                    message: format!("duplicate score for candidate {:?}", entry.id),
                });
            }
        }
        let mut out = Vec::with_capacity(candidates.len());
        for passage in candidates {
            let score = by_id.remove(passage.passage_id.as_str()).ok_or_else(|| {
                Error::Service {
                    service: "reranker",
                    retryable: false,
                    message: format!("no score returned for candidate {:?}", passage.passage_id),
                }
            })?;
            if !score.is_finite() {
                return Err(Error::Service {
                    service: "reranker",
                    retryable: false,
                    message: format!("non-finite score for candidate {:?}", passage.passage_id),
                });
            }
            out.push(RerankScore {
                passage_id: passage.passage_id.clone(),
                score,
            });
        }
        Ok(out)
    }

    fn identity(&self) -> String {
        format!("http:{}", self.client.base_url())
    }
}

pub struct HttpGenerator {
    client: HttpClient,
}

impl HttpGenerator {
    pub fn new(client: HttpClient) -> HttpGenerator {
        HttpGenerator { client }
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, request: &ChatRequest) -> Result<String> {
        validate_chat_request(request)?;
        let wire = ChatWireRequest::from_chat(request);
        let response: ChatWireResponse = self.client.post_json("generator", "/v1/chat", &wire)?;
        Ok(response.text)
    }

    fn identity(&self) -> String {
        format!("http:{}", self.client.base_url())
    }
}

pub struct HttpTranslator {
    client: HttpClient,
}

impl HttpTranslator {
    pub fn new(client: HttpClient) -> HttpTranslator {
        HttpTranslator { client }
    }
}

impl Translator for HttpTranslator {
    fn translate(
        &self,
        text: &str,
        source: LanguageCode,
        target: LanguageCode,
    ) -> Result<String> {
        validate_translate_request(text, source, target)?;
        let request = TranslateWireRequest {
            text: text.to_string(),
            source: source.as_str().to_string(),
            target: target.as_str().to_string(),
        };
        let response: TranslateWireResponse =
            self.client.post_json("translator", "/v1/translate", &request)?;
        Ok(response.text)
    }

    fn identity(&self) -> String {
        format!("http:{}", self.client.base_url())
    }
}

pub struct HttpIdentifier {
    client: HttpClient,
}

impl HttpIdentifier {
    pub fn new(client: HttpClient) -> HttpIdentifier {
        HttpIdentifier { client }
    }
}

impl LanguageIdService for HttpIdentifier {
    fn identify(&self, text: &str) -> Result<LangVerdict> {
        let request = IdentifyWireRequest {
            text: text.to_string(),
        };
        let response: IdentifyWireResponse =
            self.client.post_json("identifier", "/v1/identify", &request)?;
        let lang = if response.lang == "unknown" {
            None
        } else {
            Some(response.lang.parse().map_err(
                |e: mrag_core::lang::UnknownLanguage| Error::Service {
                    service: "identifier",
                    retryable: false,
                    message: e.to_string(),
                },
            )?)
        };
        Ok(LangVerdict {
            lang,
            confidence: response.confidence,
            method: IdMethod::External,
        })
    }

    fn identity(&self) -> String {
        format!("http:{}", self.client.base_url())
    }
}
