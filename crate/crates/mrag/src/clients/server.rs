//! A local HTTP server exposing the mock services over the real wire
//! contract, so the HTTP clients can be exercised end to end without any
//! external model host. The handlers call the same trait implementations the
//! in-process path uses, which keeps the two routes byte-identical.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use mrag_core::chunk::Passage;
use mrag_core::lang::LanguageCode;
use mrag_core::prompt::{ChatMessage, ChatRequest, Role};
use serde::Serialize;
use tiny_http::{Header, Response, Server};

use crate::error::{Error, Result};

use super::http::{
    ChatWireRequest, ChatWireResponse, EmbedWireRequest, EmbedWireResponse, IdentifyWireRequest,
    IdentifyWireResponse, RerankWireRequest, RerankWireResponse, RerankWireScore,
    TranslateWireRequest, TranslateWireResponse,
};
use super::mock::{BuiltinIdentifier, MockEmbedder, MockGenerator, MockReranker, MockTranslator};
use super::{Embedder, Generator, LanguageIdService, Reranker, Translator};

/// The mock implementations served over HTTP.
#[derive(Default)]
pub struct MockServices {
    pub embedder: MockEmbedder,
    pub reranker: MockReranker,
    pub generator: MockGenerator,
    pub translator: MockTranslator,
    pub identifier: BuiltinIdentifier,
}

/// A running mock service host. Dropping it stops the server.
pub struct MockServer {
    base_url: String,
    server: Arc<Server>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Bind `addr` (use port 0 for an ephemeral port) and serve requests on a
    /// background thread.
    pub fn spawn(services: MockServices, addr: &str) -> Result<MockServer> {
        let server = Server::http(addr).map_err(|e| {
            Error::Config(format!("cannot bind mock server on {addr}: {e}"))
        })?;
        let server = Arc::new(server);
        let bound = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Config("mock server has no IP listen address".into()))?;
        let base_url = format!("http://{bound}");
        let stop = Arc::new(AtomicBool::new(false));

        let thread_server = Arc::clone(&server);
        let thread_stop = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            while !thread_stop.load(Ordering::SeqCst) {
                match thread_server.recv() {
                    Ok(request) => handle_request(&services, request),
                    Err(_) => break,
                }
            }
        });

        Ok(MockServer {
            base_url,
            server,
            stop,
            handle: Some(handle),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Stop accepting requests and join the worker thread.
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn json_header() -> Header {
    Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header is valid")
}

fn respond_json<T: Serialize>(request: tiny_http::Request, status: u16, body: &T) {
    let text = serde_json::to_string(body).unwrap_or_else(|_| "{}".to_string());
    let response = Response::from_string(text)
        .with_status_code(status)
        .with_header(json_header());
    let _ = request.respond(response);
}

#[derive(Serialize)]
struct WireError {
    error: String,
}

fn respond_error(request: tiny_http::Request, status: u16, message: String) {
    respond_json(request, status, &WireError { error: message });
}

/// Map a service error to a wire status: invalid requests are the caller's
/// fault (400), everything else is the service's (500).
fn error_status(err: &Error) -> u16 {
    match err {
        Error::InvalidRequest { .. } => 400,
        _ => 500,
    }
}

fn handle_request(services: &MockServices, mut request: tiny_http::Request) {
    if request.method() != &tiny_http::Method::Post {
        respond_error(request, 405, "only POST is supported".into());
        return;
    }

    let mut body = String::new();
    if let Err(e) = request.as_reader().read_to_string(&mut body) {
        respond_error(request, 400, format!("unreadable body: {e}"));
        return;
    }

    let url = request.url().to_string();
    match url.as_str() {
        "/v1/embed" => {
            let wire: EmbedWireRequest = match serde_json::from_str(&body) {
                Ok(req) => req,
                Err(e) => return respond_error(request, 400, format!("invalid request: {e}")),
            };
            match services.embedder.embed(&wire.texts) {
                Ok(vectors) => {
                    let dims = vectors.first().map(|v| v.dims()).unwrap_or(0);
                    let response = EmbedWireResponse {
                        vectors: vectors.into_iter().map(|v| v.values).collect(),
                        dims,
                    };
                    respond_json(request, 200, &response);
                }
                Err(e) => respond_error(request, error_status(&e), e.to_string()),
            }
        }
        "/v1/rerank" => {
            let wire: RerankWireRequest = match serde_json::from_str(&body) {
                Ok(req) => req,
                Err(e) => return respond_error(request, 400, format!("invalid request: {e}")),
            };
            let candidates: Vec<Passage> = wire
                .documents
                .iter()
                .map(|doc| Passage {
                    passage_id: doc.id.clone(),
                    doc_id: doc.id.clone(),
                    title: String::new(),
                    text: doc.text.clone(),
                    lang: LanguageCode::En,
                    position: 0,
                })
                .collect();
            match services.reranker.rerank(&wire.query, &candidates) {
                Ok(scores) => {
                    let response = RerankWireResponse {
                        scores: scores
                            .into_iter()
                            .map(|s| RerankWireScore {
                                id: s.passage_id,
                                score: s.score,
                            })
                            .collect(),
                    };
                    respond_json(request, 200, &response);
                }
                Err(e) => respond_error(request, error_status(&e), e.to_string()),
            }
        }
        "/v1/chat" => {
            let wire: ChatWireRequest = match serde_json::from_str(&body) {
                Ok(req) => req,
                Err(e) => return respond_error(request, 400, format!("invalid request: {e}")),
            };
            let mut messages = Vec::with_capacity(wire.messages.len());
            for message in &wire.messages {
                let role = match message.role.as_str() {
                    "system" => Role::System,
                    "user" => Role::User,
                    other => {
                        return respond_error(request, 400, format!("unknown role {other:?}"))
                    }
                };
                messages.push(ChatMessage {
                    role,
                    content: message.content.clone(),
                });
            }
            let chat = ChatRequest {
                messages,
                max_new_tokens: wire.max_new_tokens,
                greedy: wire.temperature == 0.0,
            };
            match services.generator.generate(&chat) {
                Ok(text) => respond_json(request, 200, &ChatWireResponse { text }),
                Err(e) => respond_error(request, error_status(&e), e.to_string()),
            }
        }
        "/v1/translate" => {
            let wire: TranslateWireRequest = match serde_json::from_str(&body) {
                Ok(req) => req,
                Err(e) => return respond_error(request, 400, format!("invalid request: {e}")),
            };
            let parse = |code: &str| -> std::result::Result<LanguageCode, String> {
                code.parse()
                    .map_err(|e: mrag_core::lang::UnknownLanguage| e.to_string())
            };
            let (source, target) = match (parse(&wire.source), parse(&wire.target)) {
                (Ok(s), Ok(t)) => (s, t),
                (Err(e), _) | (_, Err(e)) => return respond_error(request, 400, e),
            };
            match services.translator.translate(&wire.text, source, target) {
                Ok(text) => respond_json(request, 200, &TranslateWireResponse { text }),
                Err(e) => respond_error(request, error_status(&e), e.to_string()),
            }
        }
        "/v1/identify" => {
            let wire: IdentifyWireRequest = match serde_json::from_str(&body) {
                Ok(req) => req,
                Err(e) => return respond_error(request, 400, format!("invalid request: {e}")),
            };
            match services.identifier.identify(&wire.text) {
                Ok(verdict) => {
                    let response = IdentifyWireResponse {
                        lang: verdict
                            .lang
                            .map(|l| l.as_str().to_string())
                            .unwrap_or_else(|| "unknown".to_string()),
                        confidence: verdict.confidence,
                    };
                    respond_json(request, 200, &response);
                }
                Err(e) => respond_error(request, error_status(&e), e.to_string()),
            }
        }
        other => respond_error(request, 404, format!("no such endpoint: {other}")),
    }
}
