//! Chat-completion backends with per-stage routing.
//!
//! A [`StageRouting`] binds each extraction stage to a backend, mirroring a
//! deployment where every stage is served by its own fine-tuned adapter.
//! Concrete backends: a remote HTTP chat API ([`http::HttpBackend`]), a
//! gold-answering oracle ([`oracle::OracleBackend`]), a record/replay cache
//! wrapper ([`cache::CachedBackend`]) and scripted backends for tests.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::Stage;

pub mod cache;
pub mod http;
pub mod oracle;

pub use cache::{CacheStore, CachedBackend};
pub use http::{HttpBackend, HttpBackendConfig};
pub use oracle::{oracle_answer, OracleBackend, OracleContext};

/// Decoding parameters; part of the cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        // Extraction is deterministic; single-sample greedy decoding.
        DecodeParams {
            temperature: 0.0,
            max_tokens: 1024,
            stop: Vec::new(),
        }
    }
}

/// Structured request context, used by the oracle backend and recorded in
/// traces. Remote backends see only the prompt text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMeta {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

/// One chat call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt: String,
    pub stage: Stage,
    pub decode: DecodeParams,
    pub meta: RequestMeta,
}

/// Token accounting when the provider reports it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// A completed chat call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
    pub backend_id: String,
}

mod duration_ms {
    use super::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("stage {stage} is not bound to a backend")]
    UnboundStage { stage: Stage },
    #[error("empty prompt for stage {stage}")]
    EmptyPrompt { stage: Stage },
    #[error("backend {backend_id} unavailable for stage {stage} after {attempts} attempts: {message}")]
    Unavailable {
        backend_id: String,
        stage: Stage,
        attempts: u32,
        message: String,
    },
    #[error("provider error from {backend_id} (status {status}): {body}")]
    Provider {
        backend_id: String,
        status: u16,
        body: String,
    },
    #[error("request to {backend_id} timed out after {timeout:?}")]
    Timeout {
        backend_id: String,
        timeout: Duration,
    },
    #[error("replay miss for stage {stage}: no recorded response for this request")]
    ReplayMiss { stage: Stage },
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cache error: {0}")]
    Cache(String),
}

/// A chat-completion backend. Implementations must be safe for concurrent
/// calls.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn chat(&self, req: &ChatRequest) -> Result<BackendResponse, BackendError>;
}

/// Per-stage backend bindings. All three stages are always bound, possibly to
/// the same backend.
#[derive(Clone)]
pub struct StageRouting {
    relation: Arc<dyn ChatBackend>,
    head: Arc<dyn ChatBackend>,
    fact: Arc<dyn ChatBackend>,
}

impl fmt::Debug for StageRouting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StageRouting")
            .field("relation", &self.relation.id())
            .field("head", &self.head.id())
            .field("fact", &self.fact.id())
            .finish()
    }
}

impl StageRouting {
    pub fn new(
        relation: Arc<dyn ChatBackend>,
        head: Arc<dyn ChatBackend>,
        fact: Arc<dyn ChatBackend>,
    ) -> Self {
        StageRouting {
            relation,
            head,
            fact,
        }
    }

    /// Bind all three stages to one backend.
    pub fn uniform(backend: Arc<dyn ChatBackend>) -> Self {
        StageRouting {
            relation: backend.clone(),
            head: backend.clone(),
            fact: backend,
        }
    }

    pub fn backend_for(&self, stage: Stage) -> &Arc<dyn ChatBackend> {
        match stage {
            Stage::RelationExtraction => &self.relation,
            Stage::HeadExtraction => &self.head,
            Stage::FactExtraction => &self.fact,
        }
    }

    /// Route a request to its stage's backend.
    pub fn chat(&self, req: &ChatRequest) -> Result<BackendResponse, BackendError> {
        if req.prompt.is_empty() {
            return Err(BackendError::EmptyPrompt { stage: req.stage });
        }
        if req.decode.max_tokens == 0 {
            return Err(BackendError::Config("max_tokens must be >= 1".to_string()));
        }
        self.backend_for(req.stage).chat(req)
    }
}

/// FIFO scripted backend: returns queued responses in order.
pub struct ScriptBackend {
    id: String,
    responses: Mutex<VecDeque<String>>,
}

impl ScriptBackend {
    pub fn new(responses: impl IntoIterator<Item = impl Into<String>>) -> Self {
        ScriptBackend {
            id: "script".to_string(),
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().unwrap().len()
    }
}

impl ChatBackend for ScriptBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, req: &ChatRequest) -> Result<BackendResponse, BackendError> {
        let text = self.responses.lock().unwrap().pop_front().ok_or_else(|| {
            BackendError::Unavailable {
                backend_id: self.id.clone(),
                stage: req.stage,
                attempts: 1,
                message: "script exhausted".to_string(),
            }
        })?;
        Ok(BackendResponse {
            text,
            latency: Duration::ZERO,
            token_usage: None,
            backend_id: self.id.clone(),
        })
    }
}

/// Backend answering through a closure; the workhorse for scripted tests.
pub struct FnBackend<F> {
    id: String,
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest) -> String + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnBackend { id: id.into(), f }
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> String + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, req: &ChatRequest) -> Result<BackendResponse, BackendError> {
        Ok(BackendResponse {
            text: (self.f)(req),
            latency: Duration::ZERO,
            token_usage: None,
            backend_id: self.id.clone(),
        })
    }
}
