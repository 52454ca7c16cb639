//! Remote chat-completion backend over HTTP.
//!
//! Speaks the widely adopted chat schema (message list in, choice list out)
//! so hosted APIs and locally served fine-tuned models are both reachable.
//! Transient failures (transport errors, 429, 5xx) are retried with
//! exponential backoff; concurrency is bounded by an in-flight cap and an
//! optional per-minute request budget.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendResponse, ChatBackend, ChatRequest, TokenUsage};

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    /// Model or adapter name sent with every request.
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Retries after the first attempt on transient errors.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_in_flight: usize,
    pub requests_per_minute: Option<u32>,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            endpoint: String::new(),
            model: String::new(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_in_flight: 8,
            requests_per_minute: None,
        }
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop: Option<&'a [String]>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().unwrap();
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

/// Sliding-window request budget.
struct MinuteBudget {
    limit: u32,
    window: Mutex<VecDeque<Instant>>,
}

impl MinuteBudget {
    fn new(limit: u32) -> Self {
        MinuteBudget {
            limit: limit.max(1),
            window: Mutex::new(VecDeque::new()),
        }
    }

    fn admit(&self) {
        loop {
            let wait = {
                let mut window = self.window.lock().unwrap();
                let cutoff = Instant::now() - Duration::from_secs(60);
                while window.front().is_some_and(|t| *t < cutoff) {
                    window.pop_front();
                }
                if window.len() < self.limit as usize {
                    window.push_back(Instant::now());
                    return;
                }
                // oldest entry leaves the window at front + 60s
                *window.front().unwrap() + Duration::from_secs(60) - Instant::now()
            };
            if !wait.is_zero() {
                std::thread::sleep(wait);
            }
        }
    }
}

pub struct HttpBackend {
    id: String,
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    in_flight: Semaphore,
    budget: Option<MinuteBudget>,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        if config.endpoint.is_empty() {
            return Err(BackendError::Config("endpoint URL is empty".to_string()));
        }
        if config.model.is_empty() {
            return Err(BackendError::Config("model name is empty".to_string()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(HttpBackend {
            id: format!("http:{}", config.model),
            in_flight: Semaphore::new(config.max_in_flight),
            budget: config.requests_per_minute.map(MinuteBudget::new),
            client,
            config,
        })
    }

    fn attempt(&self, req: &ChatRequest) -> Result<BackendResponse, AttemptError> {
        if let Some(budget) = &self.budget {
            budget.admit();
        }
        let wire = WireRequest {
            model: &self.config.model,
            messages: vec![WireMessage {
                role: "user",
                content: &req.prompt,
            }],
            temperature: req.decode.temperature,
            max_tokens: req.decode.max_tokens,
            stop: if req.decode.stop.is_empty() {
                None
            } else {
                Some(&req.decode.stop)
            },
        };
        let start = Instant::now();
        let mut builder = self.client.post(&self.config.endpoint).json(&wire);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout
            } else {
                AttemptError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| AttemptError::Transport(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(AttemptError::Transient {
                status: status.as_u16(),
                body,
            });
        }
        if !status.is_success() {
            return Err(AttemptError::Provider {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: WireResponse = serde_json::from_str(&body).map_err(|e| {
            AttemptError::Provider {
                status: status.as_u16(),
                body: format!("unparseable response body ({e}): {body}"),
            }
        })?;
        let text = parsed
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .unwrap_or_default();
        Ok(BackendResponse {
            text,
            latency: start.elapsed(),
            token_usage: parsed.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
            backend_id: self.id.clone(),
        })
    }
}

enum AttemptError {
    Transport(String),
    Timeout,
    Transient { status: u16, body: String },
    Provider { status: u16, body: String },
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, req: &ChatRequest) -> Result<BackendResponse, BackendError> {
        let _permit = self.in_flight.acquire();
        let attempts = self.config.max_retries + 1;
        let mut backoff = self.config.initial_backoff;
        let mut last_message = String::new();
        for attempt in 0..attempts {
            match self.attempt(req) {
                Ok(response) => return Ok(response),
                Err(AttemptError::Provider { status, body }) => {
                    return Err(BackendError::Provider {
                        backend_id: self.id.clone(),
                        status,
                        body,
                    });
                }
                Err(AttemptError::Timeout) => {
                    last_message = format!("timed out after {:?}", self.config.timeout);
                }
                Err(AttemptError::Transport(message)) => last_message = message,
                Err(AttemptError::Transient { status, body }) => {
                    last_message = format!("status {status}: {body}");
                }
            }
            if attempt + 1 < attempts {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
        if last_message.starts_with("timed out") {
            return Err(BackendError::Timeout {
                backend_id: self.id.clone(),
                timeout: self.config.timeout,
            });
        }
        Err(BackendError::Unavailable {
            backend_id: self.id.clone(),
            stage: req.stage,
            attempts,
            message: last_message,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{DecodeParams, RequestMeta};
    use crate::prompts::Stage;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Minimal one-thread HTTP server answering each connection from a script
    /// of (status, body) pairs.
    fn spawn_server(script: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let hits_clone = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in script {
                let (stream, _) = listener.accept().unwrap();
                hits_clone.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream);
                let mut content_length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut request_body = vec![0u8; content_length];
                reader.read_exact(&mut request_body).unwrap();
                let mut stream = reader.into_inner();
                let reason = if status == 200 { "OK" } else { "Error" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/v1/chat/completions"), hits)
    }

    fn ok_body(content: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 5}
        })
        .to_string()
    }

    fn request() -> ChatRequest {
        ChatRequest {
            prompt: "list relations".to_string(),
            stage: Stage::RelationExtraction,
            decode: DecodeParams::default(),
            meta: RequestMeta::default(),
        }
    }

    fn config(endpoint: String) -> HttpBackendConfig {
        HttpBackendConfig {
            endpoint,
            model: "test-model".to_string(),
            api_key: Some("k".to_string()),
            timeout: Duration::from_secs(5),
            max_retries: 2,
            initial_backoff: Duration::from_millis(1),
            max_in_flight: 2,
            requests_per_minute: None,
        }
    }

    #[test]
    fn returns_choice_content_and_usage() {
        let (endpoint, _) = spawn_server(vec![(200, ok_body("country\nfather"))]);
        let backend = HttpBackend::new(config(endpoint)).unwrap();
        let resp = backend.chat(&request()).unwrap();
        assert_eq!(resp.text, "country\nfather");
        assert_eq!(
            resp.token_usage,
            Some(TokenUsage {
                prompt_tokens: 10,
                completion_tokens: 5
            })
        );
    }

    #[test]
    fn retries_transient_500_then_succeeds() {
        let (endpoint, hits) = spawn_server(vec![
            (500, "{\"error\": \"boom\"}".to_string()),
            (200, ok_body("ok")),
        ]);
        let backend = HttpBackend::new(config(endpoint)).unwrap();
        let resp = backend.chat(&request()).unwrap();
        assert_eq!(resp.text, "ok");
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn non_transient_4xx_is_provider_error_without_retry() {
        let (endpoint, hits) = spawn_server(vec![(400, "{\"error\": \"bad\"}".to_string())]);
        let backend = HttpBackend::new(config(endpoint)).unwrap();
        let err = backend.chat(&request()).unwrap_err();
        match err {
            BackendError::Provider { status, body, .. } => {
                assert_eq!(status, 400);
                assert!(body.contains("bad"));
            }
            other => panic!("unexpected: {other}"),
        }
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn exhausted_retries_reports_unavailable() {
        let (endpoint, hits) = spawn_server(vec![
            (503, "x".to_string()),
            (503, "x".to_string()),
            (503, "x".to_string()),
        ]);
        let backend = HttpBackend::new(config(endpoint)).unwrap();
        let err = backend.chat(&request()).unwrap_err();
        match err {
            BackendError::Unavailable { attempts, .. } => assert_eq!(attempts, 3),
            other => panic!("unexpected: {other}"),
        }
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn empty_endpoint_is_config_error() {
        match HttpBackend::new(HttpBackendConfig::default()) {
            Err(BackendError::Config(_)) => {}
            Err(other) => panic!("unexpected error: {other}"),
            Ok(_) => panic!("expected config error"),
        }
    }
}
