//! Content-addressed response cache and the record/replay backend wrapper.
//!
//! Cache key = SHA-256 digest of (prompt, stage, decode); the value is the
//! response JSON plus enough request context to audit a cache entry. A
//! corrupt entry is treated as a miss with a warning, falling through to the
//! inner backend when one is present.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::prompts::Stage;

use super::{BackendError, BackendResponse, ChatBackend, ChatRequest, DecodeParams, TokenUsage};

/// One persisted response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub stage: Stage,
    pub prompt: String,
    pub decode: DecodeParams,
    pub text: String,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
}

/// A directory of content-addressed response files.
#[derive(Debug, Clone)]
pub struct CacheStore {
    dir: PathBuf,
}

impl CacheStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, BackendError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)
            .map_err(|e| BackendError::Cache(format!("create {}: {e}", dir.display())))?;
        Ok(CacheStore { dir })
    }

    /// Digest of prompt + stage + decode parameters.
    pub fn key(req: &ChatRequest) -> String {
        let mut hasher = Sha256::new();
        hasher.update(req.prompt.as_bytes());
        hasher.update([0]);
        hasher.update(req.stage.as_str().as_bytes());
        hasher.update([0]);
        hasher.update(
            serde_json::to_vec(&req.decode).expect("decode params serialize"),
        );
        hex::encode(hasher.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let path = self.path(key);
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(entry) => Some(entry),
            Err(e) => {
                log::warn!("corrupt cache entry {}: {e}; treating as miss", path.display());
                None
            }
        }
    }

    pub fn put(&self, key: &str, entry: &CacheEntry) -> Result<(), BackendError> {
        let path = self.path(key);
        let bytes = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
        std::fs::write(&path, bytes)
            .map_err(|e| BackendError::Cache(format!("write {}: {e}", path.display())))
    }

    pub fn len(&self) -> usize {
        std::fs::read_dir(&self.dir)
            .map(|entries| entries.filter_map(Result::ok).count())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Serves recorded responses; on a miss, delegates to the inner backend and
/// records, or fails as a replay miss when no inner backend is configured.
pub struct CachedBackend {
    id: String,
    store: CacheStore,
    inner: Option<Arc<dyn ChatBackend>>,
    // writes serialized; reads are plain file reads
    write_lock: Mutex<()>,
}

impl CachedBackend {
    /// Record-and-replay: first call goes to `inner` and is persisted.
    pub fn recording(store: CacheStore, inner: Arc<dyn ChatBackend>) -> Self {
        CachedBackend {
            id: format!("cached:{}", inner.id()),
            store,
            inner: Some(inner),
            write_lock: Mutex::new(()),
        }
    }

    /// Replay-only: a miss is an error, never a network call.
    pub fn replay(store: CacheStore) -> Self {
        CachedBackend {
            id: "replay".to_string(),
            store,
            inner: None,
            write_lock: Mutex::new(()),
        }
    }
}

impl ChatBackend for CachedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, req: &ChatRequest) -> Result<BackendResponse, BackendError> {
        let key = CacheStore::key(req);
        if let Some(entry) = self.store.get(&key) {
            return Ok(BackendResponse {
                text: entry.text,
                latency: Duration::ZERO,
                token_usage: entry.token_usage,
                backend_id: self.id.clone(),
            });
        }
        let Some(inner) = &self.inner else {
            return Err(BackendError::ReplayMiss { stage: req.stage });
        };
        let response = inner.chat(req)?;
        let entry = CacheEntry {
            stage: req.stage,
            prompt: req.prompt.clone(),
            decode: req.decode.clone(),
            text: response.text.clone(),
            backend_id: response.backend_id.clone(),
            token_usage: response.token_usage,
        };
        let _guard = self.write_lock.lock().unwrap();
        self.store.put(&key, &entry)?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{DecodeParams, RequestMeta, ScriptBackend};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn req(prompt: &str, temperature: f64) -> ChatRequest {
        ChatRequest {
            prompt: prompt.to_string(),
            stage: Stage::FactExtraction,
            decode: DecodeParams {
                temperature,
                ..DecodeParams::default()
            },
            meta: RequestMeta::default(),
        }
    }

    struct CountingBackend {
        calls: AtomicUsize,
    }

    impl ChatBackend for CountingBackend {
        fn id(&self) -> &str {
            "counting"
        }
        fn chat(&self, req: &ChatRequest) -> Result<BackendResponse, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(BackendResponse {
                text: format!("echo:{}", req.prompt),
                latency: Duration::ZERO,
                token_usage: None,
                backend_id: "counting".to_string(),
            })
        }
    }

    #[test]
    fn second_identical_request_served_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let inner = Arc::new(CountingBackend {
            calls: AtomicUsize::new(0),
        });
        let backend =
            CachedBackend::recording(CacheStore::open(dir.path()).unwrap(), inner.clone());
        let r = req("hello", 0.0);
        assert_eq!(backend.chat(&r).unwrap().text, "echo:hello");
        assert_eq!(backend.chat(&r).unwrap().text, "echo:hello");
        assert_eq!(inner.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn differing_decode_params_are_distinct_keys() {
        assert_ne!(
            CacheStore::key(&req("hello", 0.0)),
            CacheStore::key(&req("hello", 0.7))
        );
    }

    #[test]
    fn cleared_cache_calls_inner_again() {
        let dir = tempfile::tempdir().unwrap();
        let inner = Arc::new(CountingBackend {
            calls: AtomicUsize::new(0),
        });
        let store = CacheStore::open(dir.path()).unwrap();
        let backend = CachedBackend::recording(store, inner.clone());
        let r = req("hello", 0.0);
        backend.chat(&r).unwrap();
        for entry in std::fs::read_dir(dir.path()).unwrap() {
            std::fs::remove_file(entry.unwrap().path()).unwrap();
        }
        backend.chat(&r).unwrap();
        assert_eq!(inner.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn replay_returns_recorded_byte_identical_and_misses_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let recorder = CachedBackend::recording(
            CacheStore::open(dir.path()).unwrap(),
            Arc::new(ScriptBackend::new(["recorded response\nwith lines"])),
        );
        let r = req("prompt", 0.0);
        recorder.chat(&r).unwrap();

        let replay = CachedBackend::replay(store);
        assert_eq!(replay.chat(&r).unwrap().text, "recorded response\nwith lines");
        let miss = replay.chat(&req("other prompt", 0.0)).unwrap_err();
        assert!(matches!(miss, BackendError::ReplayMiss { .. }));
    }

    #[test]
    fn corrupt_entry_falls_through_to_inner() {
        let dir = tempfile::tempdir().unwrap();
        let inner = Arc::new(CountingBackend {
            calls: AtomicUsize::new(0),
        });
        let store = CacheStore::open(dir.path()).unwrap();
        let backend = CachedBackend::recording(store, inner.clone());
        let r = req("hello", 0.0);
        let key = CacheStore::key(&r);
        std::fs::write(dir.path().join(format!("{key}.json")), b"not json").unwrap();
        assert_eq!(backend.chat(&r).unwrap().text, "echo:hello");
        assert_eq!(inner.calls.load(Ordering::SeqCst), 1);
    }
}
