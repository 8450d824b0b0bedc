//! Completion backends: a uniform handle over an HTTP client, a replay
//! fixture or any custom [`Completer`], fronted by a persistent cache.
//!
//! Every request has a canonical JSON form (sorted keys, shortest round-trip
//! float text) whose SHA-256 digest is its cache key. A handle consults the
//! cache first and only reaches the completer on a miss.

mod cache;
mod http;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{read_records, CacheError, ResponseCache, VerifyReport};
pub use http::{HttpCompleter, RetryPolicy, Secret};

/// Sampling parameters shared by every request of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

impl RequestParams {
    pub fn new(temperature: f64, max_tokens: u32) -> Self {
        Self {
            temperature,
            max_tokens,
            stop: None,
        }
    }

    pub fn with_stop<S: Into<String>>(mut self, stop: impl IntoIterator<Item = S>) -> Self {
        self.stop = Some(stop.into_iter().map(Into::into).collect());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Option<Vec<String>>,
}

// Field order is the sorted key order of the canonical form.
#[derive(Serialize)]
struct Canonical<'a> {
    max_tokens: u32,
    model_id: &'a str,
    prompt: &'a str,
    stop: Option<&'a [String]>,
    temperature: f64,
}

impl CompletionRequest {
    pub fn new(
        model_id: impl Into<String>,
        prompt: impl Into<String>,
        params: &RequestParams,
    ) -> Result<Self, BackendError> {
        if !params.temperature.is_finite() || params.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be finite and nonnegative, got {}",
                params.temperature
            )));
        }
        if params.max_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(Self {
            model_id: model_id.into(),
            prompt: prompt.into(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            stop: params.stop.clone(),
        })
    }

    /// Canonical serialization: keys sorted, floats in shortest round-trip form.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&Canonical {
            max_tokens: self.max_tokens,
            model_id: &self.model_id,
            prompt: &self.prompt,
            stop: self.stop.as_deref(),
            temperature: self.temperature,
        })
        .expect("canonical request serializes")
    }

    /// 64-hex SHA-256 of [`Self::canonical_json`].
    pub fn cache_key(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub cache_key: String,
    pub backend_name: String,
    pub template_version: String,
    pub timestamp: DateTime<Utc>,
    pub request: CompletionRequest,
    pub completion: String,
}

impl CompletionRecord {
    pub fn new(
        request: CompletionRequest,
        completion: impl Into<String>,
        backend_name: impl Into<String>,
        template_version: impl Into<String>,
    ) -> Self {
        Self {
            cache_key: request.cache_key(),
            backend_name: backend_name.into(),
            template_version: template_version.into(),
            timestamp: Utc::now().trunc_subsecs(3),
            request,
            completion: completion.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP status {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        body: String,
        attempts: u32,
    },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("malformed response body: {0}")]
    MalformedResponse(String),
    #[error("replay fixture has no completion for request {key}")]
    ReplayMiss { key: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend `{0}` is already registered")]
    DuplicateName(String),
    #[error("backend `{0}` is not registered")]
    UnknownBackend(String),
    #[error("secret environment variable {0} is not set")]
    MissingSecret(String),
    #[error("endpoint environment variable {0} is not set")]
    MissingEndpoint(String),
    #[error("invalid endpoint `{0}`: expected an http(s) URL")]
    InvalidEndpoint(String),
    #[error("replay fixture {path}:{line}: {message}")]
    Fixture {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Something that turns a request into completion text.
pub trait Completer: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

impl<F> Completer for F
where
    F: Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self(request)
    }
}

#[derive(Deserialize)]
struct FixtureLine {
    cache_key: String,
    completion: String,
}

#[derive(Serialize)]
struct FixtureLineOut<'a> {
    cache_key: &'a str,
    completion: &'a str,
}

/// Serves recorded completions by request digest. Never touches the network.
#[derive(Debug, Clone, Default)]
pub struct ReplayCompleter {
    completions: HashMap<String, String>,
}

impl ReplayCompleter {
    pub fn new(completions: HashMap<String, String>) -> Self {
        Self { completions }
    }

    /// Loads `{"cache_key", "completion"}` lines. Cache files load too.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path).map_err(|e| BackendError::Fixture {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        let mut completions = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureLine =
                serde_json::from_str(line).map_err(|e| BackendError::Fixture {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: e.to_string(),
                })?;
            completions.insert(entry.cache_key, entry.completion);
        }
        Ok(Self { completions })
    }

    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }
}

impl Completer for ReplayCompleter {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let key = request.cache_key();
        self.completions
            .get(&key)
            .cloned()
            .ok_or(BackendError::ReplayMiss { key })
    }
}

/// Writes a replay fixture, sorted by key so the file is stable.
pub fn write_replay_fixture<'a>(
    path: &Path,
    entries: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> std::io::Result<()> {
    let mut entries: Vec<_> = entries.into_iter().collect();
    entries.sort();
    entries.dedup_by(|a, b| a.0 == b.0);
    let mut file = fs::File::create(path)?;
    for (cache_key, completion) in entries {
        let line = serde_json::to_string(&FixtureLineOut {
            cache_key,
            completion,
        })
        .expect("fixture line serializes");
        writeln!(file, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BackendStats {
    pub wire_calls: u64,
    pub cache_hits: u64,
    pub failures: u64,
}

/// A registered backend: completer, model id and optional cache.
#[derive(Clone)]
pub struct Backend {
    name: String,
    model_id: String,
    completer: Arc<dyn Completer>,
    cache: Option<Arc<ResponseCache>>,
    stats: Arc<Counters>,
}

#[derive(Default)]
struct Counters {
    wire_calls: AtomicU64,
    cache_hits: AtomicU64,
    failures: AtomicU64,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend")
            .field("name", &self.name)
            .field("model_id", &self.model_id)
            .field("cache", &self.cache.as_ref().map(|c| c.path().to_path_buf()))
            .finish()
    }
}

impl Backend {
    pub fn new(
        name: impl Into<String>,
        model_id: impl Into<String>,
        completer: Arc<dyn Completer>,
        cache: Option<Arc<ResponseCache>>,
    ) -> Self {
        Self {
            name: name.into(),
            model_id: model_id.into(),
            completer,
            cache,
            stats: Arc::default(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_deref()
    }

    pub fn request(&self, prompt: &str, params: &RequestParams) -> Result<CompletionRequest, BackendError> {
        CompletionRequest::new(&self.model_id, prompt, params)
    }

    /// Whether `request` would be served without reaching the completer.
    pub fn is_cached(&self, request: &CompletionRequest) -> bool {
        self.cache
            .as_ref()
            .is_some_and(|c| c.contains(&request.cache_key()))
    }

    /// Serves from cache when possible, else performs one completer call and persists it.
    pub fn complete(
        &self,
        request: CompletionRequest,
        template_version: &str,
    ) -> Result<CompletionRecord, BackendError> {
        if let Some(cache) = &self.cache {
            if let Some(rec) = cache.get(&request.cache_key()) {
                self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(rec);
            }
        }
        self.stats.wire_calls.fetch_add(1, Ordering::Relaxed);
        let completion = match self.completer.complete(&request) {
            Ok(text) => text,
            Err(e) => {
                self.stats.failures.fetch_add(1, Ordering::Relaxed);
                return Err(e);
            }
        };
        let record = CompletionRecord::new(request, completion, &self.name, template_version);
        if let Some(cache) = &self.cache {
            cache.append(&record)?;
        }
        Ok(record)
    }

    pub fn stats(&self) -> BackendStats {
        BackendStats {
            wire_calls: self.stats.wire_calls.load(Ordering::Relaxed),
            cache_hits: self.stats.cache_hits.load(Ordering::Relaxed),
            failures: self.stats.failures.load(Ordering::Relaxed),
        }
    }
}

/// Where an API key comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecretRef {
    None,
    Env(String),
}

impl SecretRef {
    fn resolve(&self) -> Result<Option<Secret>, BackendError> {
        match self {
            SecretRef::None => Ok(None),
            SecretRef::Env(var) => std::env::var(var)
                .ok()
                .filter(|v| !v.is_empty())
                .map(|v| Some(Secret::new(v)))
                .ok_or_else(|| BackendError::MissingSecret(var.clone())),
        }
    }
}

pub enum BackendSpec {
    Http {
        endpoint: String,
        model_id: String,
        auth: SecretRef,
        retry: RetryPolicy,
    },
    Replay {
        fixture: PathBuf,
        model_id: String,
    },
    Custom {
        model_id: String,
        completer: Arc<dyn Completer>,
    },
}

/// `RASO_BACKEND_<NAME>_<SUFFIX>` with the name upper-cased and non-alphanumerics as `_`.
pub fn env_var_name(backend: &str, suffix: &str) -> String {
    let name: String = backend
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("RASO_BACKEND_{name}_{suffix}")
}

impl BackendSpec {
    /// HTTP backend from `RASO_BACKEND_<NAME>_URL` and `RASO_BACKEND_<NAME>_KEY`.
    pub fn from_env(name: &str, model_id: &str) -> Result<Self, BackendError> {
        let url_var = env_var_name(name, "URL");
        let endpoint =
            std::env::var(&url_var).map_err(|_| BackendError::MissingEndpoint(url_var))?;
        Ok(BackendSpec::Http {
            endpoint,
            model_id: model_id.into(),
            auth: SecretRef::Env(env_var_name(name, "KEY")),
            retry: RetryPolicy::default(),
        })
    }
}

/// Named backends in registration order.
#[derive(Debug, Default)]
pub struct BackendRegistry {
    cache_dir: Option<PathBuf>,
    backends: Vec<Backend>,
}

impl BackendRegistry {
    /// A registry whose backends cache to `<cache_dir>/<name>.jsonl`.
    pub fn with_cache_dir(cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            cache_dir: Some(cache_dir.into()),
            backends: Vec::new(),
        }
    }

    /// A registry whose backends do not cache.
    pub fn uncached() -> Self {
        Self::default()
    }

    pub fn cache_path(&self, name: &str) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(format!("{name}.jsonl")))
    }

    pub fn register(&mut self, name: &str, spec: BackendSpec) -> Result<Backend, BackendError> {
        if self.get(name).is_some() {
            return Err(BackendError::DuplicateName(name.into()));
        }
        let (model_id, completer): (String, Arc<dyn Completer>) = match spec {
            BackendSpec::Http {
                endpoint,
                model_id,
                auth,
                retry,
            } => {
                if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
                    return Err(BackendError::InvalidEndpoint(endpoint));
                }
                let key = auth.resolve()?;
                (model_id, Arc::new(HttpCompleter::new(endpoint, key, retry)))
            }
            BackendSpec::Replay { fixture, model_id } => {
                (model_id, Arc::new(ReplayCompleter::from_file(&fixture)?))
            }
            BackendSpec::Custom {
                model_id,
                completer,
            } => (model_id, completer),
        };
        let cache = match self.cache_path(name) {
            Some(path) => Some(Arc::new(ResponseCache::open(path)?)),
            None => None,
        };
        let backend = Backend::new(name, model_id, completer, cache);
        self.backends.push(backend.clone());
        Ok(backend)
    }

    pub fn get(&self, name: &str) -> Option<&Backend> {
        self.backends.iter().find(|b| b.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Backend, BackendError> {
        self.get(name)
            .ok_or_else(|| BackendError::UnknownBackend(name.into()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Backend> {
        self.backends.iter()
    }

    pub fn names(&self) -> Vec<&str> {
        self.backends.iter().map(|b| b.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.backends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backends.is_empty()
    }
}
