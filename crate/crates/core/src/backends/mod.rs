//! Clients for translation and paraphrase model services.
//!
//! A [`Backend`] wraps a [`Transport`] (HTTP or in-process mock) with
//! retries, exponential backoff and an optional on-disk response cache.
//!
//! Wire protocol, JSON over HTTP POST to the configured endpoint:
//!
//! | request | body | response |
//! |---|---|---|
//! | translate | `{"text", "src", "tgt"}` | `{"result": "..."}` |
//! | beam translate | translate body + `num_beams`, `num_return_sequences`, `early_stopping` | `{"candidates": [...]}` |
//! | paraphrase | `{"text", "lang", "num_beams", "num_return_sequences", "early_stopping"}` | `{"candidates": [...]}` |
//!
//! Health is a `GET` on `<endpoint>/health`.

mod cache;
mod http;
mod mock;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use url::Url;

pub use cache::ResponseCache;
pub use http::HttpTransport;
pub use mock::{MockBehavior, MockTransport, TAG_CLOSE, TAG_OPEN};

use crate::corpus::Lang;

/// Beam-search knobs forwarded verbatim to paraphrase-capable backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BeamParams {
    pub num_beams: u32,
    pub num_return_sequences: u32,
    pub early_stopping: bool,
}

impl Default for BeamParams {
    fn default() -> Self {
        Self {
            num_beams: 4,
            num_return_sequences: 1,
            early_stopping: true,
        }
    }
}

impl BeamParams {
    pub fn new(num_beams: u32, num_return_sequences: u32, early_stopping: bool) -> Result<Self, BackendError> {
        let params = Self {
            num_beams,
            num_return_sequences,
            early_stopping,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.num_beams == 0 || self.num_return_sequences == 0 {
            return Err(BackendError::Precondition(
                "num_beams and num_return_sequences must be at least 1".into(),
            ));
        }
        if self.num_return_sequences > self.num_beams {
            return Err(BackendError::Precondition(format!(
                "num_return_sequences ({}) exceeds num_beams ({})",
                self.num_return_sequences, self.num_beams
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Translate,
    Paraphrase,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Translate => "translate",
            BackendKind::Paraphrase => "paraphrase",
        })
    }
}

impl FromStr for BackendKind {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "translate" => Ok(BackendKind::Translate),
            "paraphrase" => Ok(BackendKind::Paraphrase),
            other => Err(BackendError::Usage(format!(
                "unknown backend kind {other:?} (expected translate or paraphrase)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub id: String,
    pub kind: BackendKind,
    pub endpoint: Url,
    pub timeout: Duration,
    pub max_retries: u32,
    pub cache_dir: Option<PathBuf>,
    /// Sent as `Authorization: Bearer <token>` when set.
    pub bearer_token: Option<String>,
}

impl BackendConfig {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
    pub const DEFAULT_MAX_RETRIES: u32 = 3;

    pub fn new(id: impl Into<String>, kind: BackendKind, endpoint: &str) -> Result<Self, BackendError> {
        let endpoint = Url::parse(endpoint)
            .map_err(|e| BackendError::Usage(format!("invalid endpoint {endpoint:?}: {e}")))?;
        Ok(Self {
            id: id.into(),
            kind,
            endpoint,
            timeout: Self::DEFAULT_TIMEOUT,
            max_retries: Self::DEFAULT_MAX_RETRIES,
            cache_dir: None,
            bearer_token: None,
        })
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn with_max_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

/// One request in protocol terms.
#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Translate { text: String, src: Lang, tgt: Lang },
    TranslateBeams { text: String, src: Lang, tgt: Lang, params: BeamParams },
    Paraphrase { text: String, lang: Lang, params: BeamParams },
}

impl Request {
    pub fn text(&self) -> &str {
        match self {
            Request::Translate { text, .. }
            | Request::TranslateBeams { text, .. }
            | Request::Paraphrase { text, .. } => text,
        }
    }

    /// JSON request body.
    pub fn body(&self) -> Value {
        match self {
            Request::Translate { text, src, tgt } => json!({ "text": text, "src": src, "tgt": tgt }),
            Request::TranslateBeams { text, src, tgt, params } => json!({
                "text": text,
                "src": src,
                "tgt": tgt,
                "num_beams": params.num_beams,
                "num_return_sequences": params.num_return_sequences,
                "early_stopping": params.early_stopping,
            }),
            Request::Paraphrase { text, lang, params } => json!({
                "text": text,
                "lang": lang,
                "num_beams": params.num_beams,
                "num_return_sequences": params.num_return_sequences,
                "early_stopping": params.early_stopping,
            }),
        }
    }
}

/// Failure reported by a transport for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout,
    Network(String),
    Status { status: u16, body: String },
    /// 2xx response whose body is not JSON.
    Malformed(String),
}

impl TransportFailure {
    fn retryable(&self) -> bool {
        match self {
            TransportFailure::Timeout | TransportFailure::Network(_) => true,
            TransportFailure::Status { status, .. } => *status == 429 || *status >= 500,
            TransportFailure::Malformed(_) => false,
        }
    }
}

impl fmt::Display for TransportFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportFailure::Timeout => f.write_str("request timed out"),
            TransportFailure::Network(msg) => write!(f, "network error: {msg}"),
            TransportFailure::Status { status, body } => write!(f, "HTTP {status}: {body}"),
            TransportFailure::Malformed(msg) => write!(f, "response is not JSON: {msg}"),
        }
    }
}

/// Moves one request to a model service and returns the raw JSON response.
pub trait Transport: Send + Sync {
    fn send(&self, request: &Request) -> Result<Value, TransportFailure>;
    fn health(&self) -> Result<(), TransportFailure>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend {backend}: transport failed after {attempts} attempt(s): {message}")]
    Transport {
        backend: String,
        attempts: u32,
        message: String,
    },
    #[error("backend {backend}: HTTP {status}: {body}")]
    Status { backend: String, status: u16, body: String },
    #[error("backend {backend}: empty result")]
    EmptyResult { backend: String },
    #[error("backend {backend}: malformed response: {message}")]
    Protocol { backend: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("cache: {0}")]
    Cache(String),
}

const BODY_EXCERPT_CHARS: usize = 200;

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT_CHARS).collect()
}

/// Exponential backoff with deterministic jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: f64,
    pub max: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_millis(250),
            factor: 2.0,
            max: Duration::from_secs(8),
        }
    }
}

impl Backoff {
    pub fn none() -> Self {
        Self {
            base: Duration::ZERO,
            factor: 1.0,
            max: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (0-based), jittered to
    /// `[0.5, 1.5)` of the nominal value by a hash of `key`.
    pub fn delay(&self, attempt: u32, key: &str) -> Duration {
        let nominal = self.base.as_secs_f64() * self.factor.powi(attempt as i32);
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ u64::from(attempt);
        for b in key.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        Duration::from_secs_f64(nominal * (0.5 + unit)).min(self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Health {
    pub ok: bool,
    pub latency: Duration,
}

/// A configured model service client. Safe to share across threads.
pub struct Backend {
    config: BackendConfig,
    transport: Arc<dyn Transport>,
    cache: Option<ResponseCache>,
    backoff: Backoff,
    network_calls: AtomicU64,
    in_flight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backend")
            .field("config", &self.config)
            .field("network_calls", &self.network_calls())
            .finish_non_exhaustive()
    }
}

impl Backend {
    pub fn new(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        let cache = config
            .cache_dir
            .as_ref()
            .map(ResponseCache::open)
            .transpose()?;
        Ok(Self {
            config,
            transport,
            cache,
            backoff: Backoff::default(),
            network_calls: AtomicU64::new(0),
            in_flight: Mutex::new(HashMap::new()),
        })
    }

    /// Builds the transport from the endpoint scheme: `mock://<behavior>`
    /// selects an in-process mock, `http(s)://` a real service.
    pub fn from_config(config: BackendConfig) -> Result<Self, BackendError> {
        let transport: Arc<dyn Transport> = match config.endpoint.scheme() {
            "mock" => Arc::new(MockTransport::from_url(&config.endpoint)?),
            "http" | "https" => Arc::new(HttpTransport::new(&config)?),
            other => {
                return Err(BackendError::Usage(format!(
                    "backend {}: unsupported endpoint scheme {other:?}",
                    config.id
                )))
            }
        };
        Self::new(config, transport)
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn id(&self) -> &str {
        &self.config.id
    }

    pub fn kind(&self) -> BackendKind {
        self.config.kind
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Transport attempts made so far (cache hits excluded).
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    fn require_kind(&self, kind: BackendKind) -> Result<(), BackendError> {
        if self.config.kind != kind {
            return Err(BackendError::Usage(format!(
                "backend {} is a {} backend, not {kind}",
                self.config.id, self.config.kind
            )));
        }
        Ok(())
    }

    fn require_text(text: &str) -> Result<(), BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::Precondition("input text is empty".into()));
        }
        Ok(())
    }

    pub fn translate(&self, text: &str, src: Lang, tgt: Lang) -> Result<String, BackendError> {
        self.require_kind(BackendKind::Translate)?;
        Self::require_text(text)?;
        let request = Request::Translate {
            text: text.to_string(),
            src,
            tgt,
        };
        self.call(&request, |v| self.parse_result(v))
    }

    /// Translation returning several beam sequences, deduplicated in order
    /// and truncated to `num_return_sequences`.
    pub fn translate_beams(
        &self,
        text: &str,
        src: Lang,
        tgt: Lang,
        params: BeamParams,
    ) -> Result<Vec<String>, BackendError> {
        params.validate()?;
        self.require_kind(BackendKind::Translate)?;
        Self::require_text(text)?;
        let request = Request::TranslateBeams {
            text: text.to_string(),
            src,
            tgt,
            params,
        };
        self.call(&request, |v| self.parse_candidates(v, params))
    }

    pub fn paraphrase(&self, text: &str, lang: Lang, params: BeamParams) -> Result<Vec<String>, BackendError> {
        params.validate()?;
        self.require_kind(BackendKind::Paraphrase)?;
        Self::require_text(text)?;
        let request = Request::Paraphrase {
            text: text.to_string(),
            lang,
            params,
        };
        self.call(&request, |v| self.parse_candidates(v, params))
    }

    pub fn health_check(&self) -> Result<Health, BackendError> {
        let start = Instant::now();
        self.transport
            .health()
            .map_err(|f| self.failure_to_error(f, 1))?;
        Ok(Health {
            ok: true,
            latency: start.elapsed(),
        })
    }

    fn parse_result(&self, value: &Value) -> Result<String, BackendError> {
        let text = value
            .get("result")
            .and_then(Value::as_str)
            .ok_or_else(|| self.protocol("expected {\"result\": string}"))?;
        if text.trim().is_empty() {
            return Err(BackendError::EmptyResult {
                backend: self.config.id.clone(),
            });
        }
        Ok(text.to_string())
    }

    fn parse_candidates(&self, value: &Value, params: BeamParams) -> Result<Vec<String>, BackendError> {
        let list = value
            .get("candidates")
            .and_then(Value::as_array)
            .ok_or_else(|| self.protocol("expected {\"candidates\": [string]}"))?;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for item in list {
            let s = item
                .as_str()
                .ok_or_else(|| self.protocol("candidate is not a string"))?;
            if s.trim().is_empty() || !seen.insert(s) {
                continue;
            }
            out.push(s.to_string());
            if out.len() == params.num_return_sequences as usize {
                break;
            }
        }
        if out.is_empty() {
            return Err(BackendError::EmptyResult {
                backend: self.config.id.clone(),
            });
        }
        Ok(out)
    }

    fn protocol(&self, message: &str) -> BackendError {
        BackendError::Protocol {
            backend: self.config.id.clone(),
            message: message.to_string(),
        }
    }

    fn failure_to_error(&self, failure: TransportFailure, attempts: u32) -> BackendError {
        match failure {
            TransportFailure::Status { status, body } => BackendError::Status {
                backend: self.config.id.clone(),
                status,
                body: excerpt(&body),
            },
            TransportFailure::Malformed(message) => BackendError::Protocol {
                backend: self.config.id.clone(),
                message,
            },
            other => BackendError::Transport {
                backend: self.config.id.clone(),
                attempts,
                message: other.to_string(),
            },
        }
    }

    fn cache_key(&self, request: &Request) -> String {
        let material = json!({ "backend": self.config.id, "request": request.body() });
        ResponseCache::key(&material.to_string())
    }

    /// Cache lookup, single-flight network call with retries, cache fill.
    fn call<T>(&self, request: &Request, parse: impl Fn(&Value) -> Result<T, BackendError>) -> Result<T, BackendError> {
        let Some(cache) = &self.cache else {
            let value = self.send_with_retries(request, "")?;
            return parse(&value);
        };
        let key = self.cache_key(request);
        let gate = {
            let mut in_flight = self.in_flight.lock().expect("in-flight map poisoned");
            in_flight.entry(key.clone()).or_default().clone()
        };
        let _guard = gate.lock().expect("single-flight gate poisoned");
        if let Some(value) = cache.get(&key)? {
            if let Ok(parsed) = parse(&value) {
                return Ok(parsed);
            }
            log::warn!("backend {}: ignoring unusable cache entry {key}", self.config.id);
        }
        let value = self.send_with_retries(request, &key)?;
        let parsed = parse(&value)?;
        cache.put(&key, &value)?;
        Ok(parsed)
    }

    fn send_with_retries(&self, request: &Request, key: &str) -> Result<Value, BackendError> {
        let mut attempt = 0;
        loop {
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            match self.transport.send(request) {
                Ok(value) => return Ok(value),
                Err(failure) if failure.retryable() && attempt < self.config.max_retries => {
                    let delay = self.backoff.delay(attempt, key);
                    log::debug!(
                        "backend {}: attempt {} failed ({failure}); retrying in {delay:?}",
                        self.config.id,
                        attempt + 1
                    );
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(failure) => return Err(self.failure_to_error(failure, attempt + 1)),
            }
        }
    }
}

/// Backends by id.
#[derive(Debug, Default, Clone)]
pub struct BackendRegistry {
    backends: HashMap<String, Arc<Backend>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_configs(configs: impl IntoIterator<Item = BackendConfig>) -> Result<Self, BackendError> {
        let mut registry = Self::new();
        for config in configs {
            registry.insert(Backend::from_config(config)?)?;
        }
        Ok(registry)
    }

    pub fn insert(&mut self, backend: Backend) -> Result<Arc<Backend>, BackendError> {
        let id = backend.id().to_string();
        if self.backends.contains_key(&id) {
            return Err(BackendError::Usage(format!("duplicate backend id {id:?}")));
        }
        let backend = Arc::new(backend);
        self.backends.insert(id, backend.clone());
        Ok(backend)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Backend>, BackendError> {
        self.backends
            .get(id)
            .cloned()
            .ok_or_else(|| BackendError::Usage(format!("unknown backend id {id:?}")))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mock_backend(kind: BackendKind, behavior: MockBehavior) -> (Backend, Arc<MockTransport>) {
        let transport = Arc::new(MockTransport::new(behavior));
        let config = BackendConfig::new("mock", kind, "mock://test").unwrap();
        let backend = Backend::new(config, transport.clone()).unwrap().with_backoff(Backoff::none());
        (backend, transport)
    }

    #[test]
    fn beam_params_invariants() {
        assert!(BeamParams::new(4, 2, true).is_ok());
        assert!(matches!(BeamParams::new(2, 3, true), Err(BackendError::Precondition(_))));
        assert!(BeamParams::new(0, 0, false).is_err());
        assert_eq!(BeamParams::default(), BeamParams::new(4, 1, true).unwrap());
    }

    #[test]
    fn identity_and_tagging_translate() {
        let (b, _) = mock_backend(BackendKind::Translate, MockBehavior::Identity);
        assert_eq!(b.translate("hello", Lang::En, Lang::Ml).unwrap(), "hello");
        let (b, _) = mock_backend(BackendKind::Translate, MockBehavior::Tagging);
        assert_eq!(b.translate("hello", Lang::En, Lang::Ml).unwrap(), "⟦ml⟧hello");
    }

    #[test]
    fn rotation_paraphrase() {
        let (b, _) = mock_backend(BackendKind::Paraphrase, MockBehavior::Rotate);
        let params = BeamParams::new(4, 2, true).unwrap();
        assert_eq!(b.paraphrase("a b c", Lang::En, params).unwrap(), ["b c a", "c a b"]);
    }

    #[test]
    fn precondition_checked_before_network() {
        let (b, mock) = mock_backend(BackendKind::Paraphrase, MockBehavior::Rotate);
        let params = BeamParams {
            num_beams: 2,
            num_return_sequences: 3,
            early_stopping: true,
        };
        assert!(matches!(b.paraphrase("a b c", Lang::En, params), Err(BackendError::Precondition(_))));
        assert_eq!(mock.calls(), 0);
        assert_eq!(b.network_calls(), 0);
    }

    #[test]
    fn echo_dedups() {
        let (b, _) = mock_backend(BackendKind::Paraphrase, MockBehavior::Identity);
        let params = BeamParams::new(3, 3, false).unwrap();
        assert_eq!(b.paraphrase("x", Lang::Ml, params).unwrap(), ["x"]);
    }

    #[test]
    fn dedup_preserves_first_occurrence() {
        let list = ["b", "a", "b", "c", "a", "d"].map(String::from).to_vec();
        let (b, _) = mock_backend(BackendKind::Paraphrase, MockBehavior::Fixed(list));
        let params = BeamParams::new(6, 6, true).unwrap();
        assert_eq!(b.paraphrase("x", Lang::Ml, params).unwrap(), ["b", "a", "c", "d"]);
        let params = BeamParams::new(6, 2, true).unwrap();
        assert_eq!(b.paraphrase("x", Lang::Ml, params).unwrap(), ["b", "a"]);
    }

    #[test]
    fn wrong_kind_is_usage_error() {
        let (b, mock) = mock_backend(BackendKind::Paraphrase, MockBehavior::Identity);
        assert!(matches!(b.translate("x", Lang::En, Lang::Ml), Err(BackendError::Usage(_))));
        assert_eq!(mock.calls(), 0);
        assert!(matches!("summarize".parse::<BackendKind>(), Err(BackendError::Usage(_))));
    }

    #[test]
    fn empty_results_are_errors() {
        let (b, _) = mock_backend(BackendKind::Translate, MockBehavior::Fixed(vec!["  ".into()]));
        assert!(matches!(b.translate("x", Lang::En, Lang::Ml), Err(BackendError::EmptyResult { .. })));
        let (b, _) = mock_backend(BackendKind::Paraphrase, MockBehavior::Fixed(vec![]));
        assert!(matches!(
            b.paraphrase("x", Lang::Ml, BeamParams::default()),
            Err(BackendError::EmptyResult { .. })
        ));
    }

    #[test]
    fn retries_then_succeeds() {
        let (b, mock) = mock_backend(BackendKind::Translate, MockBehavior::Identity);
        mock.fail_next(2);
        assert_eq!(b.translate("hi", Lang::En, Lang::Ml).unwrap(), "hi");
        assert_eq!(mock.calls(), 3);
    }

    #[test]
    fn retries_exhausted() {
        let transport = Arc::new(MockTransport::new(MockBehavior::Identity));
        transport.fail_next(5);
        let config = BackendConfig::new("flaky", BackendKind::Translate, "mock://x")
            .unwrap()
            .with_max_retries(1);
        let b = Backend::new(config, transport.clone()).unwrap().with_backoff(Backoff::none());
        let err = b.translate("hi", Lang::En, Lang::Ml).unwrap_err();
        assert!(matches!(err, BackendError::Transport { attempts: 2, .. }), "{err}");
        assert_eq!(transport.calls(), 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (b, mock) = mock_backend(BackendKind::Translate, MockBehavior::Identity);
        mock.fail_on("boom", 400);
        let err = b.translate("boom", Lang::En, Lang::Ml).unwrap_err();
        assert!(matches!(err, BackendError::Status { status: 400, .. }));
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn cache_hit_skips_network() {
        let dir = tempfile::tempdir().unwrap();
        let transport = Arc::new(MockTransport::new(MockBehavior::Tagging));
        let config = BackendConfig::new("gt", BackendKind::Translate, "mock://tagging")
            .unwrap()
            .with_cache_dir(dir.path());
        let b = Backend::new(config.clone(), transport.clone()).unwrap();
        for _ in 0..5 {
            assert_eq!(b.translate("hello", Lang::En, Lang::Ml).unwrap(), "⟦ml⟧hello");
        }
        assert_eq!(transport.calls(), 1);

        // a fresh client over the same directory starts warm
        let b2 = Backend::new(config, transport.clone()).unwrap();
        b2.translate("hello", Lang::En, Lang::Ml).unwrap();
        assert_eq!(transport.calls(), 1);
        b2.translate("hello", Lang::En, Lang::En).unwrap();
        assert_eq!(transport.calls(), 2);
    }

    #[test]
    fn single_flight_under_concurrency() {
        let dir = tempfile::tempdir().unwrap();
        let transport = Arc::new(MockTransport::new(MockBehavior::Identity).with_latency(Duration::from_millis(20)));
        let config = BackendConfig::new("gt", BackendKind::Translate, "mock://identity")
            .unwrap()
            .with_cache_dir(dir.path());
        let b = Backend::new(config, transport.clone()).unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| b.translate("same", Lang::En, Lang::Ml).unwrap());
            }
        });
        assert_eq!(transport.calls(), 1);
    }

    #[test]
    fn backoff_grows_and_jitters_deterministically() {
        let b = Backoff::default();
        let d0 = b.delay(0, "k");
        assert!(d0 >= Duration::from_millis(125) && d0 < Duration::from_millis(375));
        let d1 = b.delay(1, "k");
        assert!(d1 >= Duration::from_millis(250) && d1 < Duration::from_millis(750));
        assert_eq!(b.delay(1, "k"), d1);
        assert!(b.delay(20, "k") <= b.max);
    }

    #[test]
    fn mock_health() {
        let (b, _) = mock_backend(BackendKind::Translate, MockBehavior::Identity);
        let h = b.health_check().unwrap();
        assert!(h.ok);
        let mock = MockTransport::new(MockBehavior::Identity).unhealthy();
        let b = Backend::new(
            BackendConfig::new("down", BackendKind::Translate, "mock://x").unwrap(),
            Arc::new(mock),
        )
        .unwrap();
        assert!(matches!(b.health_check(), Err(BackendError::Transport { .. })));
    }

    #[test]
    fn registry_resolves_schemes() {
        let configs = vec![
            BackendConfig::new("gt", BackendKind::Translate, "mock://tagging").unwrap(),
            BackendConfig::new("para", BackendKind::Paraphrase, "mock://rotate").unwrap(),
        ];
        let reg = BackendRegistry::from_configs(configs.clone()).unwrap();
        assert_eq!(reg.get("gt").unwrap().kind(), BackendKind::Translate);
        assert!(reg.get("nope").is_err());
        assert!(BackendRegistry::from_configs([configs[0].clone(), configs[0].clone()]).is_err());
        let ftp = BackendConfig::new("x", BackendKind::Translate, "ftp://host/").unwrap();
        assert!(matches!(Backend::from_config(ftp), Err(BackendError::Usage(_))));
        assert!(BackendConfig::new("x", BackendKind::Translate, "not a url").is_err());
    }

    #[test]
    fn wire_bodies() {
        let params = BeamParams::new(5, 3, false).unwrap();
        let body = Request::Paraphrase {
            text: "t".into(),
            lang: Lang::Ml,
            params,
        }
        .body();
        assert_eq!(
            body,
            json!({"text": "t", "lang": "ml", "num_beams": 5, "num_return_sequences": 3, "early_stopping": false})
        );
        let body = Request::Translate {
            text: "t".into(),
            src: Lang::En,
            tgt: Lang::Ml,
        }
        .body();
        assert_eq!(body, json!({"text": "t", "src": "en", "tgt": "ml"}));
    }
}
