//! Deterministic in-process model services for offline runs and tests.
//!
//! Selected in configuration with a `mock://<behavior>` endpoint, optionally
//! with `?fail_first=N` (transport failures before the first success) and
//! `?fail_on=<substring>` (HTTP 500 for any request whose text contains it).

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};
use url::Url;

use super::{BackendError, Request, Transport, TransportFailure};

pub const TAG_OPEN: char = '⟦';
pub const TAG_CLOSE: char = '⟧';

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockBehavior {
    /// Returns the input unchanged (every beam identical).
    Identity,
    /// Prefixes the input with `⟦<tgt>⟧`.
    Tagging,
    /// Returns the rotations of the whitespace token sequence by
    /// 1, 2, ..., n positions (the last one is the input itself).
    Rotate,
    /// Returns a fixed candidate list; translation returns its first item.
    Fixed(Vec<String>),
}

impl MockBehavior {
    pub fn parse(name: &str) -> Result<Self, BackendError> {
        match name {
            "identity" | "echo" => Ok(MockBehavior::Identity),
            "tagging" => Ok(MockBehavior::Tagging),
            "rotate" | "permute" => Ok(MockBehavior::Rotate),
            other => Err(BackendError::Usage(format!(
                "unknown mock behavior {other:?} (expected identity, echo, tagging, rotate)"
            ))),
        }
    }
}

pub fn tag(lang: impl std::fmt::Display, text: &str) -> String {
    format!("{TAG_OPEN}{lang}{TAG_CLOSE}{text}")
}

fn rotations(text: &str) -> Vec<String> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let n = tokens.len();
    (1..=n)
        .map(|k| {
            let mut rotated = tokens[k % n..].to_vec();
            rotated.extend_from_slice(&tokens[..k % n]);
            rotated.join(" ")
        })
        .collect()
}

#[derive(Debug)]
pub struct MockTransport {
    behavior: MockBehavior,
    calls: AtomicUsize,
    fail_remaining: AtomicUsize,
    fail_on: Mutex<Vec<(String, u16)>>,
    latency: Duration,
    healthy: bool,
}

impl MockTransport {
    pub fn new(behavior: MockBehavior) -> Self {
        Self {
            behavior,
            calls: AtomicUsize::new(0),
            fail_remaining: AtomicUsize::new(0),
            fail_on: Mutex::new(Vec::new()),
            latency: Duration::ZERO,
            healthy: true,
        }
    }

    pub fn from_url(url: &Url) -> Result<Self, BackendError> {
        let name = url.host_str().unwrap_or_default();
        let mock = Self::new(MockBehavior::parse(name)?);
        for (k, v) in url.query_pairs() {
            match k.as_ref() {
                "fail_first" => {
                    let n = v
                        .parse()
                        .map_err(|_| BackendError::Usage(format!("mock fail_first={v:?} is not a count")))?;
                    mock.fail_next(n);
                }
                "fail_on" => mock.fail_on(&v, 500),
                other => return Err(BackendError::Usage(format!("unknown mock option {other:?}"))),
            }
        }
        Ok(mock)
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn unhealthy(mut self) -> Self {
        self.healthy = false;
        self
    }

    /// The next `n` requests fail with a network error.
    pub fn fail_next(&self, n: usize) {
        self.fail_remaining.store(n, Ordering::SeqCst);
    }

    /// Requests whose text contains `needle` fail with `status`.
    pub fn fail_on(&self, needle: &str, status: u16) {
        self.fail_on
            .lock()
            .expect("mock state poisoned")
            .push((needle.to_string(), status));
    }

    /// Number of requests received (the "network hit" counter).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn candidates(&self, text: &str, tagged_lang: Option<String>, k: u32) -> Vec<String> {
        let base = match tagged_lang {
            Some(lang) if self.behavior == MockBehavior::Tagging => tag(lang, text),
            _ => text.to_string(),
        };
        match &self.behavior {
            MockBehavior::Identity | MockBehavior::Tagging => vec![base; k as usize],
            MockBehavior::Rotate => rotations(&base),
            MockBehavior::Fixed(list) => list.clone(),
        }
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &Request) -> Result<Value, TransportFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let failing = self
            .fail_remaining
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        if failing {
            return Err(TransportFailure::Network("injected mock failure".into()));
        }
        let text = request.text();
        if let Some((_, status)) = self
            .fail_on
            .lock()
            .expect("mock state poisoned")
            .iter()
            .find(|(needle, _)| text.contains(needle.as_str()))
        {
            return Err(TransportFailure::Status {
                status: *status,
                body: format!("mock refused {text:?}"),
            });
        }

        Ok(match request {
            Request::Translate { text, tgt, .. } => {
                let result = match &self.behavior {
                    MockBehavior::Tagging => tag(tgt, text),
                    MockBehavior::Fixed(list) => list.first().cloned().unwrap_or_default(),
                    MockBehavior::Identity | MockBehavior::Rotate => text.clone(),
                };
                json!({ "result": result })
            }
            Request::TranslateBeams { text, tgt, params, .. } => {
                json!({ "candidates": self.candidates(text, Some(tgt.to_string()), params.num_return_sequences) })
            }
            Request::Paraphrase { text, params, .. } => {
                json!({ "candidates": self.candidates(text, None, params.num_return_sequences) })
            }
        })
    }

    fn health(&self) -> Result<(), TransportFailure> {
        if self.healthy {
            Ok(())
        } else {
            Err(TransportFailure::Network("mock marked unhealthy".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_order() {
        assert_eq!(rotations("a b c"), ["b c a", "c a b", "a b c"]);
        assert_eq!(rotations("x"), ["x"]);
    }

    #[test]
    fn url_options() {
        let url = Url::parse("mock://tagging?fail_first=2&fail_on=bad").unwrap();
        let mock = MockTransport::from_url(&url).unwrap();
        assert_eq!(mock.behavior, MockBehavior::Tagging);
        assert_eq!(mock.fail_remaining.load(Ordering::SeqCst), 2);
        assert!(MockTransport::from_url(&Url::parse("mock://oracle").unwrap()).is_err());
        assert!(MockTransport::from_url(&Url::parse("mock://identity?x=1").unwrap()).is_err());
    }
}
