//! Blocking HTTP transport speaking the JSON protocol.

use reqwest::blocking::Client;
use serde_json::Value;
use url::Url;

use super::{BackendConfig, BackendError, Request, Transport, TransportFailure};

#[derive(Debug, Clone)]
pub struct HttpTransport {
    client: Client,
    endpoint: Url,
    health_url: Url,
    bearer_token: Option<String>,
}

impl HttpTransport {
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Usage(format!("backend {}: cannot build HTTP client: {e}", config.id)))?;
        let mut health_url = config.endpoint.clone();
        health_url
            .path_segments_mut()
            .map_err(|_| BackendError::Usage(format!("backend {}: endpoint cannot be a base URL", config.id)))?
            .pop_if_empty()
            .push("health");
        Ok(Self {
            client,
            endpoint: config.endpoint.clone(),
            health_url,
            bearer_token: config.bearer_token.clone(),
        })
    }

    fn classify(e: reqwest::Error) -> TransportFailure {
        if e.is_timeout() {
            TransportFailure::Timeout
        } else {
            TransportFailure::Network(e.to_string())
        }
    }

    fn authorize(&self, builder: reqwest::blocking::RequestBuilder) -> reqwest::blocking::RequestBuilder {
        match &self.bearer_token {
            Some(token) => builder.bearer_auth(token),
            None => builder,
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &Request) -> Result<Value, TransportFailure> {
        let response = self
            .authorize(self.client.post(self.endpoint.clone()).json(&request.body()))
            .send()
            .map_err(Self::classify)?;
        let status = response.status();
        let body = response.text().map_err(Self::classify)?;
        if !status.is_success() {
            return Err(TransportFailure::Status {
                status: status.as_u16(),
                body,
            });
        }
        serde_json::from_str(&body).map_err(|e| TransportFailure::Malformed(format!("{e}")))
    }

    fn health(&self) -> Result<(), TransportFailure> {
        let response = self
            .authorize(self.client.get(self.health_url.clone()))
            .send()
            .map_err(Self::classify)?;
        let status = response.status();
        if status.is_success() {
            Ok(())
        } else {
            Err(TransportFailure::Status {
                status: status.as_u16(),
                body: response.text().unwrap_or_default(),
            })
        }
    }
}
