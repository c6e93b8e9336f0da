//! Outbound HTTP used by the coordinator: remote service invocation and
//! health probes.

use std::time::Duration;

use thiserror::Error;

/// A transport-level failure: the remote service never produced an HTTP
/// response (connect failure, timeout, I/O error). Responses with error
/// statuses are not transport failures.
#[derive(Debug, Error, Clone)]
#[error("transport: {message}")]
pub struct TransportError {
    pub message: String,
}

impl TransportError {
    pub fn new(message: impl Into<String>) -> Self {
        TransportError {
            message: message.into(),
        }
    }
}

/// An HTTP response as seen by the coordinator.
#[derive(Debug, Clone)]
pub struct TransportResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl TransportResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

/// Blocking HTTP client abstraction, injectable for tests.
pub trait Transport: Send + Sync {
    fn post(
        &self,
        url: &str,
        body: &[u8],
        timeout: Duration,
    ) -> Result<TransportResponse, TransportError>;

    fn get(&self, url: &str, timeout: Duration) -> Result<TransportResponse, TransportError>;
}

/// Production transport backed by ureq. Error statuses are returned as
/// responses, not errors, so the coordinator can read `{code, message}`
/// bodies.
pub struct UreqTransport {
    agent: ureq::Agent,
    bearer_token: Option<String>,
}

impl UreqTransport {
    pub fn new(bearer_token: Option<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build();
        UreqTransport {
            agent: config.new_agent(),
            bearer_token,
        }
    }

    fn auth_header(&self) -> Option<String> {
        self.bearer_token.as_ref().map(|t| format!("Bearer {t}"))
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(None)
    }
}

impl Transport for UreqTransport {
    fn post(
        &self,
        url: &str,
        body: &[u8],
        timeout: Duration,
    ) -> Result<TransportResponse, TransportError> {
        let mut request = self
            .agent
            .post(url)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .header("content-type", "application/json");
        if let Some(auth) = self.auth_header() {
            request = request.header("authorization", auth);
        }
        let mut response = request
            .send(body)
            .map_err(|e| TransportError::new(e.to_string()))?;
        let status = response.status().as_u16();
        let bytes = response
            .body_mut()
            .read_to_vec()
            .map_err(|e| TransportError::new(e.to_string()))?;
        Ok(TransportResponse {
            status,
            body: bytes,
        })
    }

    fn get(&self, url: &str, timeout: Duration) -> Result<TransportResponse, TransportError> {
        let mut request = self
            .agent
            .get(url)
            .config()
            .timeout_global(Some(timeout))
            .build();
        if let Some(auth) = self.auth_header() {
            request = request.header("authorization", auth);
        }
        let mut response = request
            .call()
            .map_err(|e| TransportError::new(e.to_string()))?;
        let status = response.status().as_u16();
        let bytes = response
            .body_mut()
            .read_to_vec()
            .map_err(|e| TransportError::new(e.to_string()))?;
        Ok(TransportResponse {
            status,
            body: bytes,
        })
    }
}
