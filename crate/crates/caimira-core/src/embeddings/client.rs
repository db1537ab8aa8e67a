//! HTTP client for an external embedding service.
//!
//! Contract: POST `{endpoint}` with `{"texts": [...]}`, response
//! `{"embeddings": [[...], ...]}` with one vector per text in input order.
//! Server errors (5xx) and transport failures are retried with exponential
//! backoff; client errors (4xx) fail immediately.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

/// Batched, retrying client. One instance per endpoint; calls are
/// synchronous and the client is cheap to clone.
#[derive(Debug, Clone)]
pub struct EmbedClient {
    pub endpoint: String,
    pub batch_size: usize,
    pub max_retries: u32,
    pub retry_base: Duration,
}

impl EmbedClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        EmbedClient {
            endpoint: endpoint.into(),
            batch_size: 32,
            max_retries: 3,
            retry_base: Duration::from_millis(250),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_retry_base(mut self, base: Duration) -> Self {
        self.retry_base = base;
        self
    }

    /// Embed all texts, batching requests. Returns one vector per text in
    /// input order; all vectors must share one dimension.
    pub fn request_embeddings(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut out: Vec<Vec<f32>> = Vec::with_capacity(texts.len());
        let mut dim: Option<usize> = None;
        for batch in texts.chunks(self.batch_size.max(1)) {
            let vectors = self.request_batch(batch)?;
            if vectors.len() != batch.len() {
                return Err(CoreError::Protocol(format!(
                    "service returned {} vectors for {} texts",
                    vectors.len(),
                    batch.len()
                )));
            }
            for v in &vectors {
                match dim {
                    None => dim = Some(v.len()),
                    Some(d) if d != v.len() => {
                        return Err(CoreError::Protocol(format!(
                            "dimension mismatch across batches: {} vs {}",
                            d,
                            v.len()
                        )))
                    }
                    _ => {}
                }
            }
            out.extend(vectors);
        }
        Ok(out)
    }

    fn request_batch(&self, batch: &[String]) -> Result<Vec<Vec<f32>>> {
        let mut attempt = 0u32;
        loop {
            match self.send_once(batch) {
                Ok(vectors) => return Ok(vectors),
                Err(RequestFailure::Fatal(err)) => return Err(err),
                Err(RequestFailure::Transient(msg)) => {
                    if attempt >= self.max_retries {
                        return Err(CoreError::Transport(format!(
                            "{} after {} retries: {msg}",
                            self.endpoint, self.max_retries
                        )));
                    }
                    let backoff = self.retry_base * 2u32.pow(attempt);
                    std::thread::sleep(backoff);
                    attempt += 1;
                }
            }
        }
    }

    fn send_once(&self, batch: &[String]) -> std::result::Result<Vec<Vec<f32>>, RequestFailure> {
        let result = ureq::post(&self.endpoint).send_json(&EmbedRequest { texts: batch });
        match result {
            Ok(mut response) => {
                let parsed: EmbedResponse = response.body_mut().read_json().map_err(|e| {
                    RequestFailure::Fatal(CoreError::Protocol(format!("bad response body: {e}")))
                })?;
                Ok(parsed.embeddings)
            }
            Err(ureq::Error::StatusCode(code)) if code >= 500 => {
                Err(RequestFailure::Transient(format!("HTTP {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => Err(RequestFailure::Fatal(CoreError::Transport(
                format!("{}: HTTP {code}", self.endpoint),
            ))),
            Err(e) => Err(RequestFailure::Transient(e.to_string())),
        }
    }
}

enum RequestFailure {
    Transient(String),
    Fatal(CoreError),
}
