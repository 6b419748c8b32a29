//! Blocking JSON-over-HTTP client shared by the remote backends: bounded
//! in-flight requests, per-request timeout, at most `max_retries` retries
//! with exponential backoff.

use std::fmt;
use std::sync::{Condvar, Mutex, OnceLock};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
pub const DEFAULT_MAX_RETRIES: u32 = 2;
const BACKOFF_BASE_MS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteError {
    #[error("remote endpoint unavailable: {0}")]
    Unavailable(String),
    #[error("remote endpoint returned a bad response: {0}")]
    BadResponse(String),
}

/// Where and how to reach a remote backend.
#[derive(Clone, Serialize, Deserialize)]
pub struct RemoteEndpoint {
    pub url: String,
    #[serde(skip_serializing, default)]
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
}

impl RemoteEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_retries: DEFAULT_MAX_RETRIES,
            max_in_flight: 4,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_timeout_ms(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }
}

// Keys never reach logs.
impl fmt::Debug for RemoteEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteEndpoint")
            .field("url", &self.url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout_ms", &self.timeout_ms)
            .field("max_retries", &self.max_retries)
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

struct Semaphore {
    available: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.cv.notify_one();
    }
}

pub(crate) struct JsonClient {
    endpoint: RemoteEndpoint,
    // Built lazily: a blocking client must not be created on an async runtime thread.
    http: OnceLock<Result<reqwest::blocking::Client, String>>,
    permits: Semaphore,
}

impl JsonClient {
    pub(crate) fn new(endpoint: RemoteEndpoint) -> Self {
        let permits = Semaphore::new(endpoint.max_in_flight);
        Self {
            endpoint,
            http: OnceLock::new(),
            permits,
        }
    }

    pub(crate) fn endpoint(&self) -> &RemoteEndpoint {
        &self.endpoint
    }

    fn http(&self) -> Result<&reqwest::blocking::Client, RemoteError> {
        self.http
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_millis(self.endpoint.timeout_ms))
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| RemoteError::Unavailable(e.clone()))
    }

    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R, RemoteError> {
        let http = self.http()?;
        let _permit = self.permits.acquire();
        let mut last_err = String::new();
        for attempt in 0..=self.endpoint.max_retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(BACKOFF_BASE_MS << (attempt - 1)));
            }
            let mut req = http.post(&self.endpoint.url).json(body);
            if let Some(key) = &self.endpoint.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_server_error() || status.as_u16() == 429 {
                        last_err = format!("status {status}");
                        continue;
                    }
                    if !status.is_success() {
                        return Err(RemoteError::BadResponse(format!("status {status}")));
                    }
                    let bytes = resp
                        .bytes()
                        .map_err(|e| RemoteError::Unavailable(e.to_string()))?;
                    return serde_json::from_slice(&bytes)
                        .map_err(|e| RemoteError::BadResponse(e.to_string()));
                }
                Err(e) => {
                    tracing::debug!(attempt, url = %self.endpoint.url, "remote request failed: {e}");
                    last_err = e.to_string();
                }
            }
        }
        Err(RemoteError::Unavailable(last_err))
    }
}
