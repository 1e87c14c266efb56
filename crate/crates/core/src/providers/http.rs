//! JSON-over-HTTP provider. The configuration and rate limiter are always
//! available; the client itself needs the `http` feature.
//!
//! Request body:
//!
//! ```json
//! {"kind": "mutate", "model": "...", "seed": 1, "subject": "...",
//!  "prompt": "...", "attachments": [{"name": "sheet.png", "mime": "image/png", "data": "<base64>"}]}
//! ```
//!
//! The endpoint answers `{"text": "...", "embedding": [..]?, "usage": {..}?}`.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[cfg(feature = "http")]
use super::{Provider, ProviderError, ProviderRequest, ProviderResponse, Usage};
#[cfg(feature = "http")]
use base64::Engine;
#[cfg(feature = "http")]
use serde_json::json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Sustained requests per second.
    #[serde(default = "default_rate")]
    pub rate_per_sec: f64,
    #[serde(default = "default_burst")]
    pub burst: f64,
}

fn default_timeout() -> u64 {
    120
}

fn default_rate() -> f64 {
    4.0
}

fn default_burst() -> f64 {
    8.0
}

/// Token bucket shared by all in-flight requests of one provider.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate: f64, capacity: f64) -> Self {
        let capacity = capacity.max(1.0);
        Self { rate: rate.max(1e-6), capacity, state: Mutex::new((capacity, Instant::now())) }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut guard = self.state.lock().expect("token bucket poisoned");
                let (tokens, last) = *guard;
                let now = Instant::now();
                let refilled = (tokens + now.duration_since(last).as_secs_f64() * self.rate).min(self.capacity);
                if refilled >= 1.0 {
                    *guard = (refilled - 1.0, now);
                    return;
                }
                *guard = (refilled, now);
                (1.0 - refilled) / self.rate
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[cfg(feature = "http")]
#[derive(Deserialize)]
struct WireResponse {
    text: Option<String>,
    embedding: Option<Vec<f64>>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[cfg(feature = "http")]
pub struct HttpProvider {
    cfg: HttpConfig,
    agent: ureq::Agent,
    bucket: TokenBucket,
}

#[cfg(feature = "http")]
impl HttpProvider {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let bucket = TokenBucket::new(cfg.rate_per_sec, cfg.burst);
        Self { cfg, agent, bucket }
    }

    fn body(&self, req: &ProviderRequest) -> Result<serde_json::Value, ProviderError> {
        let engine = base64::engine::general_purpose::STANDARD;
        let attachments: Vec<_> = req
            .attachments
            .iter()
            .map(|a| json!({"name": a.name, "mime": "image/png", "data": engine.encode(&a.png)}))
            .collect();
        Ok(json!({
            "kind": req.kind,
            "model": self.cfg.model,
            "seed": req.seed,
            "subject": req.subject,
            "prompt": req.prompt()?,
            "attachments": attachments,
        }))
    }
}

#[cfg(feature = "http")]
impl Provider for HttpProvider {
    fn call(&self, req: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let body = self.body(req)?;
        self.bucket.acquire();
        let mut call = self.agent.post(&self.cfg.endpoint).header("Content-Type", "application/json");
        if let Some(var) = &self.cfg.api_key_env {
            let token = std::env::var(var).map_err(|_| ProviderError::Transport(format!("environment variable {var} is not set")))?;
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = call.send_json(&body).map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ProviderError::Transport(format!("HTTP {status}")));
        }
        let wire: WireResponse = resp.body_mut().read_json().map_err(|e| ProviderError::Parse(e.to_string()))?;
        Ok(ProviderResponse {
            raw: wire.text.unwrap_or_default(),
            embedding: wire.embedding,
            usage: wire.usage.unwrap_or_default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_allows_burst_then_throttles() {
        let bucket = TokenBucket::new(50.0, 3.0);
        let start = Instant::now();
        for _ in 0..3 {
            bucket.acquire();
        }
        assert!(start.elapsed() < Duration::from_millis(15));
        bucket.acquire();
        assert!(start.elapsed() >= Duration::from_millis(15));
    }
}
