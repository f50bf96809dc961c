//! Shared HTTP transport: credential handling, bounded concurrency, retries
//! with seeded-jitter backoff, and ledger accounting.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand_chacha::rand_core::RngCore;

use super::{
    anthropic, openai, ChatRequest, ChatResponse, Dialect, Gate, ProviderConfig, Provider,
    ProviderError, UsageLedger,
};
use crate::rng;

/// Retry loop shared by all provider implementations.
///
/// `attempt_fn(i)` performs attempt `i` (0-based). Retryable failures sleep
/// `retry_backoff_ms << i` plus jitter from a seeded stream, then retry, up to
/// `retry_limit` extra attempts. Only the final outcome touches the ledger;
/// tokens accrue on success only. Jitter affects timing, never content.
pub(crate) fn run_with_retries<F>(
    config: &ProviderConfig,
    model: &str,
    ledger: &Mutex<UsageLedger>,
    call_seq: &AtomicU64,
    mut attempt_fn: F,
) -> Result<ChatResponse, ProviderError>
where
    F: FnMut(u32) -> Result<ChatResponse, ProviderError>,
{
    let seq = call_seq.fetch_add(1, Ordering::Relaxed);
    let mut jitter = rng::stream(config.jitter_seed, "provider.jitter", seq);
    let mut attempts = 0u32;
    loop {
        match attempt_fn(attempts) {
            Ok(resp) => {
                attempts += 1;
                ledger
                    .lock()
                    .unwrap()
                    .record_success(model, &resp, u64::from(attempts));
                return Ok(resp);
            }
            Err(err) => {
                attempts += 1;
                if !err.is_retryable() || attempts > config.retry_limit {
                    ledger.lock().unwrap().record_failure(model, u64::from(attempts));
                    let final_err = match err {
                        ProviderError::RateLimited { .. } => {
                            ProviderError::RateLimited { attempts }
                        }
                        other => other,
                    };
                    return Err(final_err);
                }
                if config.retry_backoff_ms > 0 {
                    let backoff = config.retry_backoff_ms << (attempts - 1).min(16);
                    let extra = jitter.next_u64() % config.retry_backoff_ms;
                    std::thread::sleep(Duration::from_millis(backoff + extra));
                }
            }
        }
    }
}

/// Chat client for the OpenAI- and Anthropic-compatible dialects.
pub struct HttpProvider {
    config: ProviderConfig,
    client: reqwest::blocking::Client,
    ledger: Mutex<UsageLedger>,
    gate: Gate,
    call_seq: AtomicU64,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        if config.dialect == Dialect::Mock {
            return Err(ProviderError::InvalidRequest(
                "use MockProvider for the mock dialect".into(),
            ));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| ProviderError::Http(e.to_string()))?;
        let gate = Gate::new(config.max_concurrent);
        Ok(HttpProvider {
            config,
            client,
            ledger: Mutex::new(UsageLedger::default()),
            gate,
            call_seq: AtomicU64::new(0),
        })
    }

    fn credential(&self) -> Result<String, ProviderError> {
        let var = self.config.credential_env_var.as_deref().ok_or_else(|| {
            ProviderError::Auth("credential_env_var not configured".into())
        })?;
        std::env::var(var)
            .map_err(|_| ProviderError::Auth(format!("environment variable {var} not set")))
    }

    fn attempt(&self, request: &ChatRequest, key: &str) -> Result<ChatResponse, ProviderError> {
        let (path, body) = match self.config.dialect {
            Dialect::OpenaiCompatible => (openai::PATH, openai::request_body(request)),
            Dialect::AnthropicCompatible => (anthropic::PATH, anthropic::request_body(request)),
            Dialect::Mock => unreachable!("checked in new()"),
        };
        let url = format!("{}{}", self.config.endpoint.trim_end_matches('/'), path);
        let mut call = self.client.post(&url).json(&body);
        call = match self.config.dialect {
            Dialect::OpenaiCompatible => call.bearer_auth(key),
            Dialect::AnthropicCompatible => call
                .header("x-api-key", key)
                .header("anthropic-version", anthropic::API_VERSION),
            Dialect::Mock => unreachable!(),
        };
        let resp = call.send().map_err(|e| ProviderError::Http(e.to_string()))?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(|e| ProviderError::Http(e.to_string()))?;
        match status.as_u16() {
            200..=299 => match self.config.dialect {
                Dialect::OpenaiCompatible => openai::parse_response(&bytes),
                Dialect::AnthropicCompatible => anthropic::parse_response(&bytes),
                Dialect::Mock => unreachable!(),
            },
            401 | 403 => Err(ProviderError::Auth(format!("status {status}"))),
            429 => Err(ProviderError::RateLimited { attempts: 1 }),
            500..=599 => Err(ProviderError::Http(format!("status {status}"))),
            _ => Err(ProviderError::InvalidRequest(format!(
                "status {status}: {}",
                String::from_utf8_lossy(&bytes[..bytes.len().min(200)])
            ))),
        }
    }
}

impl Provider for HttpProvider {
    fn complete_chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let key = self.credential()?;
        let _permit = self.gate.acquire();
        run_with_retries(
            &self.config,
            &request.model,
            &self.ledger,
            &self.call_seq,
            |_| self.attempt(request, &key),
        )
    }

    fn ledger(&self) -> UsageLedger {
        self.ledger.lock().unwrap().clone()
    }

    fn model(&self) -> &str {
        &self.config.model
    }
}
