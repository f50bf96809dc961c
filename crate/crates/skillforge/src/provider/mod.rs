//! Uniform chat-completion client over multiple LLM API dialects.
//!
//! One [`Provider`] trait fronts three dialects: OpenAI-compatible and
//! Anthropic-compatible HTTP endpoints, plus a deterministic scripted
//! [`mock::MockProvider`] for offline tests. All implementations share the
//! retry policy (exponential backoff, seeded jitter), a bounded-concurrency
//! gate, and a usage ledger that accrues tokens only for successful calls.

mod anthropic;
mod http;
mod mock;
mod openai;

pub use http::HttpProvider;
pub use mock::{MockProvider, MockReply, MockScript};

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("http transport: {0}")]
    Http(String),
    #[error("mock script: {0}")]
    Script(String),
}

impl ProviderError {
    /// Whether a retry could plausibly succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ProviderError::RateLimited { .. } | ProviderError::Http(_)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

/// One chat-completion call.
///
/// `task` is a routing key for the scripted mock (which conversation this
/// request belongs to); HTTP dialects ignore it.
#[derive(Clone, Debug, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub task: Option<String>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            model: model.into(),
            messages,
            temperature: 1.0,
            max_output_tokens: 4096,
            task: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_task(mut self, task: impl Into<String>) -> Self {
        self.task = Some(task.into());
        self
    }

    /// Validate the message-sequence invariants before any network call.
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidRequest("messages are empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        let mut expecting = Role::User;
        for (i, m) in self.messages.iter().enumerate() {
            if m.content.is_empty() {
                return Err(ProviderError::InvalidRequest(format!(
                    "message {i} has empty content"
                )));
            }
            match m.role {
                Role::System if i == 0 => continue,
                Role::System => {
                    return Err(ProviderError::InvalidRequest(format!(
                        "system message at position {i} (only leading allowed)"
                    )));
                }
                role => {
                    if role != expecting {
                        return Err(ProviderError::InvalidRequest(format!(
                            "message {i} breaks user/assistant alternation"
                        )));
                    }
                    expecting = if role == Role::User { Role::Assistant } else { Role::User };
                }
            }
        }
        if self.messages.last().map(|m| m.role) != Some(Role::User) {
            return Err(ProviderError::InvalidRequest(
                "last message must be from the user".into(),
            ));
        }
        Ok(())
    }

    /// Number of assistant messages already in the conversation; the mock
    /// uses this as the turn index.
    pub fn assistant_turns(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::Assistant).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Per-model usage totals; attempts count failed tries, tokens only
/// successful calls.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub calls: u64,
    pub attempts: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub per_model: BTreeMap<String, ModelUsage>,
}

impl UsageLedger {
    pub fn record_success(&mut self, model: &str, response: &ChatResponse, attempts: u64) {
        let e = self.per_model.entry(model.to_string()).or_default();
        e.prompt_tokens += response.prompt_tokens;
        e.completion_tokens += response.completion_tokens;
        e.calls += 1;
        e.attempts += attempts;
    }

    pub fn record_failure(&mut self, model: &str, attempts: u64) {
        let e = self.per_model.entry(model.to_string()).or_default();
        e.attempts += attempts;
    }

    pub fn total_calls(&self) -> u64 {
        self.per_model.values().map(|u| u.calls).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    OpenaiCompatible,
    AnthropicCompatible,
    Mock,
}

/// Connection, pricing, and rate-limit settings for one provider.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub dialect: Dialect,
    /// Model id placed in requests built from this config.
    pub model: String,
    /// Base URL, e.g. "https://api.openai.com/v1" (HTTP dialects only).
    #[serde(default)]
    pub endpoint: String,
    /// Environment variable holding the API key (HTTP dialects only).
    #[serde(default)]
    pub credential_env_var: Option<String>,
    /// Path to the script fixture (mock dialect only).
    #[serde(default)]
    pub script_path: Option<String>,
    /// USD per 1000 prompt tokens, as an exact decimal string.
    #[serde(default = "decimal_zero", with = "decimal_string")]
    pub price_per_1k_prompt: Decimal,
    /// USD per 1000 completion tokens, as an exact decimal string.
    #[serde(default = "decimal_zero", with = "decimal_string")]
    pub price_per_1k_completion: Decimal,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    /// Base backoff in milliseconds; attempt d sleeps `backoff << d` plus
    /// seeded jitter in [0, backoff).
    #[serde(default)]
    pub retry_backoff_ms: u64,
    /// Seed for the jitter stream (timing only, never content).
    #[serde(default)]
    pub jitter_seed: u64,
}

/// Serialize decimals as strings so config files stay exact.
mod decimal_string {
    use rust_decimal::Decimal;
    use serde::{Deserialize, Deserializer, Serializer};
    use std::str::FromStr;

    pub fn serialize<S: Serializer>(d: &Decimal, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&d.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Decimal, D::Error> {
        let raw = String::deserialize(d)?;
        Decimal::from_str(&raw).map_err(serde::de::Error::custom)
    }
}

fn default_max_concurrent() -> usize {
    4
}

fn default_retry_limit() -> u32 {
    3
}

fn decimal_zero() -> Decimal {
    Decimal::ZERO
}

impl ProviderConfig {
    /// A mock-dialect config with zero prices and no backoff.
    pub fn mock(model: impl Into<String>) -> Self {
        ProviderConfig {
            dialect: Dialect::Mock,
            model: model.into(),
            endpoint: String::new(),
            credential_env_var: None,
            script_path: None,
            price_per_1k_prompt: Decimal::ZERO,
            price_per_1k_completion: Decimal::ZERO,
            max_concurrent: 8,
            retry_limit: 3,
            retry_backoff_ms: 0,
            jitter_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.max_concurrent < 1 {
            return Err(ProviderError::InvalidRequest(
                "max_concurrent must be >= 1".into(),
            ));
        }
        if self.price_per_1k_prompt < Decimal::ZERO
            || self.price_per_1k_completion < Decimal::ZERO
        {
            return Err(ProviderError::InvalidRequest("negative price".into()));
        }
        if self.dialect != Dialect::Mock && self.endpoint.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "endpoint required for HTTP dialects".into(),
            ));
        }
        Ok(())
    }
}

/// Exact cost of a ledger under a config's prices:
/// Σ over models of prompt/1000·price_prompt + completion/1000·price_completion.
pub fn estimate_cost(ledger: &UsageLedger, config: &ProviderConfig) -> Decimal {
    let thousand = Decimal::from(1000);
    ledger
        .per_model
        .values()
        .map(|u| {
            Decimal::from(u.prompt_tokens) / thousand * config.price_per_1k_prompt
                + Decimal::from(u.completion_tokens) / thousand
                    * config.price_per_1k_completion
        })
        .sum()
}

/// A chat-completion backend. Implementations are thread-safe and enforce
/// their own concurrency bound.
pub trait Provider: Send + Sync {
    fn complete_chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;

    /// Snapshot of the usage ledger.
    fn ledger(&self) -> UsageLedger;

    /// Model id requests should carry by default.
    fn model(&self) -> &str;
}

/// Counting semaphore bounding in-flight requests per provider.
pub(crate) struct Gate {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    pub(crate) fn new(permits: usize) -> Self {
        Gate { permits: Mutex::new(permits), cv: Condvar::new() }
    }

    pub(crate) fn acquire(&self) -> GatePermit<'_> {
        let mut n = self.permits.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
        GatePermit { gate: self }
    }
}

pub(crate) struct GatePermit<'a> {
    gate: &'a Gate,
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.gate.permits.lock().unwrap() += 1;
        self.gate.cv.notify_one();
    }
}
