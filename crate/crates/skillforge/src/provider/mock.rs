//! Deterministic scripted provider for offline tests.
//!
//! A script maps a task id to an ordered list of canned assistant replies.
//! The reply for a request is chosen by `(task, turn)` where turn is the
//! number of assistant messages already in the request — so the mock is a
//! pure function of the script and the request, independent of call order
//! across threads. Simulated failures are pure too: a reply with
//! `fail_first = f` rejects attempts 0..f of that turn with a rate limit,
//! then succeeds.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::AtomicU64;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::http::run_with_retries;
use super::{
    ChatRequest, ChatResponse, FinishReason, Gate, Provider, ProviderConfig, ProviderError,
    UsageLedger,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MockReply {
    pub content: String,
    #[serde(default = "default_finish")]
    pub finish_reason: FinishReason,
    /// Override for prompt tokens; default is ceil(request chars / 4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    /// Override for completion tokens; default is ceil(content chars / 4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
    /// Number of leading attempts that fail with a rate limit.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub fail_first: u32,
}

fn default_finish() -> FinishReason {
    FinishReason::Stop
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

impl MockReply {
    pub fn text(content: impl Into<String>) -> Self {
        MockReply {
            content: content.into(),
            finish_reason: FinishReason::Stop,
            prompt_tokens: None,
            completion_tokens: None,
            fail_first: 0,
        }
    }

    /// A reply cut off by the token limit.
    pub fn truncated(content: impl Into<String>) -> Self {
        MockReply { finish_reason: FinishReason::Length, ..MockReply::text(content) }
    }

    pub fn failing_first(mut self, attempts: u32) -> Self {
        self.fail_first = attempts;
        self
    }

    pub fn with_usage(mut self, prompt: u64, completion: u64) -> Self {
        self.prompt_tokens = Some(prompt);
        self.completion_tokens = Some(completion);
        self
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default = "default_version")]
    pub version: u32,
    /// Replies per task id, indexed by conversation turn.
    #[serde(default)]
    pub tasks: BTreeMap<String, Vec<MockReply>>,
    /// Fallback replies for requests whose task is absent from `tasks`.
    #[serde(default)]
    pub default: Vec<MockReply>,
}

fn default_version() -> u32 {
    1
}

impl MockScript {
    pub fn new() -> Self {
        MockScript { version: 1, tasks: BTreeMap::new(), default: Vec::new() }
    }

    pub fn with_task(mut self, task: impl Into<String>, replies: Vec<MockReply>) -> Self {
        self.tasks.insert(task.into(), replies);
        self
    }

    pub fn with_default(mut self, replies: Vec<MockReply>) -> Self {
        self.default = replies;
        self
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| {
            ProviderError::Script(format!("{}: {e}", path.as_ref().display()))
        })?;
        let script: MockScript = serde_json::from_slice(&bytes)
            .map_err(|e| ProviderError::Script(format!("parse: {e}")))?;
        if script.version != 1 {
            return Err(ProviderError::Script(format!(
                "unsupported script version {}",
                script.version
            )));
        }
        Ok(script)
    }
}

fn ceil_div4(chars: usize) -> u64 {
    (chars as u64 + 3) / 4
}

pub struct MockProvider {
    script: MockScript,
    config: ProviderConfig,
    ledger: Mutex<UsageLedger>,
    gate: Gate,
    call_seq: AtomicU64,
}

impl MockProvider {
    pub fn new(script: MockScript, config: ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        let gate = Gate::new(config.max_concurrent);
        Ok(MockProvider {
            script,
            config,
            ledger: Mutex::new(UsageLedger::default()),
            gate,
            call_seq: AtomicU64::new(0),
        })
    }

    /// Convenience constructor with a default mock config.
    pub fn with_script(script: MockScript) -> Self {
        MockProvider::new(script, ProviderConfig::mock("mock-model")).expect("valid config")
    }

    fn reply_for(&self, request: &ChatRequest) -> Result<&MockReply, ProviderError> {
        let (label, replies) = match request.task.as_deref() {
            Some(t) if self.script.tasks.contains_key(t) => (t, &self.script.tasks[t]),
            Some(t) if self.script.default.is_empty() => {
                return Err(ProviderError::Script(format!("no script for task {t:?}")));
            }
            None if self.script.default.is_empty() => {
                return Err(ProviderError::Script("no default script".into()));
            }
            _ => ("default", &self.script.default),
        };
        let turn = request.assistant_turns();
        replies.get(turn).ok_or_else(|| {
            ProviderError::Script(format!("script {label:?} exhausted at turn {turn}"))
        })
    }
}

impl Provider for MockProvider {
    fn complete_chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let reply = self.reply_for(request)?;
        let request_chars: usize = request.messages.iter().map(|m| m.content.chars().count()).sum();
        let response = ChatResponse {
            content: reply.content.clone(),
            finish_reason: reply.finish_reason,
            prompt_tokens: reply.prompt_tokens.unwrap_or_else(|| ceil_div4(request_chars)),
            completion_tokens: reply
                .completion_tokens
                .unwrap_or_else(|| ceil_div4(reply.content.chars().count())),
        };
        let _permit = self.gate.acquire();
        run_with_retries(
            &self.config,
            &request.model,
            &self.ledger,
            &self.call_seq,
            |attempt| {
                if attempt < reply.fail_first {
                    Err(ProviderError::RateLimited { attempts: 1 })
                } else {
                    Ok(response.clone())
                }
            },
        )
    }

    fn ledger(&self) -> UsageLedger {
        self.ledger.lock().unwrap().clone()
    }

    fn model(&self) -> &str {
        &self.config.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ChatMessage;

    fn req(task: &str, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest::new("mock-model", messages).with_task(task)
    }

    #[test]
    fn scripted_hello() {
        let p = MockProvider::with_script(
            MockScript::new().with_task("t", vec![MockReply::text("hello")]),
        );
        let resp = p.complete_chat(&req("t", vec![ChatMessage::user("hi")])).unwrap();
        assert_eq!(resp.content, "hello");
        assert_eq!(resp.finish_reason, FinishReason::Stop);
    }

    #[test]
    fn turn_index_is_assistant_count() {
        let p = MockProvider::with_script(MockScript::new().with_task(
            "t",
            vec![MockReply::text("first"), MockReply::text("second")],
        ));
        let r1 = p.complete_chat(&req("t", vec![ChatMessage::user("a")])).unwrap();
        assert_eq!(r1.content, "first");
        let r2 = p
            .complete_chat(&req(
                "t",
                vec![
                    ChatMessage::user("a"),
                    ChatMessage::assistant("first"),
                    ChatMessage::user("b"),
                ],
            ))
            .unwrap();
        assert_eq!(r2.content, "second");
        // Replaying the first request returns the first reply again: the mock
        // is a pure function of the request.
        let r1_again = p.complete_chat(&req("t", vec![ChatMessage::user("a")])).unwrap();
        assert_eq!(r1_again.content, "first");
    }

    #[test]
    fn rate_limit_injection_respects_retry_budget() {
        let p = MockProvider::with_script(MockScript::new().with_task(
            "t",
            vec![MockReply::text("eventually").failing_first(2)],
        ));
        let resp = p.complete_chat(&req("t", vec![ChatMessage::user("x")])).unwrap();
        assert_eq!(resp.content, "eventually");
        assert_eq!(p.ledger().per_model["mock-model"].attempts, 3);
        assert_eq!(p.ledger().per_model["mock-model"].calls, 1);
    }

    #[test]
    fn rate_limit_exhaustion_fails() {
        let mut config = ProviderConfig::mock("mock-model");
        config.retry_limit = 1;
        let p = MockProvider::new(
            MockScript::new().with_task("t", vec![MockReply::text("never").failing_first(5)]),
            config,
        )
        .unwrap();
        let err = p.complete_chat(&req("t", vec![ChatMessage::user("x")])).unwrap_err();
        assert!(matches!(err, ProviderError::RateLimited { attempts: 2 }));
        assert_eq!(p.ledger().per_model["mock-model"].calls, 0);
    }

    #[test]
    fn default_replies_serve_unknown_tasks() {
        let p = MockProvider::with_script(
            MockScript::new().with_default(vec![MockReply::text("fallback")]),
        );
        let resp = p.complete_chat(&req("unknown", vec![ChatMessage::user("x")])).unwrap();
        assert_eq!(resp.content, "fallback");
        let no_task = ChatRequest::new("mock-model", vec![ChatMessage::user("x")]);
        assert_eq!(p.complete_chat(&no_task).unwrap().content, "fallback");
    }

    #[test]
    fn missing_script_is_an_error() {
        let p = MockProvider::with_script(MockScript::new());
        let err = p.complete_chat(&req("t", vec![ChatMessage::user("x")])).unwrap_err();
        assert!(matches!(err, ProviderError::Script(_)));
    }

    #[test]
    fn exhausted_script_is_an_error() {
        let p = MockProvider::with_script(
            MockScript::new().with_task("t", vec![MockReply::text("only")]),
        );
        let deep = req(
            "t",
            vec![
                ChatMessage::user("a"),
                ChatMessage::assistant("only"),
                ChatMessage::user("b"),
            ],
        );
        assert!(matches!(
            p.complete_chat(&deep),
            Err(ProviderError::Script(_))
        ));
    }

    #[test]
    fn default_token_accounting_is_char_based() {
        let p = MockProvider::with_script(
            MockScript::new().with_task("t", vec![MockReply::text("abcdefgh")]),
        );
        let resp = p.complete_chat(&req("t", vec![ChatMessage::user("abcde")])).unwrap();
        assert_eq!(resp.prompt_tokens, 2); // ceil(5 / 4)
        assert_eq!(resp.completion_tokens, 2); // ceil(8 / 4)
    }

    #[test]
    fn script_file_round_trip() {
        let script = MockScript::new()
            .with_task("t", vec![MockReply::truncated("cut").with_usage(10, 20)])
            .with_default(vec![MockReply::text("d")]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(&path, serde_json::to_string_pretty(&script).unwrap()).unwrap();
        let loaded = MockScript::from_file(&path).unwrap();
        assert_eq!(loaded.tasks["t"][0].content, "cut");
        assert_eq!(loaded.tasks["t"][0].finish_reason, FinishReason::Length);
        assert_eq!(loaded.tasks["t"][0].prompt_tokens, Some(10));
        assert_eq!(loaded.default[0].content, "d");
    }

    #[test]
    fn parallel_calls_are_schedule_independent() {
        let mut script = MockScript::new();
        for i in 0..16 {
            script = script.with_task(format!("t{i}"), vec![MockReply::text(format!("r{i}"))]);
        }
        let p = MockProvider::with_script(script);
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..16)
                .map(|i| {
                    let p = &p;
                    s.spawn(move || {
                        let r = p
                            .complete_chat(&req(&format!("t{i}"), vec![ChatMessage::user("x")]))
                            .unwrap();
                        assert_eq!(r.content, format!("r{i}"));
                    })
                })
                .collect();
            for h in handles {
                h.join().unwrap();
            }
        });
        assert_eq!(p.ledger().total_calls(), 16);
    }
}
