//! Anthropic-compatible messages wire format.

use serde::Deserialize;
use serde_json::json;

use super::{ChatRequest, ChatResponse, FinishReason, ProviderError, Role};

pub(crate) const PATH: &str = "/messages";
pub(crate) const API_VERSION: &str = "2023-06-01";

/// A leading system message moves to the top-level `system` field; the rest
/// stay in `messages`.
pub(crate) fn request_body(req: &ChatRequest) -> serde_json::Value {
    let (system, rest) = match req.messages.first() {
        Some(m) if m.role == Role::System => (Some(m.content.clone()), &req.messages[1..]),
        _ => (None, &req.messages[..]),
    };
    let messages: Vec<serde_json::Value> = rest
        .iter()
        .map(|m| {
            json!({
                "role": if m.role == Role::User { "user" } else { "assistant" },
                "content": m.content,
            })
        })
        .collect();
    let mut body = json!({
        "model": req.model,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_output_tokens,
    });
    if let Some(system) = system {
        body["system"] = json!(system);
    }
    body
}

#[derive(Deserialize)]
struct Reply {
    content: Vec<Block>,
    #[serde(default)]
    stop_reason: Option<String>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Block {
    #[serde(default)]
    text: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    input_tokens: u64,
    #[serde(default)]
    output_tokens: u64,
}

pub(crate) fn parse_response(body: &[u8]) -> Result<ChatResponse, ProviderError> {
    let reply: Reply = serde_json::from_slice(body)
        .map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
    let content = reply
        .content
        .into_iter()
        .next()
        .and_then(|b| b.text)
        .ok_or_else(|| ProviderError::MalformedResponse("no text block".into()))?;
    let finish_reason = match reply.stop_reason.as_deref() {
        Some("end_turn") | Some("stop_sequence") | None => FinishReason::Stop,
        Some("max_tokens") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    let usage = reply.usage.unwrap_or(Usage { input_tokens: 0, output_tokens: 0 });
    Ok(ChatResponse {
        content,
        finish_reason,
        prompt_tokens: usage.input_tokens,
        completion_tokens: usage.output_tokens,
    })
}
