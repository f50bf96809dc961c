//! The five-prompt generate/critique/refine conversation for one skill tuple.
//!
//! Prompt 1 asks the teacher for an (instruction, response) pair exercising
//! the tuple's skills; prompt 2 fires only when that reply was cut off;
//! prompt 3 asks for a critique (never parsed into fields); prompt 4 asks for
//! a refinement; prompt 5 fires only when the refined reply was cut off. The
//! final assistant turn is parsed by marker into the example's fields.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Mode, SkillCatalog};
use crate::mixer::SkillTuple;
use crate::pool;
use crate::provider::{
    ChatMessage, ChatRequest, ChatResponse, FinishReason, Provider, ProviderError,
};
use crate::template::{self, templates, TemplateError};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("task {task_index} abandoned: {reason}")]
    Abandoned { task_index: u64, reason: String },
}

/// How a cut-off reply is recognized.
///
/// `FinishReasonOnly` trusts the provider's finish reason. The heuristic
/// variant additionally flags replies that stop without terminal punctuation
/// (heuristic v1, see [`TERMINAL_CHARS_V1`]), for providers whose finish
/// reasons are unreliable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationPolicy {
    FinishReasonOnly,
    FinishReasonOrHeuristic,
}

/// Heuristic v1 terminal characters: a trimmed reply ending in one of these
/// is considered complete. Colons are deliberately excluded — a reply ending
/// ":" is usually an interrupted list header.
pub const TERMINAL_CHARS_V1: &[char] =
    &['.', '!', '?', '…', '"', '\'', ')', ']', '}', '`', '*', '_'];

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub max_parse_retries: u32,
    pub truncation_policy: TruncationPolicy,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            temperature: 1.0,
            max_output_tokens: 4096,
            max_parse_retries: 1,
            truncation_policy: TruncationPolicy::FinishReasonOnly,
        }
    }
}

/// Token usage for one assistant turn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// The persisted conversation for one task: the full alternating message
/// list, per-assistant-turn usage, and protocol flags.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConversationTranscript {
    pub id: String,
    pub task_index: u64,
    pub messages: Vec<ChatMessage>,
    pub usage: Vec<TurnUsage>,
    pub truncation_fix_applied: u32,
    pub critique_applied: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedExample {
    pub id: String,
    pub instruction: String,
    pub response: String,
    pub skills: Vec<String>,
    pub query_type: Option<String>,
    pub mode: Mode,
    pub k: usize,
    pub teacher: String,
    pub transcript_ref: String,
    pub refined: bool,
}

const INSTRUCTION_MARKER: &str = "### Instruction:";
const RESPONSE_MARKER: &str = "### Response:";

const PARSE_RETRY_PROMPT: &str = "I could not locate the final example in your last reply. \
Please restate the complete final example now, exactly in this format and nothing else:\n\n\
### Instruction: <the full instruction>\n### Response: <the full response>";

/// Render Prompt 1 for a tuple under the catalog's mode.
pub fn render_prompt1(catalog: &SkillCatalog, tuple: &SkillTuple) -> Result<String, GeneratorError> {
    let known = catalog.skill_names();
    for s in &tuple.skills {
        if !known.contains(&s.as_str()) {
            return Err(GeneratorError::Invalid(format!("skill {s:?} not in catalog")));
        }
    }
    let num_skills = tuple.skills.len().to_string();
    let skills_str = tuple.skills.join(", ");
    match catalog.mode {
        Mode::Sdd => Ok(template::render(
            templates::SDD_GENERATE_V1,
            &[("num_skills", &num_skills), ("skills_str", &skills_str)],
        )?),
        Mode::Sda => {
            let qt_name = tuple.query_type.as_deref().ok_or_else(|| {
                GeneratorError::Invalid("sda tuple is missing a query type".into())
            })?;
            let qt = catalog
                .query_types
                .iter()
                .find(|q| q.name == qt_name)
                .ok_or_else(|| {
                    GeneratorError::Invalid(format!("query type {qt_name:?} not in catalog"))
                })?;
            let described = format!("{}: {}", qt.name, qt.description);
            Ok(template::render(
                templates::SDA_GENERATE_V1,
                &[
                    ("num_skills", &num_skills),
                    ("query_type", &described),
                    ("query_str", &qt.name),
                    ("skills_str", &skills_str),
                ],
            )?)
        }
    }
}

/// Decide whether a reply was cut off under the given policy.
pub fn detect_truncation(response: &ChatResponse, policy: TruncationPolicy) -> bool {
    if response.finish_reason == FinishReason::Length {
        return true;
    }
    match policy {
        TruncationPolicy::FinishReasonOnly => false,
        TruncationPolicy::FinishReasonOrHeuristic => {
            let trimmed = response.content.trim_end();
            match trimmed.chars().last() {
                Some(c) => !TERMINAL_CHARS_V1.contains(&c),
                None => true,
            }
        }
    }
}

/// Extract (instruction, response) from a final assistant turn.
///
/// The LAST occurrence of each marker wins: refined replies sometimes restate
/// the pair, and the restatement is the authoritative one.
pub fn parse_example(final_text: &str) -> Result<(String, String), GeneratorError> {
    let resp_at = final_text
        .rfind(RESPONSE_MARKER)
        .ok_or_else(|| GeneratorError::Parse(format!("missing {RESPONSE_MARKER:?} marker")))?;
    let before = &final_text[..resp_at];
    let instr_at = before
        .rfind(INSTRUCTION_MARKER)
        .ok_or_else(|| GeneratorError::Parse(format!("missing {INSTRUCTION_MARKER:?} marker")))?;
    let instruction = before[instr_at + INSTRUCTION_MARKER.len()..].trim();
    let response = final_text[resp_at + RESPONSE_MARKER.len()..].trim();
    if instruction.is_empty() {
        return Err(GeneratorError::Parse("empty instruction section".into()));
    }
    if response.is_empty() {
        return Err(GeneratorError::Parse("empty response section".into()));
    }
    Ok((instruction.to_string(), response.to_string()))
}

struct Conversation<'a> {
    provider: &'a dyn Provider,
    config: &'a GenerationConfig,
    task_key: String,
    messages: Vec<ChatMessage>,
    usage: Vec<TurnUsage>,
}

impl<'a> Conversation<'a> {
    /// Append a user turn, call the provider, append and return the reply.
    fn ask(&mut self, user_text: &str, temperature: f64) -> Result<ChatResponse, ProviderError> {
        self.messages.push(ChatMessage::user(user_text));
        let request = ChatRequest {
            model: self.provider.model().to_string(),
            messages: self.messages.clone(),
            temperature,
            max_output_tokens: self.config.max_output_tokens,
            task: Some(self.task_key.clone()),
        };
        let response = self.provider.complete_chat(&request)?;
        self.messages.push(ChatMessage::assistant(&response.content));
        self.usage.push(TurnUsage {
            prompt_tokens: response.prompt_tokens,
            completion_tokens: response.completion_tokens,
        });
        Ok(response)
    }
}

/// Run the full protocol for one tuple and parse the final turn.
pub fn run_protocol(
    catalog: &SkillCatalog,
    tuple: &SkillTuple,
    provider: &dyn Provider,
    config: &GenerationConfig,
    run_id: &str,
) -> Result<(GeneratedExample, ConversationTranscript), GeneratorError> {
    let prompt1 = render_prompt1(catalog, tuple)?;
    let mut conv = Conversation {
        provider,
        config,
        task_key: format!("task-{:05}", tuple.task_index),
        messages: Vec::new(),
        usage: Vec::new(),
    };
    let mut truncation_fix_applied = 0u32;

    let first = conv.ask(&prompt1, config.temperature)?;
    if detect_truncation(&first, config.truncation_policy) {
        conv.ask(templates::TRUNCATION_FIX_V1, config.temperature)?;
        truncation_fix_applied += 1;
    }
    conv.ask(templates::CRITIQUE_V1, config.temperature)?;
    let mut reply = conv.ask(templates::REFINE_V1, config.temperature)?;
    if detect_truncation(&reply, config.truncation_policy) {
        reply = conv.ask(templates::TRUNCATION_FIX_REFINED_V1, config.temperature)?;
        truncation_fix_applied += 1;
    }

    let mut parsed = parse_example(&reply.content);
    let mut retries = 0;
    while parsed.is_err() && retries < config.max_parse_retries {
        // Parsing-critical repair turn: temperature pinned to 0.
        reply = conv.ask(PARSE_RETRY_PROMPT, 0.0)?;
        parsed = parse_example(&reply.content);
        retries += 1;
    }
    let (instruction, response) = parsed.map_err(|e| GeneratorError::Abandoned {
        task_index: tuple.task_index,
        reason: e.to_string(),
    })?;

    let id = format!("{run_id}-{:05}", tuple.task_index);
    let example = GeneratedExample {
        id: id.clone(),
        instruction,
        response,
        skills: tuple.skills.clone(),
        query_type: tuple.query_type.clone(),
        mode: catalog.mode,
        k: tuple.skills.len(),
        teacher: provider.model().to_string(),
        transcript_ref: id.clone(),
        refined: true,
    };
    let transcript = ConversationTranscript {
        id,
        task_index: tuple.task_index,
        messages: conv.messages,
        usage: conv.usage,
        truncation_fix_applied,
        critique_applied: true,
    };
    Ok((example, transcript))
}

/// A task skipped after parse retries were exhausted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbandonedTask {
    pub task_index: u64,
    pub reason: String,
}

/// The outcome of a generation run over many tuples.
#[derive(Clone, Debug)]
pub struct GenerationRun {
    pub examples: Vec<GeneratedExample>,
    pub transcripts: Vec<ConversationTranscript>,
    pub abandoned: Vec<AbandonedTask>,
}

/// Generate examples for every tuple, `workers` conversations at a time.
///
/// Abandoned tasks are logged and skipped; provider failures abort the run.
/// Output order follows the tuple order regardless of worker count.
pub fn run_generation(
    catalog: &SkillCatalog,
    tuples: &[SkillTuple],
    provider: &dyn Provider,
    config: &GenerationConfig,
    run_id: &str,
    workers: usize,
) -> Result<GenerationRun, GeneratorError> {
    let results = pool::parallel_map(tuples, workers, |_, tuple| {
        run_protocol(catalog, tuple, provider, config, run_id)
    });
    let mut run = GenerationRun {
        examples: Vec::with_capacity(tuples.len()),
        transcripts: Vec::with_capacity(tuples.len()),
        abandoned: Vec::new(),
    };
    for result in results {
        match result {
            Ok((example, transcript)) => {
                run.examples.push(example);
                run.transcripts.push(transcript);
            }
            Err(GeneratorError::Abandoned { task_index, reason }) => {
                log::warn!("task {task_index} abandoned: {reason}");
                run.abandoned.push(AbandonedTask { task_index, reason });
            }
            Err(other) => return Err(other),
        }
    }
    Ok(run)
}
