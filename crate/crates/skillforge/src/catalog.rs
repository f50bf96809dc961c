//! Skill catalogs: build, validate, persist, and load.
//!
//! Two extraction pipelines fill a catalog. SDD labels existing seed examples
//! with skills and then clusters the labels semantically; the cluster names
//! become the catalog's skills. SDA asks the teacher directly for topics,
//! extrapolates skills per topic, and collects query types.
//!
//! Catalog files derived from published tables are stored verbatim as ordered
//! lists (counts equal list lengths, including the source tables' duplicate
//! rows); deduplication applies when assembling catalogs from live extraction
//! replies.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pool::parallel_map;
use crate::provider::{ChatMessage, ChatRequest, Provider, ProviderError};
use crate::template::{render, templates};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("io: {0}")]
    Io(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("clustering left {} skill(s) unassigned: {}", orphans.len(), orphans.join(", "))]
    Coverage { orphans: Vec<String> },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Which extraction pipeline produced a skill or catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sda,
    Sdd,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Sda => "sda",
            Mode::Sdd => "sdd",
        })
    }
}

/// Strict snake_case: lowercase alphanumeric words joined by single
/// underscores. Required for names produced by live extraction.
pub fn is_strict_snake_case(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('_')
        && !name.ends_with('_')
        && !name.contains("__")
        && name.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Relaxed identifier: what catalog files may carry. The published source
/// tables contain two topic names with parentheses and a hyphen, so loading
/// accepts those characters while live extraction stays strict.
pub fn is_valid_identifier(name: &str) -> bool {
    !name.is_empty()
        && name.chars().next().is_some_and(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
        && name
            .chars()
            .all(|c| {
                c.is_ascii_lowercase()
                    || c.is_ascii_digit()
                    || matches!(c, '_' | '-' | '(' | ')')
            })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skill {
    pub name: String,
    pub source: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryType {
    pub name: String,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillCluster {
    pub name: String,
    pub members: Vec<String>,
    pub rationale: String,
}

pub const CATALOG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillCatalog {
    pub version: u32,
    pub mode: Mode,
    pub teacher: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_at: Option<String>,
    #[serde(default)]
    pub topics: Vec<String>,
    #[serde(default)]
    pub query_types: Vec<QueryType>,
    pub skills: Vec<Skill>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<SkillCluster>,
}

impl SkillCatalog {
    pub fn skill_names(&self) -> Vec<&str> {
        self.skills.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.version != CATALOG_VERSION {
            return Err(CatalogError::Schema(format!(
                "unsupported catalog version {} (expected {CATALOG_VERSION})",
                self.version
            )));
        }
        if self.teacher.is_empty() {
            return Err(CatalogError::Validation("empty teacher id".into()));
        }
        for s in &self.skills {
            if !is_valid_identifier(&s.name) {
                return Err(CatalogError::Validation(format!(
                    "invalid skill name {:?}",
                    s.name
                )));
            }
        }
        for t in &self.topics {
            if !is_valid_identifier(t) {
                return Err(CatalogError::Validation(format!("invalid topic name {t:?}")));
            }
        }
        let mut qt_names = BTreeSet::new();
        for q in &self.query_types {
            if q.name.trim().is_empty() || q.description.trim().is_empty() {
                return Err(CatalogError::Validation(format!(
                    "query type {:?} needs a name and a description",
                    q.name
                )));
            }
            if !qt_names.insert(q.name.as_str()) {
                return Err(CatalogError::Validation(format!(
                    "duplicate query type name {:?}",
                    q.name
                )));
            }
        }
        if self.mode == Mode::Sda && self.query_types.is_empty() {
            return Err(CatalogError::Validation(
                "sda catalogs need at least one query type".into(),
            ));
        }
        for c in &self.clusters {
            if !is_valid_identifier(&c.name) {
                return Err(CatalogError::Validation(format!(
                    "invalid cluster name {:?}",
                    c.name
                )));
            }
            if c.members.is_empty() {
                return Err(CatalogError::Validation(format!(
                    "cluster {:?} has no members",
                    c.name
                )));
            }
        }
        Ok(())
    }
}

pub fn save_catalog(catalog: &SkillCatalog, path: impl AsRef<Path>) -> Result<(), CatalogError> {
    catalog.validate()?;
    let json = serde_json::to_string_pretty(catalog)
        .map_err(|e| CatalogError::Schema(e.to_string()))?;
    std::fs::write(path.as_ref(), json + "\n")
        .map_err(|e| CatalogError::Io(format!("{}: {e}", path.as_ref().display())))
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<SkillCatalog, CatalogError> {
    let bytes = std::fs::read(path.as_ref())
        .map_err(|e| CatalogError::Io(format!("{}: {e}", path.as_ref().display())))?;
    let catalog: SkillCatalog =
        serde_json::from_slice(&bytes).map_err(|e| CatalogError::Schema(e.to_string()))?;
    catalog.validate()?;
    Ok(catalog)
}

// ---------------------------------------------------------------------------
// SDD pipeline
// ---------------------------------------------------------------------------

/// Label one seed example with the skill it requires.
///
/// `task` routes the call in mock scripts. The reply must have the shape
/// `<name of the skill>, reason: <reason for the skill>`; one reminder turn is
/// allowed before giving up. A reply with the right shape but an invalid name
/// fails immediately.
pub fn label_skill_sdd(
    example_text: &str,
    provider: &dyn Provider,
    task: &str,
) -> Result<(String, String), CatalogError> {
    if example_text.trim().is_empty() {
        return Err(CatalogError::Validation("empty example text".into()));
    }
    let prompt = render(templates::SDD_LABEL_V1, &[("text", example_text)])
        .expect("label template placeholders");
    let mut messages = vec![ChatMessage::user(prompt)];
    let request = ChatRequest::new(provider.model(), messages.clone())
        .with_temperature(0.0)
        .with_task(task);
    let reply = provider.complete_chat(&request)?;
    match parse_label(&reply.content) {
        Some((name, reason)) => validate_label(name, reason),
        None => {
            messages.push(ChatMessage::assistant(reply.content));
            messages.push(ChatMessage::user(
                "Please answer exactly in the form: <name of the skill>, reason: <reason for the skill>",
            ));
            let retry_request = ChatRequest::new(provider.model(), messages)
                .with_temperature(0.0)
                .with_task(task);
            let retry = provider.complete_chat(&retry_request)?;
            match parse_label(&retry.content) {
                Some((name, reason)) => validate_label(name, reason),
                None => Err(CatalogError::Parse(format!(
                    "label reply lacks \", reason:\" shape: {:?}",
                    truncate_for_error(&retry.content)
                ))),
            }
        }
    }
}

fn parse_label(reply: &str) -> Option<(&str, &str)> {
    let (name, reason) = reply.trim().split_once(", reason:")?;
    Some((name.trim(), reason.trim()))
}

fn validate_label(name: &str, reason: &str) -> Result<(String, String), CatalogError> {
    let name = name.trim_matches(|c| matches!(c, '`' | '"' | '\'')).trim();
    if !is_strict_snake_case(name) {
        return Err(CatalogError::Validation(format!(
            "skill name {name:?} is not snake_case"
        )));
    }
    Ok((name.to_string(), reason.to_string()))
}

fn truncate_for_error(s: &str) -> String {
    s.chars().take(120).collect()
}

/// Label a batch of seed examples concurrently (tasks `label-00000`, ...).
pub fn label_examples_sdd(
    texts: &[String],
    provider: &dyn Provider,
    workers: usize,
) -> Result<Vec<(String, String)>, CatalogError> {
    let results = parallel_map(texts, workers, |i, text| {
        label_skill_sdd(text, provider, &format!("label-{i:05}"))
    });
    results.into_iter().collect()
}

/// Split skill names into clustering batches under a rough token budget
/// (4 characters ≈ 1 token). Every batch holds at least one name.
pub fn batch_skill_names(names: &[String], token_budget: usize) -> Vec<Vec<String>> {
    let mut batches = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_tokens = 0usize;
    for name in names {
        let tokens = (name.chars().count() + 2).div_ceil(4);
        if !current.is_empty() && current_tokens + tokens > token_budget {
            batches.push(std::mem::take(&mut current));
            current_tokens = 0;
        }
        current.push(name.clone());
        current_tokens += tokens;
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

/// Cluster skill names into named groups via the teacher.
///
/// Input is batched under `token_budget`; clusters with the same name merge
/// across batches. Every input skill must land in exactly one cluster:
/// unassigned skills raise [`CatalogError::Coverage`], members the teacher
/// invents are dropped with a warning, and a skill assigned twice keeps its
/// first cluster.
pub fn cluster_skills_sdd(
    skill_names: &[String],
    provider: &dyn Provider,
    token_budget: usize,
    workers: usize,
) -> Result<Vec<SkillCluster>, CatalogError> {
    if skill_names.is_empty() {
        return Err(CatalogError::Validation("no skills to cluster".into()));
    }
    let batches = batch_skill_names(skill_names, token_budget);
    let replies = parallel_map(&batches, workers, |i, batch| -> Result<String, CatalogError> {
        let prompt = render(
            templates::CLUSTER_V1,
            &[("skills_joined_str", batch.join(", ").as_str())],
        )
        .expect("cluster template placeholders");
        let request = ChatRequest::new(provider.model(), vec![ChatMessage::user(prompt)])
            .with_temperature(0.0)
            .with_task(format!("cluster-{i:03}"));
        Ok(provider.complete_chat(&request)?.content)
    });

    let known: BTreeSet<&str> = skill_names.iter().map(String::as_str).collect();
    let mut merged: Vec<SkillCluster> = Vec::new();
    let mut by_name: BTreeMap<String, usize> = BTreeMap::new();
    let mut assigned: BTreeSet<String> = BTreeSet::new();
    for reply in replies {
        for cluster in parse_clusters(&reply?)? {
            let slot = *by_name.entry(cluster.name.clone()).or_insert_with(|| {
                merged.push(SkillCluster {
                    name: cluster.name.clone(),
                    members: Vec::new(),
                    rationale: cluster.rationale.clone(),
                });
                merged.len() - 1
            });
            for member in cluster.members {
                if !known.contains(member.as_str()) {
                    log::warn!("cluster {:?} names unknown skill {member:?}; dropped", cluster.name);
                    continue;
                }
                if !assigned.insert(member.clone()) {
                    log::warn!("skill {member:?} assigned twice; keeping first cluster");
                    continue;
                }
                merged[slot].members.push(member);
            }
        }
    }
    merged.retain(|c| !c.members.is_empty());
    let orphans: Vec<String> = skill_names
        .iter()
        .filter(|n| !assigned.contains(*n))
        .cloned()
        .collect();
    if !orphans.is_empty() {
        return Err(CatalogError::Coverage { orphans });
    }
    Ok(merged)
}

/// Parse the mandated clustering reply format:
/// `- Category name: ...` / `- Included skills: a, b` / `- Rationale: ...`.
fn parse_clusters(reply: &str) -> Result<Vec<SkillCluster>, CatalogError> {
    struct Partial {
        name: String,
        members: Vec<String>,
        rationale: String,
    }
    let mut clusters: Vec<Partial> = Vec::new();
    for line in reply.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim_start();
        let lower = line.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("category name:") {
            let start = line.len() - rest.len();
            let name = line[start..]
                .trim()
                .trim_matches(|c| matches!(c, '`' | '"' | '\''))
                .to_string();
            if !is_strict_snake_case(&name) {
                return Err(CatalogError::Parse(format!(
                    "cluster name {name:?} is not snake_case"
                )));
            }
            clusters.push(Partial { name, members: Vec::new(), rationale: String::new() });
        } else if let Some(rest) = lower.strip_prefix("included skills:") {
            let start = line.len() - rest.len();
            let current = clusters.last_mut().ok_or_else(|| {
                CatalogError::Parse("included skills before any category name".into())
            })?;
            current.members.extend(
                line[start..]
                    .split(',')
                    .map(|m| m.trim().trim_matches('`').to_string())
                    .filter(|m| !m.is_empty()),
            );
        } else if let Some(rest) = lower.strip_prefix("rationale:") {
            let start = line.len() - rest.len();
            if let Some(current) = clusters.last_mut() {
                current.rationale = line[start..].trim().to_string();
            }
        } else if !line.is_empty() {
            // Continuation prose extends the open rationale; preamble before
            // the first cluster is ignored.
            if let Some(current) = clusters.last_mut() {
                if !current.rationale.is_empty() {
                    current.rationale.push(' ');
                    current.rationale.push_str(line);
                }
            }
        }
    }
    if clusters.is_empty() {
        return Err(CatalogError::Parse("no clusters in reply".into()));
    }
    for c in &clusters {
        if c.members.is_empty() {
            return Err(CatalogError::Parse(format!(
                "cluster {:?} lists no included skills",
                c.name
            )));
        }
    }
    Ok(clusters
        .into_iter()
        .map(|p| SkillCluster { name: p.name, members: p.members, rationale: p.rationale })
        .collect())
}

/// Assemble an SDD catalog from per-source cluster name lists, deduplicating
/// by first occurrence (the published lists overlap across seed datasets).
pub fn sdd_catalog_from_cluster_names<S: AsRef<str>>(
    source_lists: &[Vec<S>],
    teacher: &str,
) -> SkillCatalog {
    let mut seen = BTreeSet::new();
    let mut skills = Vec::new();
    for list in source_lists {
        for name in list {
            let name = name.as_ref();
            if seen.insert(name.to_string()) {
                skills.push(Skill { name: name.to_string(), source: Mode::Sdd, topic: None });
            }
        }
    }
    SkillCatalog {
        version: CATALOG_VERSION,
        mode: Mode::Sdd,
        teacher: teacher.to_string(),
        extracted_at: None,
        topics: Vec::new(),
        query_types: Vec::new(),
        skills,
        clusters: Vec::new(),
    }
}

/// A seeded subsample of `n` seed texts ("extract.sample" stream),
/// preserving the input's relative order. `n ≥ len` keeps everything.
pub fn subsample_seed_texts(texts: &[String], n: usize, seed: u64) -> Vec<String> {
    if n >= texts.len() {
        return texts.to_vec();
    }
    let mut indices: Vec<usize> = (0..texts.len()).collect();
    let mut shuffle_rng = crate::rng::stream(seed, "extract.sample", 0);
    crate::rng::shuffle_prefix(&mut shuffle_rng, &mut indices, n);
    let mut chosen: Vec<usize> = indices[..n].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| texts[i].clone()).collect()
}

/// Options for the end-to-end SDD extraction driver.
pub struct SddOptions {
    pub teacher: String,
    pub cluster_token_budget: usize,
    pub workers: usize,
    pub extracted_at: Option<String>,
}

impl Default for SddOptions {
    fn default() -> Self {
        SddOptions {
            teacher: String::new(),
            cluster_token_budget: 2000,
            workers: 4,
            extracted_at: None,
        }
    }
}

/// Full SDD pipeline: label every seed text, cluster the deduplicated labels,
/// and build a catalog whose skills are the cluster names.
pub fn extract_catalog_sdd(
    texts: &[String],
    provider: &dyn Provider,
    opts: &SddOptions,
) -> Result<SkillCatalog, CatalogError> {
    let labels = label_examples_sdd(texts, provider, opts.workers)?;
    let mut seen = BTreeSet::new();
    let mut label_names = Vec::new();
    for (name, _) in &labels {
        if seen.insert(name.clone()) {
            label_names.push(name.clone());
        }
    }
    let clusters =
        cluster_skills_sdd(&label_names, provider, opts.cluster_token_budget, opts.workers)?;
    let teacher = if opts.teacher.is_empty() { provider.model() } else { &opts.teacher };
    let mut catalog = sdd_catalog_from_cluster_names(
        &[clusters.iter().map(|c| c.name.clone()).collect::<Vec<_>>()],
        teacher,
    );
    catalog.extracted_at = opts.extracted_at.clone();
    catalog.clusters = clusters;
    catalog.validate()?;
    Ok(catalog)
}

// ---------------------------------------------------------------------------
// SDA pipeline
// ---------------------------------------------------------------------------

/// Parse a reply as a list of snake_case names, one per line.
///
/// Bullets and numbering are stripped; anything after a colon is treated as a
/// description and ignored; lines with internal whitespace are skipped as
/// prose. A whitespace-free candidate that still fails validation is an
/// error, so bad names surface instead of vanishing.
fn parse_snake_list(reply: &str) -> Result<Vec<String>, CatalogError> {
    let mut names = Vec::new();
    for line in reply.lines() {
        let mut item = line.trim();
        item = item.trim_start_matches(['-', '*', '•']).trim_start();
        if let Some((num, rest)) = item.split_once(['.', ')']) {
            if num.chars().all(|c| c.is_ascii_digit()) && !num.is_empty() {
                item = rest.trim_start();
            }
        }
        if let Some((head, _)) = item.split_once(':') {
            item = head.trim_end();
        }
        let item = item.trim().trim_matches('`');
        if item.is_empty() {
            continue;
        }
        if item.chars().any(char::is_whitespace) {
            continue; // prose line
        }
        if !is_strict_snake_case(item) {
            return Err(CatalogError::Parse(format!(
                "{item:?} is not a snake_case name"
            )));
        }
        names.push(item.to_string());
    }
    Ok(names)
}

fn dedup_keep_first(names: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    names.into_iter().filter(|n| seen.insert(n.clone())).collect()
}

/// Ask the teacher for conversation topics (task `topics`).
pub fn extract_topics_sda(provider: &dyn Provider) -> Result<Vec<String>, CatalogError> {
    let request = ChatRequest::new(
        provider.model(),
        vec![ChatMessage::user(templates::SDA_TOPICS_V1)],
    )
    .with_temperature(0.0)
    .with_task("topics");
    let reply = provider.complete_chat(&request)?;
    let topics = dedup_keep_first(parse_snake_list(&reply.content)?);
    if topics.is_empty() {
        return Err(CatalogError::Parse("no topics parsed from reply".into()));
    }
    Ok(topics)
}

/// Extrapolate skills for one topic (task `skills-<topic>`).
///
/// An empty reply is allowed (logged), matching teachers that decline narrow
/// topics.
pub fn extract_skills_for_topic_sda(
    topic: &str,
    provider: &dyn Provider,
) -> Result<Vec<Skill>, CatalogError> {
    let prompt = render(templates::SDA_EXTRAPOLATE_V1, &[("topic", topic)])
        .expect("extrapolate template placeholders");
    let request = ChatRequest::new(provider.model(), vec![ChatMessage::user(prompt)])
        .with_temperature(0.0)
        .with_task(format!("skills-{topic}"));
    let reply = provider.complete_chat(&request)?;
    let names = dedup_keep_first(parse_snake_list(&reply.content)?);
    if names.is_empty() {
        log::warn!("no skills parsed for topic {topic:?}");
    }
    Ok(names
        .into_iter()
        .map(|name| Skill { name, source: Mode::Sda, topic: Some(topic.to_string()) })
        .collect())
}

/// Ask the teacher for query/task types (task `query-types`).
pub fn extract_query_types_sda(provider: &dyn Provider) -> Result<Vec<QueryType>, CatalogError> {
    let request = ChatRequest::new(
        provider.model(),
        vec![ChatMessage::user(templates::SDA_QUERY_TYPES_V1)],
    )
    .with_temperature(0.0)
    .with_task("query-types");
    let reply = provider.complete_chat(&request)?;
    let mut out: Vec<QueryType> = Vec::new();
    let mut seen = BTreeSet::new();
    for line in reply.content.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim_start();
        let Some((name, description)) = line.split_once(':') else {
            continue; // prose line
        };
        let name = name.trim();
        let description = description.trim();
        if name.is_empty() || description.is_empty() {
            return Err(CatalogError::Parse(format!(
                "query type line needs \"Name: description\": {line:?}"
            )));
        }
        if !seen.insert(name.to_string()) {
            log::warn!("duplicate query type {name:?}; keeping first");
            continue;
        }
        out.push(QueryType { name: name.to_string(), description: description.to_string() });
    }
    if out.is_empty() {
        return Err(CatalogError::Parse("no query types parsed from reply".into()));
    }
    Ok(out)
}

/// Options for the end-to-end SDA extraction driver.
pub struct SdaOptions {
    pub teacher: String,
    pub workers: usize,
    pub extracted_at: Option<String>,
}

impl Default for SdaOptions {
    fn default() -> Self {
        SdaOptions { teacher: String::new(), workers: 4, extracted_at: None }
    }
}

/// Full SDA pipeline: topics, then skills per topic (concurrently), then
/// query types. Skills are deduplicated by name across topics, keeping the
/// first topic's attribution.
pub fn extract_catalog_sda(
    provider: &dyn Provider,
    opts: &SdaOptions,
) -> Result<SkillCatalog, CatalogError> {
    let topics = extract_topics_sda(provider)?;
    let per_topic = parallel_map(&topics, opts.workers, |_, topic| {
        extract_skills_for_topic_sda(topic, provider)
    });
    let mut seen = BTreeSet::new();
    let mut skills = Vec::new();
    for result in per_topic {
        for skill in result? {
            if seen.insert(skill.name.clone()) {
                skills.push(skill);
            }
        }
    }
    let query_types = extract_query_types_sda(provider)?;
    let teacher = if opts.teacher.is_empty() { provider.model() } else { &opts.teacher };
    let catalog = SkillCatalog {
        version: CATALOG_VERSION,
        mode: Mode::Sda,
        teacher: teacher.to_string(),
        extracted_at: opts.extracted_at.clone(),
        topics,
        query_types,
        skills,
        clusters: Vec::new(),
    };
    catalog.validate()?;
    Ok(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{MockProvider, MockReply, MockScript};

    fn tiny_sda_catalog() -> SkillCatalog {
        SkillCatalog {
            version: CATALOG_VERSION,
            mode: Mode::Sda,
            teacher: "t".into(),
            extracted_at: None,
            topics: vec!["cooking".into()],
            query_types: vec![QueryType {
                name: "Information-Seeking".into(),
                description: "Finding facts.".into(),
            }],
            skills: vec![Skill { name: "knife_skills".into(), source: Mode::Sda, topic: Some("cooking".into()) }],
            clusters: vec![],
        }
    }

    #[test]
    fn name_validation_levels() {
        assert!(is_strict_snake_case("critical_thinking"));
        assert!(is_strict_snake_case("3d_modeling"));
        assert!(!is_strict_snake_case("Critical_Thinking"));
        assert!(!is_strict_snake_case("a__b"));
        assert!(!is_strict_snake_case("_a"));
        assert!(!is_strict_snake_case(""));
        // Published table names that need the relaxed rule:
        assert!(is_valid_identifier("information_technology_(it)"));
        assert!(is_valid_identifier("philanthropy_and_non-profit_sector"));
        assert!(!is_valid_identifier("Has Spaces"));
    }

    #[test]
    fn catalog_round_trip() {
        let catalog = tiny_sda_catalog();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.json");
        save_catalog(&catalog, &path).unwrap();
        let loaded = load_catalog(&path).unwrap();
        assert_eq!(loaded, catalog);
    }

    #[test]
    fn empty_skill_list_round_trips() {
        let mut catalog = tiny_sda_catalog();
        catalog.mode = Mode::Sdd;
        catalog.query_types.clear();
        catalog.topics.clear();
        catalog.skills.clear();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.json");
        save_catalog(&catalog, &path).unwrap();
        assert_eq!(load_catalog(&path).unwrap(), catalog);
    }

    #[test]
    fn load_rejects_invalid_skill_name_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let mut catalog = tiny_sda_catalog();
        catalog.skills[0].name = "Bad Name".into();
        std::fs::write(&path, serde_json::to_string(&catalog).unwrap()).unwrap();
        assert!(matches!(load_catalog(&path), Err(CatalogError::Validation(_))));

        let mut versioned = tiny_sda_catalog();
        versioned.version = 9;
        std::fs::write(&path, serde_json::to_string(&versioned).unwrap()).unwrap();
        assert!(matches!(load_catalog(&path), Err(CatalogError::Schema(_))));
    }

    #[test]
    fn sda_catalog_requires_query_types() {
        let mut catalog = tiny_sda_catalog();
        catalog.query_types.clear();
        assert!(matches!(catalog.validate(), Err(CatalogError::Validation(_))));
    }

    #[test]
    fn label_parses_mandated_shape() {
        let p = MockProvider::with_script(MockScript::new().with_task(
            "label-x",
            vec![MockReply::text("critical_thinking, reason: requires evaluating claims")],
        ));
        let (name, reason) = label_skill_sdd("Some question", &p, "label-x").unwrap();
        assert_eq!(name, "critical_thinking");
        assert_eq!(reason, "requires evaluating claims");
    }

    #[test]
    fn label_rejects_bad_casing_without_retry() {
        let p = MockProvider::with_script(MockScript::new().with_task(
            "label-x",
            vec![MockReply::text("Critical Thinking, reason: x")],
        ));
        let err = label_skill_sdd("q", &p, "label-x").unwrap_err();
        assert!(matches!(err, CatalogError::Validation(_)));
        assert_eq!(p.ledger().total_calls(), 1);
    }

    #[test]
    fn label_retries_shape_failures_once() {
        let p = MockProvider::with_script(MockScript::new().with_task(
            "label-x",
            vec![
                MockReply::text("I think the skill is cooking"),
                MockReply::text("cooking, reason: it is about cooking"),
            ],
        ));
        let (name, _) = label_skill_sdd("q", &p, "label-x").unwrap();
        assert_eq!(name, "cooking");
        assert_eq!(p.ledger().total_calls(), 2);

        let hopeless = MockProvider::with_script(MockScript::new().with_task(
            "label-x",
            vec![MockReply::text("no shape"), MockReply::text("still no shape")],
        ));
        assert!(matches!(
            label_skill_sdd("q", &hopeless, "label-x").unwrap_err(),
            CatalogError::Parse(_)
        ));
    }

    #[test]
    fn label_batch_matches_scripts() {
        let texts: Vec<String> = (0..5).map(|i| format!("example {i}")).collect();
        let mut script = MockScript::new();
        for i in 0..5 {
            script = script.with_task(
                format!("label-{i:05}"),
                vec![MockReply::text(format!("skill_{i}, reason: r{i}"))],
            );
        }
        let p = MockProvider::with_script(script);
        let labels = label_examples_sdd(&texts, &p, 3).unwrap();
        let names: Vec<&str> = labels.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["skill_0", "skill_1", "skill_2", "skill_3", "skill_4"]);
    }

    #[test]
    fn clustering_parses_the_prompt_example_format() {
        let reply = "\
- Category name: `web_development`
- Included skills: html_css_design, javascript_interactivity, web_performance_optimization
- Rationale: This category focuses on web interfaces.";
        let skills: Vec<String> = vec![
            "html_css_design".into(),
            "javascript_interactivity".into(),
            "web_performance_optimization".into(),
        ];
        let p = MockProvider::with_script(
            MockScript::new().with_task("cluster-000", vec![MockReply::text(reply)]),
        );
        let clusters = cluster_skills_sdd(&skills, &p, 2000, 1).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].name, "web_development");
        assert_eq!(clusters[0].members, skills);
        assert!(clusters[0].rationale.contains("web interfaces"));
    }

    #[test]
    fn clustering_single_skill_singleton() {
        let p = MockProvider::with_script(MockScript::new().with_task(
            "cluster-000",
            vec![MockReply::text(
                "- Category name: lonely_skill\n- Included skills: the_skill\n- Rationale: alone",
            )],
        ));
        let clusters = cluster_skills_sdd(&["the_skill".to_string()], &p, 2000, 1).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members, ["the_skill"]);
    }

    #[test]
    fn clustering_reports_orphans() {
        let p = MockProvider::with_script(MockScript::new().with_task(
            "cluster-000",
            vec![MockReply::text(
                "- Category name: partial\n- Included skills: skill_a\n- Rationale: r",
            )],
        ));
        let skills = vec!["skill_a".to_string(), "skill_b".to_string()];
        let err = cluster_skills_sdd(&skills, &p, 2000, 1).unwrap_err();
        match err {
            CatalogError::Coverage { orphans } => assert_eq!(orphans, ["skill_b"]),
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn clustering_drops_unknown_members_and_merges_batches() {
        // Budget forces two single-name batches; both replies use the same
        // cluster name, so members merge. One reply invents a skill.
        let skills = vec!["alpha_skill".to_string(), "beta_skill".to_string()];
        let p = MockProvider::with_script(
            MockScript::new()
                .with_task(
                    "cluster-000",
                    vec![MockReply::text(
                        "- Category name: greek\n- Included skills: alpha_skill, invented_skill\n- Rationale: letters",
                    )],
                )
                .with_task(
                    "cluster-001",
                    vec![MockReply::text(
                        "- Category name: greek\n- Included skills: beta_skill\n- Rationale: letters again",
                    )],
                ),
        );
        let clusters = cluster_skills_sdd(&skills, &p, 1, 2).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members, ["alpha_skill", "beta_skill"]);
    }

    #[test]
    fn batching_respects_budget_and_order() {
        let names: Vec<String> = (0..10).map(|i| format!("skill_number_{i}")).collect();
        let batches = batch_skill_names(&names, 8);
        assert!(batches.len() > 1);
        let flat: Vec<String> = batches.concat();
        assert_eq!(flat, names);
        for b in &batches {
            assert!(!b.is_empty());
        }
    }

    #[test]
    fn sdd_assembly_deduplicates_across_sources() {
        let lists = vec![
            vec!["a_skill", "b_skill"],
            vec!["b_skill", "c_skill"],
        ];
        let catalog = sdd_catalog_from_cluster_names(&lists, "t");
        let names: Vec<&str> = catalog.skill_names();
        assert_eq!(names, ["a_skill", "b_skill", "c_skill"]);
        assert_eq!(catalog.mode, Mode::Sdd);
    }

    #[test]
    fn topics_parse_validate_dedup() {
        let p = MockProvider::with_script(MockScript::new().with_task(
            "topics",
            vec![MockReply::text("Here are topics:\n- cooking\n- gardening\n- cooking\n- music_theory")],
        ));
        let topics = extract_topics_sda(&p).unwrap();
        assert_eq!(topics, ["cooking", "gardening", "music_theory"]);
    }

    #[test]
    fn topics_with_invalid_name_fail() {
        let p = MockProvider::with_script(
            MockScript::new().with_task("topics", vec![MockReply::text("- Cooking")]),
        );
        assert!(matches!(extract_topics_sda(&p), Err(CatalogError::Parse(_))));
    }

    #[test]
    fn skills_for_topic_are_tagged() {
        let p = MockProvider::with_script(MockScript::new().with_task(
            "skills-cooking",
            vec![MockReply::text("- knife_skills\n- baking\n- plating\n- fermentation")],
        ));
        let skills = extract_skills_for_topic_sda("cooking", &p).unwrap();
        assert_eq!(skills.len(), 4);
        for s in &skills {
            assert_eq!(s.source, Mode::Sda);
            assert_eq!(s.topic.as_deref(), Some("cooking"));
        }
    }

    #[test]
    fn skills_for_topic_may_be_empty() {
        let p = MockProvider::with_script(MockScript::new().with_task(
            "skills-nothing",
            vec![MockReply::text("I cannot think of any skills for that.")],
        ));
        assert!(extract_skills_for_topic_sda("nothing", &p).unwrap().is_empty());
    }

    #[test]
    fn query_types_parse_and_dedup() {
        let p = MockProvider::with_script(MockScript::new().with_task(
            "query-types",
            vec![MockReply::text(
                "- Information-Seeking: Finding facts.\n- Help-Seeking: Solving problems.\n- Information-Seeking: Again.",
            )],
        ));
        let qts = extract_query_types_sda(&p).unwrap();
        assert_eq!(qts.len(), 2);
        assert_eq!(qts[0].name, "Information-Seeking");
        assert_eq!(qts[0].description, "Finding facts.");
    }

    #[test]
    fn full_sda_extraction_assembles_catalog() {
        let p = MockProvider::with_script(
            MockScript::new()
                .with_task("topics", vec![MockReply::text("- cooking\n- music")])
                .with_task(
                    "skills-cooking",
                    vec![MockReply::text("- knife_skills\n- shared_skill")],
                )
                .with_task(
                    "skills-music",
                    vec![MockReply::text("- ear_training\n- shared_skill")],
                )
                .with_task(
                    "query-types",
                    vec![MockReply::text("- Information-Seeking: Finding facts.")],
                ),
        );
        let catalog = extract_catalog_sda(&p, &SdaOptions::default()).unwrap();
        assert_eq!(catalog.topics, ["cooking", "music"]);
        assert_eq!(
            catalog.skill_names(),
            ["knife_skills", "shared_skill", "ear_training"]
        );
        // Dedup keeps the first topic's attribution.
        assert_eq!(catalog.skills[1].topic.as_deref(), Some("cooking"));
        assert_eq!(catalog.query_types.len(), 1);
    }

    #[test]
    fn full_sdd_extraction_assembles_catalog() {
        let mut script = MockScript::new();
        for (i, name) in ["html_css_design", "javascript_interactivity"].iter().enumerate() {
            script = script.with_task(
                format!("label-{i:05}"),
                vec![MockReply::text(format!("{name}, reason: r"))],
            );
        }
        script = script.with_task(
            "cluster-000",
            vec![MockReply::text(
                "- Category name: web_development\n- Included skills: html_css_design, javascript_interactivity\n- Rationale: web",
            )],
        );
        let p = MockProvider::with_script(script);
        let texts = vec!["q1".to_string(), "q2".to_string()];
        let catalog = extract_catalog_sdd(&texts, &p, &SddOptions::default()).unwrap();
        assert_eq!(catalog.skill_names(), ["web_development"]);
        assert_eq!(catalog.clusters.len(), 1);
        assert_eq!(catalog.mode, Mode::Sdd);
    }

    #[test]
    fn seed_text_subsample_is_seeded_and_order_preserving() {
        let texts: Vec<String> = (0..100).map(|i| format!("text {i:03}")).collect();
        let a = subsample_seed_texts(&texts, 10, 7);
        let b = subsample_seed_texts(&texts, 10, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(a, sorted, "selection keeps input order");
        assert_ne!(a, subsample_seed_texts(&texts, 10, 8), "seed matters");
        assert_eq!(subsample_seed_texts(&texts, 200, 7), texts, "n beyond len keeps all");
    }
}
