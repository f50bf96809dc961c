//! Prompt template rendering with `{placeholder}` syntax.
//!
//! Templates ship as versioned plain-text files compiled into the binary.
//! Placeholders are lowercase/underscore words in braces; substitution is a
//! single pass, so values containing braces are never re-expanded.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unfilled placeholder {{{0}}}")]
    Unfilled(String),
}

/// Versioned template texts, byte-for-byte from `templates/`.
pub mod templates {
    pub const SDD_LABEL_V1: &str = include_str!("../templates/sdd_label_v1.txt");
    pub const CLUSTER_V1: &str = include_str!("../templates/cluster_v1.txt");
    pub const SDD_GENERATE_V1: &str = include_str!("../templates/sdd_generate_v1.txt");
    pub const SDA_TOPICS_V1: &str = include_str!("../templates/sda_topics_v1.txt");
    pub const SDA_EXTRAPOLATE_V1: &str = include_str!("../templates/sda_extrapolate_v1.txt");
    pub const SDA_QUERY_TYPES_V1: &str = include_str!("../templates/sda_query_types_v1.txt");
    pub const SDA_GENERATE_V1: &str = include_str!("../templates/sda_generate_v1.txt");
    pub const TRUNCATION_FIX_V1: &str = include_str!("../templates/truncation_fix_v1.txt");
    pub const CRITIQUE_V1: &str = include_str!("../templates/critique_v1.txt");
    pub const REFINE_V1: &str = include_str!("../templates/refine_v1.txt");
    pub const TRUNCATION_FIX_REFINED_V1: &str =
        include_str!("../templates/truncation_fix_refined_v1.txt");
    pub const BREV_REGEN_V1: &str = include_str!("../templates/brev_regen_v1.txt");
    pub const JUNK_REGEN_V1: &str = include_str!("../templates/junk_regen_v1.txt");
    pub const JUDGE_PAIRWISE_V1: &str = include_str!("../templates/judge_pairwise_v1.txt");
}

fn placeholder_at(text: &str, open: usize) -> Option<&str> {
    let rest = &text[open + 1..];
    let close = rest.find('}')?;
    let name = &rest[..close];
    if !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c == '_')
    {
        Some(name)
    } else {
        None
    }
}

/// The set of placeholder names appearing in `template`.
pub fn placeholders(template: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut i = 0;
    while let Some(off) = template[i..].find('{') {
        let open = i + off;
        if let Some(name) = placeholder_at(template, open) {
            out.insert(name.to_string());
            i = open + name.len() + 2;
        } else {
            i = open + 1;
        }
    }
    out
}

/// Substitute `vars` into `template`, failing on any placeholder left over.
pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut i = 0;
    while let Some(off) = template[i..].find('{') {
        let open = i + off;
        out.push_str(&template[i..open]);
        match placeholder_at(template, open) {
            Some(name) => {
                let value = vars
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| TemplateError::Unfilled(name.to_string()))?;
                out.push_str(value);
                i = open + name.len() + 2;
            }
            None => {
                out.push('{');
                i = open + 1;
            }
        }
    }
    out.push_str(&template[i..]);
    Ok(out)
}
