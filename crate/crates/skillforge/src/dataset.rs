//! JSONL dataset records: serialization, validation, statistics, split/merge.
//!
//! Records serialize with a pinned field order (the struct declaration order)
//! so identical datasets produce identical bytes. Record ids come from the
//! run id and task index, never from content, so response replacement
//! preserves identity.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Mode;
use crate::generator::GeneratedExample;
use crate::rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("domain: {0}")]
    Domain(String),
}

/// Which quality ablation replaced this record's response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    Brev,
    Junk,
}

impl std::fmt::Display for Corruption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Corruption::Brev => "brev",
            Corruption::Junk => "junk",
        })
    }
}

/// One training example. Field declaration order is the wire order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub instruction: String,
    pub response: String,
    pub skills: Vec<String>,
    pub query_type: Option<String>,
    pub mode: Mode,
    pub k: usize,
    pub teacher: String,
    pub refined: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<Corruption>,
    pub created_at: String,
}

impl DatasetRecord {
    pub fn from_example(example: &GeneratedExample, created_at: &str) -> Self {
        DatasetRecord {
            id: example.id.clone(),
            instruction: example.instruction.clone(),
            response: example.response.clone(),
            skills: example.skills.clone(),
            query_type: example.query_type.clone(),
            mode: example.mode,
            k: example.k,
            teacher: example.teacher.clone(),
            refined: example.refined,
            corruption: None,
            created_at: created_at.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.instruction.is_empty() {
            return Err("empty instruction".into());
        }
        if self.response.is_empty() {
            return Err("empty response".into());
        }
        if self.teacher.is_empty() {
            return Err("empty teacher".into());
        }
        if self.created_at.is_empty() {
            return Err("empty created_at".into());
        }
        if self.k != self.skills.len() {
            return Err(format!("k={} but {} skills listed", self.k, self.skills.len()));
        }
        if !self.skills.windows(2).all(|w| w[0] < w[1]) {
            return Err("skills must be sorted and distinct".into());
        }
        if self.mode == Mode::Sda && self.query_type.is_none() {
            return Err("sda record is missing query_type".into());
        }
        Ok(())
    }
}

/// Write records as one compact JSON object per line.
pub fn write_jsonl(records: &[DatasetRecord], path: &Path) -> Result<(), DatasetError> {
    let mut out = BufWriter::new(File::create(path)?);
    for (i, record) in records.iter().enumerate() {
        record
            .validate()
            .map_err(|message| DatasetError::Schema { line: i + 1, message })?;
        let line = serde_json::to_string(record).map_err(|e| DatasetError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a JSONL dataset, validating every record.
pub fn read_jsonl(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
                line: i + 1,
                message: e.to_string(),
            })?;
        record
            .validate()
            .map_err(|message| DatasetError::Schema { line: i + 1, message })?;
        records.push(record);
    }
    Ok(records)
}

/// Token counting is pluggable; character statistics are the portable
/// default and carry no model dependency.
pub trait Tokenizer {
    fn id(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

/// Counts whitespace-separated words.
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn id(&self) -> &str {
        "whitespace_v1"
    }
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean_chars: f64,
    pub median_chars: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_tokens: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokenizer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<FieldStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<FieldStats>,
}

fn field_stats(texts: &[&str], tokenizer: Option<&dyn Tokenizer>) -> FieldStats {
    let mut chars: Vec<usize> = texts.iter().map(|t| t.chars().count()).collect();
    let mean_chars = chars.iter().sum::<usize>() as f64 / chars.len() as f64;
    chars.sort_unstable();
    let mid = chars.len() / 2;
    let median_chars = if chars.len() % 2 == 1 {
        chars[mid] as f64
    } else {
        (chars[mid - 1] + chars[mid]) as f64 / 2.0
    };
    let mean_tokens = tokenizer.map(|tk| {
        texts.iter().map(|t| tk.count(t)).sum::<usize>() as f64 / texts.len() as f64
    });
    FieldStats { mean_chars, median_chars, mean_tokens }
}

/// Exact character-length statistics, plus token means when a tokenizer is
/// supplied. An empty dataset reports count 0 and no statistics.
pub fn compute_stats(
    records: &[DatasetRecord],
    tokenizer: Option<&dyn Tokenizer>,
) -> DatasetStats {
    if records.is_empty() {
        return DatasetStats { count: 0, tokenizer: None, instruction: None, response: None };
    }
    let instructions: Vec<&str> = records.iter().map(|r| r.instruction.as_str()).collect();
    let responses: Vec<&str> = records.iter().map(|r| r.response.as_str()).collect();
    DatasetStats {
        count: records.len(),
        tokenizer: tokenizer.map(|t| t.id().to_string()),
        instruction: Some(field_stats(&instructions, tokenizer)),
        response: Some(field_stats(&responses, tokenizer)),
    }
}

/// Seeded disjoint parts of the given sizes; each part preserves the input's
/// relative record order. Records beyond `sizes` are left out.
pub fn split(
    records: &[DatasetRecord],
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<Vec<DatasetRecord>>, DatasetError> {
    let total: usize = sizes.iter().sum();
    if total > records.len() {
        return Err(DatasetError::Domain(format!(
            "requested {total} records across parts but only {} exist",
            records.len()
        )));
    }
    let mut indices: Vec<usize> = (0..records.len()).collect();
    let mut shuffle_rng = rng::stream(seed, "dataset.split", 0);
    rng::shuffle_prefix(&mut shuffle_rng, &mut indices, total);
    let mut parts = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &size in sizes {
        let mut chosen: Vec<usize> = indices[offset..offset + size].to_vec();
        chosen.sort_unstable();
        parts.push(chosen.into_iter().map(|i| records[i].clone()).collect());
        offset += size;
    }
    Ok(parts)
}

/// Concatenate parts back into one dataset.
pub fn merge(parts: &[Vec<DatasetRecord>]) -> Vec<DatasetRecord> {
    parts.iter().flatten().cloned().collect()
}
