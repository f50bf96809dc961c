//! The single TOML run configuration: seed, providers, sampling, generation.
//!
//! A checked-in config plus fixtures fully determines a run: every random
//! decision derives from the one `seed`, and credentials are the only values
//! read from the environment. Relative paths inside the file (catalog,
//! scripts, out_dir) resolve against the config file's own directory so a
//! config behaves identically from any working directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{GenerationConfig, TruncationPolicy};
use crate::provider::{Dialect, HttpProvider, MockProvider, MockScript, Provider, ProviderConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Validation(String),
    #[error(transparent)]
    Provider(#[from] crate::provider::ProviderError),
}

/// What a configured provider is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderRole {
    Teacher,
    Judge,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProviderSection {
    #[serde(flatten)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub roles: Vec<ProviderRole>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SampleSection {
    pub n: usize,
    pub k: usize,
    #[serde(default)]
    pub holdout: usize,
    #[serde(default)]
    pub allow_repeat_tuples: bool,
}

/// Generation knobs; all optional with the library defaults.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct GenerationSection {
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub max_parse_retries: Option<u32>,
    pub truncation_policy: Option<TruncationPolicy>,
}

impl GenerationSection {
    pub fn to_config(self) -> GenerationConfig {
        let defaults = GenerationConfig::default();
        GenerationConfig {
            temperature: self.temperature.unwrap_or(defaults.temperature),
            max_output_tokens: self.max_output_tokens.unwrap_or(defaults.max_output_tokens),
            max_parse_retries: self.max_parse_retries.unwrap_or(defaults.max_parse_retries),
            truncation_policy: self.truncation_policy.unwrap_or(defaults.truncation_policy),
        }
    }
}

fn default_workers() -> usize {
    4
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub run_id: String,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Pinned record timestamp; unset means now (or the epoch for mock
    /// teachers, keeping mock runs byte-reproducible, see `created_at()`).
    #[serde(default)]
    pub created_at: Option<String>,
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub sample: Option<SampleSection>,
    #[serde(default)]
    pub generation: GenerationSection,
    pub providers: BTreeMap<String, ProviderSection>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Validation(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.run_id.is_empty()
            || !self
                .run_id
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
        {
            return Err(ConfigError::Validation(format!(
                "run_id {:?} must be non-empty lowercase [a-z0-9_-]",
                self.run_id
            )));
        }
        if self.workers == 0 {
            return Err(ConfigError::Validation("workers must be at least 1".into()));
        }
        if self.providers.is_empty() {
            return Err(ConfigError::Validation("no providers configured".into()));
        }
        for (name, section) in &self.providers {
            section.provider.validate().map_err(|e| {
                ConfigError::Validation(format!("provider {name:?}: {e}"))
            })?;
        }
        for role in [ProviderRole::Teacher, ProviderRole::Judge] {
            let holders: Vec<&str> = self
                .providers
                .iter()
                .filter(|(_, s)| s.roles.contains(&role))
                .map(|(n, _)| n.as_str())
                .collect();
            if holders.len() != 1 {
                return Err(ConfigError::Validation(format!(
                    "exactly one provider must hold the {role:?} role, found {}: {holders:?}",
                    holders.len()
                )));
            }
        }
        if let Some(sample) = &self.sample {
            if sample.k == 0 {
                return Err(ConfigError::Validation("sample.k must be at least 1".into()));
            }
        }
        if let Some(t) = self.generation.temperature {
            if !(0.0..=2.0).contains(&t) {
                return Err(ConfigError::Validation(format!(
                    "generation.temperature {t} outside [0, 2]"
                )));
            }
        }
        Ok(())
    }

    fn provider_with_role(&self, role: ProviderRole) -> &ProviderSection {
        self.providers
            .values()
            .find(|s| s.roles.contains(&role))
            .expect("validated config has exactly one holder per role")
    }

    /// The provider section holding the teacher role (requires a validated
    /// config).
    pub fn teacher(&self) -> &ProviderSection {
        self.provider_with_role(ProviderRole::Teacher)
    }

    /// The provider section holding the judge role (requires a validated
    /// config).
    pub fn judge(&self) -> &ProviderSection {
        self.provider_with_role(ProviderRole::Judge)
    }

    /// The timestamp stamped onto records: the pinned value when set;
    /// otherwise the Unix epoch for mock teachers (keeping rerun bytes
    /// identical) and the current UTC time for real ones.
    pub fn created_at(&self) -> String {
        if let Some(pinned) = &self.created_at {
            return pinned.clone();
        }
        if self.teacher().provider.dialect == Dialect::Mock {
            return "1970-01-01T00:00:00Z".to_string();
        }
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}

/// Construct the runtime provider for a section (mock scripts are loaded
/// from `script_path`).
pub fn build_provider(section: &ProviderSection) -> Result<Box<dyn Provider>, ConfigError> {
    match section.provider.dialect {
        Dialect::Mock => {
            let path = section.provider.script_path.as_deref().ok_or_else(|| {
                ConfigError::Validation("mock provider needs script_path".into())
            })?;
            let script = MockScript::from_file(Path::new(path))?;
            Ok(Box::new(MockProvider::new(script, section.provider.clone())?))
        }
        Dialect::OpenaiCompatible | Dialect::AnthropicCompatible => {
            Ok(Box::new(HttpProvider::new(section.provider.clone())?))
        }
    }
}

/// Resolve `path` against the directory `config_path` sits in.
fn resolve_from(config_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        config_dir.join(path)
    }
}

/// Load, path-resolve, and validate a TOML run config.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    let mut config: RunConfig = toml::from_str(&text)?;
    let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    config.out_dir = resolve_from(&dir, &config.out_dir);
    if let Some(catalog) = &config.catalog {
        config.catalog = Some(resolve_from(&dir, catalog));
    }
    for section in config.providers.values_mut() {
        if let Some(script) = &section.provider.script_path {
            let resolved = resolve_from(&dir, Path::new(script));
            section.provider.script_path = Some(resolved.to_string_lossy().into_owned());
        }
    }
    config.validate()?;
    Ok(config)
}
