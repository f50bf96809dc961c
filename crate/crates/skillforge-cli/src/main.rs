//! skillforge: skill extraction, k-tuple data generation, quality ablations,
//! dataset tooling, and pairwise judging from a single TOML run config.
//!
//! Exit codes: 0 success, 1 validation error, 2 provider failure, 3 partial
//! run (some tasks abandoned or unjudged; outputs are still written).

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use skillforge::catalog::{self, SkillCatalog};
use skillforge::config::{self, RunConfig};
use skillforge::dataset::{self, Corruption, DatasetRecord, WhitespaceTokenizer};
use skillforge::generator;
use skillforge::judge::{self, ComparisonItem};
use skillforge::mixer::{self, SamplePlan};
use skillforge::provider::{estimate_cost, ProviderError, UsageLedger};
use skillforge::quality::{self, InjectionPlan};

const EXIT_VALIDATION: u8 = 1;
const EXIT_PROVIDER: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "skillforge", version, about = "Skill-catalog instruction dataset pipeline")]
struct Cli {
    /// Path to the TOML run config (required by provider-backed commands).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Sda,
    Sdd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CorruptionArg {
    Brev,
    Junk,
}

#[derive(Subcommand)]
enum Command {
    /// Build a skill catalog with the teacher provider.
    ExtractSkills {
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// JSONL of {"text": ...} seed examples (sdd only).
        #[arg(long)]
        seed_dataset: Option<PathBuf>,
        /// Seeded subsample size of the seed dataset (sdd only).
        #[arg(long)]
        sample: Option<usize>,
        /// Output catalog JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample k-tuples and run the generate/critique/refine protocol.
    Generate {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: out_dir/run_id from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replace a seeded fraction of responses with brev/junk regenerations.
    Inject {
        #[arg(long, value_enum)]
        mode: CorruptionArg,
        #[arg(long)]
        fraction: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print dataset statistics as JSON.
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
    /// Pairwise-judge candidate vs baseline responses.
    Judge {
        /// JSONL of {"instruction", "response"} candidate outputs.
        #[arg(long)]
        candidate: PathBuf,
        /// JSONL of {"instruction", "response"} baseline outputs, paired by
        /// line with the candidate file.
        #[arg(long)]
        baseline: PathBuf,
        /// Output directory (default: out_dir/run_id-judge).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick the epoch with the highest held-out LC win rate.
    SelectCheckpoint {
        /// Metrics JSON file, or a directory containing epoch_metrics.json.
        #[arg(long)]
        epochs: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Provider(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Provider(m) => write!(f, "provider failure: {m}"),
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        match e {
            config::ConfigError::Provider(p) => CliError::Provider(p.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<catalog::CatalogError> for CliError {
    fn from(e: catalog::CatalogError) -> Self {
        match e {
            catalog::CatalogError::Provider(p) => CliError::Provider(p.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<mixer::MixerError> for CliError {
    fn from(e: mixer::MixerError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<generator::GeneratorError> for CliError {
    fn from(e: generator::GeneratorError) -> Self {
        match e {
            generator::GeneratorError::Provider(p) => CliError::Provider(p.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<quality::QualityError> for CliError {
    fn from(e: quality::QualityError) -> Self {
        match e {
            quality::QualityError::Provider(p) => CliError::Provider(p.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<judge::JudgeError> for CliError {
    fn from(e: judge::JudgeError) -> Self {
        match e {
            judge::JudgeError::Provider(p) => CliError::Provider(p.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<dataset::DatasetError> for CliError {
    fn from(e: dataset::DatasetError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        CliError::Provider(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("io: {e}"))
    }
}

/// The per-run manifest written beside every command's outputs.
#[derive(Serialize)]
struct RunSummary {
    schema_version: u32,
    command: String,
    run_id: String,
    seed: u64,
    counts: BTreeMap<String, u64>,
    abandoned: Vec<String>,
    usage: UsageLedger,
    estimated_cost: String,
    outputs: Vec<String>,
    created_at: String,
}

/// Print a line to stdout, ignoring a closed pipe (e.g. piping into `head`)
/// so the command still exits with its real status code.
fn emit(text: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn write_summary(dir: &Path, summary: &RunSummary) -> Result<(), CliError> {
    let path = dir.join("RUN_SUMMARY.json");
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    std::fs::write(&path, json + "\n")?;
    Ok(())
}

fn require_config(cli_config: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    let path = cli_config.as_ref().ok_or_else(|| {
        CliError::Validation("this command needs --config <run.toml>".into())
    })?;
    Ok(config::load_config(path)?)
}

fn write_jsonl_values<T: Serialize>(items: &[T], path: &Path) -> Result<(), CliError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| CliError::Validation(e.to_string()))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct SeedLine {
    text: String,
}

#[derive(Serialize, Deserialize)]
struct ResponseLine {
    instruction: String,
    response: String,
}

fn read_typed_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let item: T = serde_json::from_str(line).map_err(|e| {
            CliError::Validation(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        items.push(item);
    }
    Ok(items)
}

fn cmd_extract_skills(
    run: &RunConfig,
    mode: ModeArg,
    seed_dataset: Option<&Path>,
    sample: Option<usize>,
    out: &Path,
) -> Result<u8, CliError> {
    let section = run.teacher();
    let provider = config::build_provider(section)?;
    let extracted_at = Some(run.created_at());
    let catalog: SkillCatalog = match mode {
        ModeArg::Sda => {
            let opts = catalog::SdaOptions {
                teacher: section.provider.model.clone(),
                workers: run.workers,
                extracted_at,
            };
            catalog::extract_catalog_sda(provider.as_ref(), &opts)?
        }
        ModeArg::Sdd => {
            let seed_path = seed_dataset.ok_or_else(|| {
                CliError::Validation("--mode sdd requires --seed-dataset <path.jsonl>".into())
            })?;
            let lines: Vec<SeedLine> = read_typed_jsonl(seed_path)?;
            let mut texts: Vec<String> = lines.into_iter().map(|l| l.text).collect();
            if let Some(n) = sample {
                texts = catalog::subsample_seed_texts(&texts, n, run.seed);
            }
            let opts = catalog::SddOptions {
                teacher: section.provider.model.clone(),
                workers: run.workers,
                extracted_at,
                ..Default::default()
            };
            catalog::extract_catalog_sdd(&texts, provider.as_ref(), &opts)?
        }
    };
    catalog::save_catalog(&catalog, out)?;
    let ledger = provider.ledger();
    let mut counts = BTreeMap::new();
    counts.insert("topics".into(), catalog.topics.len() as u64);
    counts.insert("query_types".into(), catalog.query_types.len() as u64);
    counts.insert("skills".into(), catalog.skills.len() as u64);
    counts.insert("clusters".into(), catalog.clusters.len() as u64);
    let dir = out.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    write_summary(
        &dir,
        &RunSummary {
            schema_version: 1,
            command: "extract-skills".into(),
            run_id: run.run_id.clone(),
            seed: run.seed,
            counts,
            abandoned: vec![],
            estimated_cost: estimate_cost(&ledger, &section.provider).to_string(),
            usage: ledger,
            outputs: vec![out.display().to_string()],
            created_at: run.created_at(),
        },
    )?;
    emit(format!(
        "extracted catalog: {} topics, {} query types, {} skills → {}",
        catalog.topics.len(),
        catalog.query_types.len(),
        catalog.skills.len(),
        out.display()
    ));
    Ok(0)
}

fn cmd_generate(
    run: &RunConfig,
    catalog_path: &Path,
    n: usize,
    k: usize,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<u8, CliError> {
    let catalog = catalog::load_catalog(catalog_path)?;
    let seed = seed.unwrap_or(run.seed);
    let sample = run.sample;
    let plan = SamplePlan {
        n,
        k,
        seed,
        allow_repeat_tuples: sample.map(|s| s.allow_repeat_tuples).unwrap_or(false),
        holdout_count: sample.map(|s| s.holdout).unwrap_or(0),
    };
    let tuples = mixer::sample_tuples(&catalog, &plan)?;
    let (train, holdout) = mixer::split_holdout(&tuples, plan.holdout_count, seed)?;

    let section = run.teacher();
    let provider = config::build_provider(section)?;
    let gen_config = run.generation.to_config();
    let result = generator::run_generation(
        &catalog,
        &train,
        provider.as_ref(),
        &gen_config,
        &run.run_id,
        run.workers,
    )?;

    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.out_dir.join(&run.run_id));
    std::fs::create_dir_all(&dir)?;
    let created_at = run.created_at();
    let records: Vec<DatasetRecord> = result
        .examples
        .iter()
        .map(|e| DatasetRecord::from_example(e, &created_at))
        .collect();
    let dataset_path = dir.join("dataset.jsonl");
    dataset::write_jsonl(&records, &dataset_path)?;
    let transcripts_path = dir.join("transcripts.jsonl");
    write_jsonl_values(&result.transcripts, &transcripts_path)?;
    let holdout_path = dir.join("holdout_tuples.jsonl");
    write_jsonl_values(&holdout, &holdout_path)?;

    let ledger = provider.ledger();
    let cost = estimate_cost(&ledger, &section.provider).to_string();
    let usage_path = dir.join("usage.json");
    let usage_json = serde_json::json!({ "usage": ledger, "estimated_cost": cost });
    std::fs::write(
        &usage_path,
        serde_json::to_string_pretty(&usage_json)
            .map_err(|e| CliError::Validation(e.to_string()))?
            + "\n",
    )?;

    let abandoned_ids: Vec<String> = result
        .abandoned
        .iter()
        .map(|a| format!("{}-{:05}", run.run_id, a.task_index))
        .collect();
    let mut counts = BTreeMap::new();
    counts.insert("requested".into(), n as u64);
    counts.insert("holdout".into(), holdout.len() as u64);
    counts.insert("generated".into(), records.len() as u64);
    counts.insert("abandoned".into(), abandoned_ids.len() as u64);
    write_summary(
        &dir,
        &RunSummary {
            schema_version: 1,
            command: "generate".into(),
            run_id: run.run_id.clone(),
            seed,
            counts,
            abandoned: abandoned_ids.clone(),
            estimated_cost: cost,
            usage: ledger,
            outputs: vec![
                dataset_path.display().to_string(),
                transcripts_path.display().to_string(),
                holdout_path.display().to_string(),
                usage_path.display().to_string(),
            ],
            created_at,
        },
    )?;
    emit(format!("generated {} examples → {}", records.len(), dir.display()));
    Ok(if abandoned_ids.is_empty() { 0 } else { EXIT_PARTIAL })
}

fn cmd_inject(
    run: &RunConfig,
    mode: CorruptionArg,
    fraction: f64,
    seed: Option<u64>,
    input: &Path,
    out: &Path,
) -> Result<u8, CliError> {
    let records = dataset::read_jsonl(input)?;
    let plan = InjectionPlan {
        mode: match mode {
            CorruptionArg::Brev => Corruption::Brev,
            CorruptionArg::Junk => Corruption::Junk,
        },
        fraction,
        seed: seed.unwrap_or(run.seed),
    };
    let section = run.teacher();
    let provider = config::build_provider(section)?;
    let injected = quality::inject(&records, &plan, provider.as_ref(), run.workers)?;
    dataset::write_jsonl(&injected, out)?;
    let replaced = injected.iter().filter(|r| r.corruption.is_some()).count();

    let ledger = provider.ledger();
    let mut counts = BTreeMap::new();
    counts.insert("records".into(), injected.len() as u64);
    counts.insert("replaced".into(), replaced as u64);
    let dir = out.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    write_summary(
        &dir,
        &RunSummary {
            schema_version: 1,
            command: "inject".into(),
            run_id: run.run_id.clone(),
            seed: plan.seed,
            counts,
            abandoned: vec![],
            estimated_cost: estimate_cost(&ledger, &section.provider).to_string(),
            usage: ledger,
            outputs: vec![out.display().to_string()],
            created_at: run.created_at(),
        },
    )?;
    emit(format!("replaced {replaced} of {} responses → {}", injected.len(), out.display()));
    Ok(0)
}

fn cmd_stats(input: &Path) -> Result<u8, CliError> {
    let records = dataset::read_jsonl(input)?;
    let stats = dataset::compute_stats(&records, Some(&WhitespaceTokenizer));
    emit(serde_json::to_string_pretty(&stats).map_err(|e| CliError::Validation(e.to_string()))?);
    Ok(0)
}

fn cmd_judge(
    run: &RunConfig,
    candidate: &Path,
    baseline: &Path,
    out: Option<&Path>,
) -> Result<u8, CliError> {
    let cand: Vec<ResponseLine> = read_typed_jsonl(candidate)?;
    let base: Vec<ResponseLine> = read_typed_jsonl(baseline)?;
    if cand.len() != base.len() {
        return Err(CliError::Validation(format!(
            "candidate has {} lines but baseline has {}",
            cand.len(),
            base.len()
        )));
    }
    let mut items = Vec::with_capacity(cand.len());
    for (i, (c, b)) in cand.iter().zip(&base).enumerate() {
        if c.instruction != b.instruction {
            return Err(CliError::Validation(format!(
                "instruction mismatch at line {}: candidate and baseline must be paired",
                i + 1
            )));
        }
        items.push(ComparisonItem {
            id: format!("item-{i:05}"),
            instruction: c.instruction.clone(),
            candidate: c.response.clone(),
            baseline: b.response.clone(),
        });
    }
    let section = run.judge();
    let provider = config::build_provider(section)?;
    let outcome = judge::judge_items(&items, provider.as_ref(), run.seed, run.workers)?;
    let report = judge::win_rate_report(&items, &outcome)?;

    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.out_dir.join(format!("{}-judge", run.run_id)));
    std::fs::create_dir_all(&dir)?;
    let verdicts_path = dir.join("verdicts.jsonl");
    write_jsonl_values(&outcome.verdicts, &verdicts_path)?;
    let report_path = dir.join("report.json");
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Validation(e.to_string()))?
            + "\n",
    )?;

    let ledger = provider.ledger();
    let mut counts = BTreeMap::new();
    counts.insert("items".into(), items.len() as u64);
    counts.insert("judged".into(), report.n as u64);
    counts.insert("unjudged".into(), report.unjudged as u64);
    write_summary(
        &dir,
        &RunSummary {
            schema_version: 1,
            command: "judge".into(),
            run_id: run.run_id.clone(),
            seed: run.seed,
            counts,
            abandoned: outcome.unjudged.clone(),
            estimated_cost: estimate_cost(&ledger, &section.provider).to_string(),
            usage: ledger,
            outputs: vec![
                verdicts_path.display().to_string(),
                report_path.display().to_string(),
            ],
            created_at: run.created_at(),
        },
    )?;
    emit(&report);
    Ok(if outcome.unjudged.is_empty() { 0 } else { EXIT_PARTIAL })
}

#[derive(Deserialize)]
struct EpochEntry {
    epoch: u32,
    lc_wr: f64,
}

#[derive(Deserialize)]
struct EpochMetrics {
    entries: Vec<EpochEntry>,
}

fn cmd_select_checkpoint(epochs: &Path) -> Result<u8, CliError> {
    let file = if epochs.is_dir() { epochs.join("epoch_metrics.json") } else { epochs.to_path_buf() };
    let text = std::fs::read_to_string(&file)
        .map_err(|e| CliError::Validation(format!("{}: {e}", file.display())))?;
    let metrics: EpochMetrics = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", file.display())))?;
    let scores: Vec<(u32, f64)> =
        metrics.entries.iter().map(|e| (e.epoch, e.lc_wr)).collect();
    let best = judge::select_checkpoint(&scores)?;
    emit(format!("epoch {best}"));
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::ExtractSkills { mode, seed_dataset, sample, out } => {
            let run = require_config(&cli.config)?;
            cmd_extract_skills(&run, *mode, seed_dataset.as_deref(), *sample, out)
        }
        Command::Generate { catalog, n, k, seed, out } => {
            let run = require_config(&cli.config)?;
            cmd_generate(&run, catalog, *n, *k, *seed, out.as_deref())
        }
        Command::Inject { mode, fraction, seed, input, out } => {
            let run = require_config(&cli.config)?;
            cmd_inject(&run, *mode, *fraction, *seed, input, out)
        }
        Command::Stats { input } => cmd_stats(input),
        Command::Judge { candidate, baseline, out } => {
            let run = require_config(&cli.config)?;
            cmd_judge(&run, candidate, baseline, out.as_deref())
        }
        Command::SelectCheckpoint { epochs } => cmd_select_checkpoint(epochs),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; everything else is a
            // usage problem and exits with the validation code.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(match e {
                CliError::Validation(_) => EXIT_VALIDATION,
                CliError::Provider(_) => EXIT_PROVIDER,
            })
        }
    }
}
