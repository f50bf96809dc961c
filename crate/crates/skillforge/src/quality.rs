//! BREV and JUNK quality ablations.
//!
//! A seeded selection of records has its responses regenerated through a
//! single-turn prompt — brief-style ("respond in one paragraph") or
//! junk-style (long but deliberately sloppy and unhelpful) — while
//! instructions stay byte-identical and replaced records carry a corruption
//! flag. Selection depends only on the record ids and the seed.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Corruption, DatasetRecord};
use crate::pool;
use crate::provider::{ChatMessage, ChatRequest, Provider, ProviderError};
use crate::rng;
use crate::template::{self, templates, TemplateError};

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("domain: {0}")]
    Domain(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InjectionPlan {
    pub mode: Corruption,
    pub fraction: f64,
    pub seed: u64,
}

impl InjectionPlan {
    pub fn new(mode: Corruption, fraction: f64, seed: u64) -> Self {
        InjectionPlan { mode, fraction, seed }
    }

    pub fn validate(&self) -> Result<(), QualityError> {
        if !self.fraction.is_finite() || !(0.0..=1.0).contains(&self.fraction) {
            return Err(QualityError::Domain(format!(
                "fraction {} outside [0, 1]",
                self.fraction
            )));
        }
        Ok(())
    }

    /// floor(fraction × n), never rounded up.
    ///
    /// A 1e-9 nudge is added before flooring so that decimal fractions whose
    /// binary representation lands a hair under the intended product
    /// (0.3 × 10 style cases) still floor to the intended count.
    pub fn replacement_count(&self, n: usize) -> usize {
        (((self.fraction * n as f64) + 1e-9).floor() as usize).min(n)
    }
}

/// The ids selected for replacement: a pure function of (ids, seed).
fn select_ids(records: &[DatasetRecord], plan: &InjectionPlan) -> Result<HashSet<String>, QualityError> {
    let mut ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(QualityError::Domain("dataset ids are not unique".into()));
    }
    let count = plan.replacement_count(records.len());
    let mut shuffle_rng = rng::stream(plan.seed, "inject.select", 0);
    rng::shuffle_prefix(&mut shuffle_rng, &mut ids, count);
    Ok(ids[..count].iter().map(|s| s.to_string()).collect())
}

/// Replace floor(fraction × n) responses via single-turn regeneration.
///
/// fraction 0 is the identity and makes no provider calls. Non-selected
/// records pass through untouched; selected ones keep every field except
/// `response` (the regenerated text) and `corruption` (the plan's mode).
pub fn inject(
    records: &[DatasetRecord],
    plan: &InjectionPlan,
    provider: &dyn Provider,
    workers: usize,
) -> Result<Vec<DatasetRecord>, QualityError> {
    plan.validate()?;
    let selected = select_ids(records, plan)?;
    if selected.is_empty() {
        return Ok(records.to_vec());
    }
    let template_text = match plan.mode {
        Corruption::Brev => templates::BREV_REGEN_V1,
        Corruption::Junk => templates::JUNK_REGEN_V1,
    };
    let results = pool::parallel_map(records, workers, |_, record| {
        if !selected.contains(&record.id) {
            return Ok(record.clone());
        }
        let prompt = template::render(template_text, &[("instruction", &record.instruction)])?;
        let request = ChatRequest::new(
            provider.model(),
            vec![ChatMessage::user(prompt)],
        )
        .with_task(format!("inject-{}", record.id));
        let reply = provider.complete_chat(&request)?;
        let mut replaced = record.clone();
        replaced.response = reply.content;
        replaced.corruption = Some(plan.mode);
        Ok(replaced)
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Mode;
    use crate::provider::{MockProvider, MockReply, MockScript, ProviderConfig};

    fn record(i: usize) -> DatasetRecord {
        DatasetRecord {
            id: format!("run-{i:05}"),
            instruction: format!("Please explain topic number {i} in detail."),
            response: format!(
                "A fairly long original answer covering topic {i} with several sentences of detail."
            ),
            skills: vec!["a_skill".into(), "b_skill".into()],
            query_type: None,
            mode: Mode::Sdd,
            k: 2,
            teacher: "mock-model".into(),
            refined: true,
            corruption: None,
            created_at: "2024-01-01T00:00:00Z".into(),
        }
    }

    fn mock(reply: &str) -> MockProvider {
        let script = MockScript::new().with_default(vec![MockReply::text(reply)]);
        MockProvider::new(script, ProviderConfig::mock("mock-model")).unwrap()
    }

    #[test]
    fn replacement_counts_floor_exactly() {
        let plan = |f| InjectionPlan::new(Corruption::Brev, f, 1);
        assert_eq!(plan(0.2).replacement_count(2000), 400);
        assert_eq!(plan(0.2).replacement_count(10), 2);
        assert_eq!(plan(0.3).replacement_count(10), 3);
        assert_eq!(plan(0.999).replacement_count(10), 9);
        assert_eq!(plan(1.0).replacement_count(10), 10);
        assert_eq!(plan(0.0).replacement_count(10), 0);
        assert_eq!(plan(0.25).replacement_count(7), 1);
    }

    #[test]
    fn bad_fractions_are_rejected() {
        for f in [-0.1, 1.1, f64::NAN, f64::INFINITY] {
            let plan = InjectionPlan::new(Corruption::Junk, f, 1);
            assert!(plan.validate().is_err(), "{f} should be invalid");
        }
    }

    #[test]
    fn fraction_zero_is_identity_with_no_calls() {
        let records: Vec<DatasetRecord> = (0..10).map(record).collect();
        // An empty script errors on any call, proving none are made.
        let provider =
            MockProvider::new(MockScript::new(), ProviderConfig::mock("mock-model")).unwrap();
        let plan = InjectionPlan::new(Corruption::Brev, 0.0, 42);
        let out = inject(&records, &plan, &provider, 4).unwrap();
        assert_eq!(out, records);
        assert_eq!(provider.ledger().total_calls(), 0);
    }

    #[test]
    fn brev_on_ten_records_replaces_exactly_two() {
        let records: Vec<DatasetRecord> = (0..10).map(record).collect();
        let provider = mock("One short paragraph.");
        let plan = InjectionPlan::new(Corruption::Brev, 0.2, 7);
        let out = inject(&records, &plan, &provider, 4).unwrap();
        assert_eq!(out.len(), 10);
        let replaced: Vec<&DatasetRecord> =
            out.iter().filter(|r| r.corruption.is_some()).collect();
        assert_eq!(replaced.len(), 2);
        for r in &replaced {
            assert_eq!(r.corruption, Some(Corruption::Brev));
            assert_eq!(r.response, "One short paragraph.");
        }
        // Instructions byte-identical everywhere; untouched records fully so.
        for (before, after) in records.iter().zip(out.iter()) {
            assert_eq!(before.instruction, after.instruction);
            assert_eq!(before.id, after.id);
            if after.corruption.is_none() {
                assert_eq!(
                    serde_json::to_string(before).unwrap(),
                    serde_json::to_string(after).unwrap()
                );
            }
        }
        let mean = |rs: &[&DatasetRecord]| {
            rs.iter().map(|r| r.response.chars().count()).sum::<usize>() as f64 / rs.len() as f64
        };
        let originals: Vec<&DatasetRecord> = records.iter().collect();
        assert!(mean(&replaced) < mean(&originals), "brev shortens the replaced responses");
    }

    #[test]
    fn junk_mode_sets_the_junk_flag() {
        let records: Vec<DatasetRecord> = (0..5).map(record).collect();
        let provider = mock("Well, there are many important aspects to consider here, broadly speaking.");
        let plan = InjectionPlan::new(Corruption::Junk, 0.4, 3);
        let out = inject(&records, &plan, &provider, 2).unwrap();
        let flags: Vec<Corruption> = out.iter().filter_map(|r| r.corruption).collect();
        assert_eq!(flags.len(), 2);
        assert!(flags.iter().all(|c| *c == Corruption::Junk));
    }

    #[test]
    fn selection_depends_only_on_ids_and_seed() {
        let records: Vec<DatasetRecord> = (0..20).map(record).collect();
        let mut reversed = records.clone();
        reversed.reverse();
        let plan = InjectionPlan::new(Corruption::Brev, 0.25, 99);
        let provider = mock("Short.");
        let ids = |out: &[DatasetRecord]| {
            let mut v: Vec<String> = out
                .iter()
                .filter(|r| r.corruption.is_some())
                .map(|r| r.id.clone())
                .collect();
            v.sort();
            v
        };
        let a = ids(&inject(&records, &plan, &provider, 1).unwrap());
        let b = ids(&inject(&reversed, &plan, &mock("Short."), 8).unwrap());
        assert_eq!(a, b, "same ids and seed select the same records");
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut records: Vec<DatasetRecord> = (0..3).map(record).collect();
        records[2].id = records[0].id.clone();
        let plan = InjectionPlan::new(Corruption::Brev, 0.5, 1);
        let err = inject(&records, &plan, &mock("x"), 1).unwrap_err();
        assert!(matches!(err, QualityError::Domain(_)));
    }
}
