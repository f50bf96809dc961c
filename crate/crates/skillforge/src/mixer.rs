//! Seeded sampling of k-tuples of skills from a catalog.
//!
//! Sampling is a pure function of `(catalog, plan)`: each task draws from its
//! own RNG stream keyed by task index, tuples are canonicalized by sorting
//! skill names, and uniqueness is resolved by a sequential pass that redraws
//! within the colliding task's stream. The sampling universe is the catalog's
//! deduplicated, lexicographically sorted skill-name list.

use num_bigint::BigUint;
use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Mode, SkillCatalog};
use crate::rng;

#[derive(Debug, Error)]
pub enum MixerError {
    #[error("domain: {0}")]
    Domain(String),
    #[error("requested {requested} unique tuples but the space holds only {available}")]
    Exhausted { requested: usize, available: BigUint },
}

/// An unordered combination of k distinct skills, stored sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillTuple {
    pub skills: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_type: Option<String>,
    pub task_index: u64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SamplePlan {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub allow_repeat_tuples: bool,
    pub holdout_count: usize,
}

impl SamplePlan {
    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        SamplePlan { n, k, seed, allow_repeat_tuples: false, holdout_count: 0 }
    }
}

/// Exact binomial coefficient C(n, k) in arbitrary precision.
pub fn combination_count(n: u64, k: u64) -> Result<BigUint, MixerError> {
    if k > n {
        return Err(MixerError::Domain(format!("k={k} exceeds n={n}")));
    }
    let k = k.min(n - k);
    let mut c = BigUint::from(1u32);
    for i in 1..=k {
        c = c * BigUint::from(n - k + i) / BigUint::from(i);
    }
    Ok(c)
}

use crate::rng::draw_index;

/// k distinct indices in [0, n) from `rng`, order irrelevant.
fn draw_distinct(rng: &mut impl RngCore, n: u64, k: usize) -> Vec<u64> {
    if (k as u64) * 2 <= n {
        let mut picked: Vec<u64> = Vec::with_capacity(k);
        while picked.len() < k {
            let c = draw_index(rng, n);
            if !picked.contains(&c) {
                picked.push(c);
            }
        }
        picked
    } else {
        // Dense in k: partial Fisher-Yates over the full index range.
        let mut indices: Vec<u64> = (0..n).collect();
        for i in 0..k {
            let j = i + draw_index(rng, n - i as u64) as usize;
            indices.swap(i, j);
        }
        indices.truncate(k);
        indices
    }
}

/// The catalog's sampling universe: unique skill names, sorted.
fn universe(catalog: &SkillCatalog) -> Vec<&str> {
    let mut names: Vec<&str> = catalog.skills.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    names
}

/// Draw exactly `plan.n` tuples (and a query type per tuple in SDA mode).
pub fn sample_tuples(
    catalog: &SkillCatalog,
    plan: &SamplePlan,
) -> Result<Vec<SkillTuple>, MixerError> {
    let names = universe(catalog);
    let n_skills = names.len() as u64;
    if plan.k == 0 {
        return Err(MixerError::Domain("k must be at least 1".into()));
    }
    if plan.k as u64 > n_skills {
        return Err(MixerError::Domain(format!(
            "k={} exceeds the {} unique skills in the catalog",
            plan.k, n_skills
        )));
    }
    let space = combination_count(n_skills, plan.k as u64)?;
    if !plan.allow_repeat_tuples && BigUint::from(plan.n) > space {
        return Err(MixerError::Exhausted { requested: plan.n, available: space });
    }

    let mut tuples = if !plan.allow_repeat_tuples && dense_regime(plan.n, &space) {
        sample_dense(&names, plan)
    } else {
        sample_sparse(&names, plan)?
    };

    if catalog.mode == Mode::Sda && !catalog.query_types.is_empty() {
        for t in tuples.iter_mut() {
            let mut qt_rng = rng::stream(plan.seed, "mix.querytype", t.task_index);
            let pick = draw_index(&mut qt_rng, catalog.query_types.len() as u64) as usize;
            t.query_type = Some(catalog.query_types[pick].name.clone());
        }
    }
    Ok(tuples)
}

/// Dense regime: the request covers most of a small combination space, where
/// rejection sampling of the tail would crawl. Enumerate and shuffle instead.
fn dense_regime(n: usize, space: &BigUint) -> bool {
    const MAX_DENSE: u64 = 1 << 20;
    match u64::try_from(space.clone()) {
        Ok(c) if c <= MAX_DENSE => (n as u64).saturating_mul(2) > c,
        _ => false,
    }
}

fn sample_sparse(names: &[&str], plan: &SamplePlan) -> Result<Vec<SkillTuple>, MixerError> {
    let n_skills = names.len() as u64;
    let mut seen: std::collections::HashSet<Vec<u64>> = std::collections::HashSet::new();
    let mut tuples = Vec::with_capacity(plan.n);
    for task_index in 0..plan.n as u64 {
        let mut task_rng = rng::stream(plan.seed, "mix.tuple", task_index);
        let mut attempts = 0u32;
        let combo = loop {
            let mut combo = draw_distinct(&mut task_rng, n_skills, plan.k);
            combo.sort_unstable();
            if plan.allow_repeat_tuples || seen.insert(combo.clone()) {
                break combo;
            }
            attempts += 1;
            if attempts > 100_000 {
                return Err(MixerError::Domain(format!(
                    "task {task_index} could not find an unused tuple after {attempts} draws"
                )));
            }
        };
        tuples.push(SkillTuple {
            skills: combo.iter().map(|&i| names[i as usize].to_string()).collect(),
            query_type: None,
            task_index,
        });
    }
    Ok(tuples)
}

fn sample_dense(names: &[&str], plan: &SamplePlan) -> Vec<SkillTuple> {
    let n = names.len() as u64;
    let mut combos: Vec<Vec<u64>> = Vec::new();
    let mut current: Vec<u64> = (0..plan.k as u64).collect();
    loop {
        combos.push(current.clone());
        if !next_combination(&mut current, n) {
            break;
        }
    }
    finish_dense(combos, names, plan)
}

/// Advance `current` to the next k-combination of [0, n) in lexicographic
/// order; false once the last combination has been reached.
fn next_combination(current: &mut [u64], n: u64) -> bool {
    let k = current.len();
    for i in (0..k).rev() {
        if current[i] < n - (k as u64 - i as u64) {
            current[i] += 1;
            for j in i + 1..k {
                current[j] = current[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn finish_dense(mut combos: Vec<Vec<u64>>, names: &[&str], plan: &SamplePlan) -> Vec<SkillTuple> {
    let mut shuffle_rng = rng::stream(plan.seed, "mix.dense", 0);
    let len = combos.len();
    rng::shuffle_prefix(&mut shuffle_rng, &mut combos, len);
    combos
        .into_iter()
        .take(plan.n)
        .enumerate()
        .map(|(task_index, combo)| SkillTuple {
            skills: combo.iter().map(|&i| names[i as usize].to_string()).collect(),
            query_type: None,
            task_index: task_index as u64,
        })
        .collect()
}

/// Deterministically split samples into (train, holdout), both preserving the
/// input's relative order.
pub fn split_holdout<T: Clone>(
    samples: &[T],
    holdout_count: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), MixerError> {
    if holdout_count == 0 {
        return Ok((samples.to_vec(), Vec::new()));
    }
    if holdout_count >= samples.len() {
        return Err(MixerError::Domain(format!(
            "holdout_count {holdout_count} must be smaller than the sample count {}",
            samples.len()
        )));
    }
    let mut indices: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle_rng = rng::stream(seed, "mix.holdout", 0);
    rng::shuffle_prefix(&mut shuffle_rng, &mut indices, holdout_count);
    let mut holdout_indices: Vec<usize> = indices[..holdout_count].to_vec();
    holdout_indices.sort_unstable();
    let mut in_holdout = vec![false; samples.len()];
    for &i in &holdout_indices {
        in_holdout[i] = true;
    }
    let mut train = Vec::with_capacity(samples.len() - holdout_count);
    let mut holdout = Vec::with_capacity(holdout_count);
    for (i, s) in samples.iter().enumerate() {
        if in_holdout[i] {
            holdout.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((train, holdout))
}
