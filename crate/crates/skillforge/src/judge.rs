//! Pairwise LLM-as-judge grading, raw and length-controlled win rates, and
//! held-out checkpoint selection.
//!
//! Presentation order is randomized per item from the seed to cancel
//! position bias, and the swap is recorded and undone in the verdict. The
//! length-controlled win rate comes from a two-parameter ridge logistic
//! model (λ on the slope only) over the standardized candidate−baseline
//! length gap: LC WR = 100·σ(θ₀), the predicted win probability at zero gap.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pool;
use crate::provider::{ChatMessage, ChatRequest, Provider, ProviderError};
use crate::rng;
use crate::template::{self, templates, TemplateError};

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("domain: {0}")]
    Domain(String),
    #[error("no verdicts to aggregate")]
    Empty,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// One instruction with a candidate and a baseline response to compare.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonItem {
    pub id: String,
    pub instruction: String,
    pub candidate: String,
    pub baseline: String,
}

impl ComparisonItem {
    pub fn candidate_len(&self) -> usize {
        self.candidate.chars().count()
    }
    pub fn baseline_len(&self) -> usize {
        self.baseline.chars().count()
    }

    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.id.is_empty() || self.instruction.is_empty() {
            return Err(JudgeError::Domain("empty id or instruction".into()));
        }
        if self.candidate.is_empty() || self.baseline.is_empty() {
            return Err(JudgeError::Domain(format!("item {} has an empty response", self.id)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preferred {
    Candidate,
    Baseline,
}

/// An un-swapped judgment for one item.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub item_id: String,
    pub preferred: Preferred,
    pub swapped: bool,
    pub judge: String,
}

/// Whether this item's presentation order is swapped under `seed`.
fn swap_bit(seed: u64, item_id: &str) -> bool {
    use rand_chacha::rand_core::RngCore;
    rng::stream(seed, "judge.swap", rng::fnv1a(item_id)).next_u64() & 1 == 1
}

/// First standalone "A" or "B" token in the reply (case-sensitive so prose
/// articles never match).
fn parse_preference(reply: &str) -> Option<char> {
    reply
        .split(|c: char| !c.is_alphanumeric())
        .find_map(|token| match token {
            "A" => Some('A'),
            "B" => Some('B'),
            _ => None,
        })
}

/// Map a presented letter back to the underlying contestant.
fn preference_from(letter: char, swapped: bool) -> Preferred {
    match (letter, swapped) {
        ('A', false) | ('B', true) => Preferred::Candidate,
        _ => Preferred::Baseline,
    }
}

const JUDGE_RETRY_PROMPT: &str = "Please reply with exactly one letter: \"A\" or \"B\".";

fn judge_pair_with_swap(
    item: &ComparisonItem,
    provider: &dyn Provider,
    swapped: bool,
) -> Result<Option<Verdict>, JudgeError> {
    item.validate()?;
    let (first, second) =
        if swapped { (&item.baseline, &item.candidate) } else { (&item.candidate, &item.baseline) };
    let prompt = template::render(
        templates::JUDGE_PAIRWISE_V1,
        &[
            ("instruction", item.instruction.as_str()),
            ("response_a", first),
            ("response_b", second),
        ],
    )?;
    let mut messages = vec![ChatMessage::user(prompt)];
    let task = format!("judge-{}", item.id);
    for attempt in 0..2 {
        let request = ChatRequest::new(provider.model(), messages.clone())
            .with_temperature(0.0)
            .with_task(task.clone());
        let reply = provider.complete_chat(&request)?;
        if let Some(letter) = parse_preference(&reply.content) {
            return Ok(Some(Verdict {
                item_id: item.id.clone(),
                preferred: preference_from(letter, swapped),
                swapped,
                judge: provider.model().to_string(),
            }));
        }
        if attempt == 0 {
            messages.push(ChatMessage::assistant(&reply.content));
            messages.push(ChatMessage::user(JUDGE_RETRY_PROMPT));
        }
    }
    Ok(None)
}

/// Judge one item; `None` marks it unjudged after the single parse retry.
pub fn judge_pair(
    item: &ComparisonItem,
    provider: &dyn Provider,
    seed: u64,
) -> Result<Option<Verdict>, JudgeError> {
    judge_pair_with_swap(item, provider, swap_bit(seed, &item.id))
}

/// The verdicts plus the ids of items the judge never answered cleanly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub verdicts: Vec<Verdict>,
    pub unjudged: Vec<String>,
}

/// Judge every item, `workers` at a time; item order is preserved.
pub fn judge_items(
    items: &[ComparisonItem],
    provider: &dyn Provider,
    seed: u64,
    workers: usize,
) -> Result<JudgeOutcome, JudgeError> {
    let results = pool::parallel_map(items, workers, |_, item| judge_pair(item, provider, seed));
    let mut outcome = JudgeOutcome { verdicts: Vec::new(), unjudged: Vec::new() };
    for (item, result) in items.iter().zip(results) {
        match result? {
            Some(verdict) => outcome.verdicts.push(verdict),
            None => {
                log::warn!("item {} unjudged after retry", item.id);
                outcome.unjudged.push(item.id.clone());
            }
        }
    }
    Ok(outcome)
}

/// 100 × (#preferred=candidate) / n.
pub fn raw_win_rate(verdicts: &[Verdict]) -> Result<f64, JudgeError> {
    if verdicts.is_empty() {
        return Err(JudgeError::Empty);
    }
    let wins = verdicts.iter().filter(|v| v.preferred == Preferred::Candidate).count();
    Ok(100.0 * wins as f64 / verdicts.len() as f64)
}

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-4;

/// The fitted length model. `len_scale` is the population standard deviation
/// the raw char-length differences were divided by (1 when the differences
/// are constant), chosen without centering so a zero standardized gap means a
/// zero raw gap and σ(θ₀) is exactly the zero-gap win probability.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LcModel {
    pub theta0: f64,
    pub theta_len: f64,
    pub ridge_lambda: f64,
    pub len_scale: f64,
    pub converged: bool,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// The ridge-penalized Bernoulli log-likelihood (intercept unpenalized).
fn penalized_loglik(xs: &[f64], ys: &[f64], lambda: f64, t0: f64, tl: f64) -> f64 {
    let softplus = |z: f64| {
        if z > 30.0 {
            z
        } else if z < -30.0 {
            z.exp()
        } else {
            (1.0 + z.exp()).ln()
        }
    };
    let mut ll = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let z = t0 + tl * x;
        ll += -y * softplus(-z) - (1.0 - y) * softplus(z);
    }
    ll - lambda * tl * tl
}

/// Newton-fit the two-parameter model on (verdict, length-gap) pairs.
///
/// Iterates to gradient norm ≤ 1e-10 or 100 steps, with step-halving so the
/// objective never decreases. Non-convergence is reported in the model, not
/// an error, so the raw win rate is still usable.
pub fn fit_length_model(
    verdicts: &[Verdict],
    items: &[ComparisonItem],
) -> Result<LcModel, JudgeError> {
    if verdicts.len() < 2 {
        return Err(JudgeError::Domain(format!(
            "need at least 2 verdicts to fit, got {}",
            verdicts.len()
        )));
    }
    let by_id: HashMap<&str, &ComparisonItem> =
        items.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut diffs = Vec::with_capacity(verdicts.len());
    let mut ys = Vec::with_capacity(verdicts.len());
    for v in verdicts {
        let item = by_id.get(v.item_id.as_str()).ok_or_else(|| {
            JudgeError::Domain(format!("verdict for unknown item {}", v.item_id))
        })?;
        diffs.push(item.candidate_len() as f64 - item.baseline_len() as f64);
        ys.push(if v.preferred == Preferred::Candidate { 1.0 } else { 0.0 });
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let len_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let xs: Vec<f64> = diffs.iter().map(|d| d / len_scale).collect();

    let lambda = DEFAULT_RIDGE_LAMBDA;
    let mut t0 = 0.0;
    let mut tl = 0.0;
    let mut converged = false;
    for _ in 0..100 {
        let (mut g0, mut g1) = (0.0, 0.0);
        let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            let p = sigmoid(t0 + tl * x);
            let w = p * (1.0 - p);
            g0 += y - p;
            g1 += (y - p) * x;
            h00 += w;
            h01 += w * x;
            h11 += w * x * x;
        }
        g1 -= 2.0 * lambda * tl;
        h11 += 2.0 * lambda;
        if (g0 * g0 + g1 * g1).sqrt() <= 1e-10 {
            converged = true;
            break;
        }
        let det = h00 * h11 - h01 * h01;
        if det.abs() < 1e-300 {
            break;
        }
        let d0 = (h11 * g0 - h01 * g1) / det;
        let d1 = (-h01 * g0 + h00 * g1) / det;
        // Step-halving keeps ascent monotone when far from the optimum; the
        // 1e-12 tolerance admits full Newton steps near it, where the true
        // improvement sits below the objective's floating-point resolution.
        let base = penalized_loglik(&xs, &ys, lambda, t0, tl);
        let mut step = 1.0;
        let mut accepted = false;
        while step >= 1e-8 {
            let (n0, n1) = (t0 + step * d0, tl + step * d1);
            if penalized_loglik(&xs, &ys, lambda, n0, n1) >= base - 1e-12 {
                t0 = n0;
                tl = n1;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !(t0.is_finite() && tl.is_finite()) {
        return Err(JudgeError::Domain("length-model fit produced non-finite parameters".into()));
    }
    Ok(LcModel { theta0: t0, theta_len: tl, ridge_lambda: lambda, len_scale, converged })
}

/// 100 × σ(θ₀): the model's win probability at zero length gap.
pub fn lc_win_rate(model: &LcModel) -> f64 {
    100.0 * sigmoid(model.theta0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WinRateReport {
    pub n: usize,
    pub unjudged: usize,
    pub raw_wr: f64,
    pub lc_wr: f64,
    pub mean_candidate_chars: f64,
    pub mean_baseline_chars: f64,
    pub lc_converged: bool,
}

impl std::fmt::Display for WinRateReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "judged            {:>10}", self.n)?;
        writeln!(f, "unjudged          {:>10}", self.unjudged)?;
        writeln!(f, "raw win rate      {:>10.2}%", self.raw_wr)?;
        writeln!(f, "lc win rate       {:>10.2}%", self.lc_wr)?;
        writeln!(f, "mean cand chars   {:>10.1}", self.mean_candidate_chars)?;
        writeln!(f, "mean base chars   {:>10.1}", self.mean_baseline_chars)?;
        write!(f, "lc fit converged  {:>10}", self.lc_converged)
    }
}

/// Aggregate verdicts into a report; unjudged items are excluded from the
/// denominator and tallied separately.
pub fn win_rate_report(
    items: &[ComparisonItem],
    outcome: &JudgeOutcome,
) -> Result<WinRateReport, JudgeError> {
    let raw = raw_win_rate(&outcome.verdicts)?;
    let model = fit_length_model(&outcome.verdicts, items)?;
    let judged: Vec<&ComparisonItem> = {
        let by_id: HashMap<&str, &ComparisonItem> =
            items.iter().map(|i| (i.id.as_str(), i)).collect();
        outcome.verdicts.iter().map(|v| by_id[v.item_id.as_str()]).collect()
    };
    let n = judged.len() as f64;
    Ok(WinRateReport {
        n: judged.len(),
        unjudged: outcome.unjudged.len(),
        raw_wr: raw,
        lc_wr: lc_win_rate(&model),
        mean_candidate_chars: judged.iter().map(|i| i.candidate_len() as f64).sum::<f64>() / n,
        mean_baseline_chars: judged.iter().map(|i| i.baseline_len() as f64).sum::<f64>() / n,
        lc_converged: model.converged,
    })
}

/// argmax of held-out LC WR; ties break toward the earliest epoch, and the
/// result does not depend on the enumeration order of `scores`.
pub fn select_checkpoint(scores: &[(u32, f64)]) -> Result<u32, JudgeError> {
    if scores.is_empty() {
        return Err(JudgeError::Empty);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by_key(|(epoch, _)| *epoch);
    let mut best = sorted[0];
    if !best.1.is_finite() {
        return Err(JudgeError::Domain(format!("non-finite score at epoch {}", best.0)));
    }
    for &(epoch, score) in &sorted[1..] {
        if !score.is_finite() {
            return Err(JudgeError::Domain(format!("non-finite score at epoch {epoch}")));
        }
        if score > best.1 {
            best = (epoch, score);
        }
    }
    Ok(best.0)
}
