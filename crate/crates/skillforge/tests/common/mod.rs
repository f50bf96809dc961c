//! Shared helpers for integration tests: an independent maximizer for the
//! penalized logistic objective, used as the oracle the production Newton
//! fit must agree with, plus fixture loading.

#![allow(dead_code)]

use serde::Deserialize;

/// The penalized Bernoulli log-likelihood both fitters maximize:
/// Σ y·log σ(t0 + tl·x) + (1−y)·log(1−σ(·)) − λ·tl²  (intercept unpenalized).
pub fn penalized_loglik(xs: &[f64], ys: &[f64], lambda: f64, t0: f64, tl: f64) -> f64 {
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
        // y·log σ(z) + (1−y)·log(1−σ(z)) = −softplus(−z)·y − softplus(z)·(1−y)
        ll += -y * softplus(-z) - (1.0 - y) * softplus(z);
    }
    ll - lambda * tl * tl
}

/// Golden-section search for the maximum of a unimodal function on [lo, hi].
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > 1e-13 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}

/// Brute-force maximizer: coordinate ascent with golden-section line
/// searches. Slow but independent of the production Newton code path —
/// the only shared piece is the objective definition above.
pub fn oracle_fit(xs: &[f64], ys: &[f64], lambda: f64) -> (f64, f64) {
    let mut t0 = 0.0;
    let mut tl = 0.0;
    for _ in 0..500 {
        let prev = (t0, tl);
        t0 = golden_max(|v| penalized_loglik(xs, ys, lambda, v, tl), -40.0, 40.0);
        tl = golden_max(|v| penalized_loglik(xs, ys, lambda, t0, v), -40.0, 40.0);
        if (t0 - prev.0).abs() < 1e-13 && (tl - prev.1).abs() < 1e-13 {
            break;
        }
    }
    (t0, tl)
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

use rand_chacha::rand_core::RngCore;
use skillforge::judge::{ComparisonItem, Preferred, Verdict};

/// A seeded synthetic comparison set whose preferences are drawn from a
/// known logistic model over the standardized length gap.
///
/// Length gaps are rounded Irwin-Hall approximate normals (±6σ bounded), so
/// every response length stays positive. Returns the items, the verdicts,
/// and the standardized gaps in verdict order for oracle fitting.
pub fn synthetic_set(
    seed: u64,
    theta0: f64,
    theta_len: f64,
    n: usize,
) -> (Vec<ComparisonItem>, Vec<Verdict>, Vec<f64>, Vec<f64>) {
    let mut rng = skillforge::rng::stream(seed, "test.synthetic", 0);
    let mut uniform = move || rng.next_u64() as f64 / u64::MAX as f64;
    let mut gaps: Vec<i64> = Vec::with_capacity(n);
    for _ in 0..n {
        let normal: f64 = (0..12).map(|_| uniform()).sum::<f64>() - 6.0;
        gaps.push((normal * 100.0).round() as i64);
    }
    let diffs: Vec<f64> = gaps.iter().map(|&g| g as f64).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let xs: Vec<f64> = diffs.iter().map(|d| d / scale).collect();

    let base_len: i64 = 1000;
    let mut items = Vec::with_capacity(n);
    let mut verdicts = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for (i, (&gap, &x)) in gaps.iter().zip(&xs).enumerate() {
        let id = format!("item-{i:03}");
        let cand_len = (base_len + gap) as usize;
        items.push(ComparisonItem {
            id: id.clone(),
            instruction: format!("Question {i}?"),
            candidate: "c".repeat(cand_len),
            baseline: "b".repeat(base_len as usize),
        });
        let p = sigmoid(theta0 + theta_len * x);
        let y = uniform() < p;
        ys.push(if y { 1.0 } else { 0.0 });
        verdicts.push(Verdict {
            item_id: id,
            preferred: if y { Preferred::Candidate } else { Preferred::Baseline },
            swapped: false,
            judge: "synthetic".into(),
        });
    }
    (items, verdicts, xs, ys)
}

#[derive(Debug, Deserialize)]
pub struct EpochEntry {
    pub epoch: u32,
    pub lc_wr: f64,
    pub ce_loss: f64,
}

#[derive(Debug, Deserialize)]
pub struct EpochFixture {
    pub version: u32,
    pub entries: Vec<EpochEntry>,
}

pub fn load_epoch_fixture() -> EpochFixture {
    let text = std::fs::read_to_string("fixtures/epoch_lc_wr_v1.json")
        .expect("epoch fixture present");
    serde_json::from_str(&text).expect("epoch fixture parses")
}
