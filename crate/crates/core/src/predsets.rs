//! Threshold calibrators for prediction sets `C_τ(x) = {y : f(x, y) >= τ}`.
//!
//! | method | calibrator | guarantee under label shift |
//! |--------|------------|-----------------------------|
//! | PS     | [`ps_threshold`]  | none (source only) |
//! | PS-W   | [`psw_threshold`] | PAC, worst case over a weight box |
//! | PS-C   | [`psc_threshold`] | PAC, via risk inflation `ε / b` |
//! | PS-R   | [`psr_threshold`] | none (point weights) |
//! | WCP    | [`wcp_threshold`] | marginal only |
//!
//! A row counts as an error for threshold `τ` when its true-label score is
//! strictly below `τ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binomial::{binom_k, binom_k_table, RiskParams};
use crate::error::{Error, Result};
use crate::interval_solver::{Aborted, WeightBox};
use crate::scores::ScoreTable;

/// Calibrated threshold, or one of the two sentinels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ThresholdResult {
    Calibrated { tau: f64 },
    /// No finite threshold is valid; predict every label (`τ = −∞`).
    FullSet,
    /// The weight box could not be built.
    Aborted { abort: Aborted },
}

impl ThresholdResult {
    fn calibrated(tau: f64) -> Self {
        if tau == f64::NEG_INFINITY {
            ThresholdResult::FullSet
        } else {
            ThresholdResult::Calibrated { tau }
        }
    }

    /// `Some(τ)` with `−∞` for the full set; `None` when aborted.
    pub fn tau(&self) -> Option<f64> {
        match self {
            ThresholdResult::Calibrated { tau } => Some(*tau),
            ThresholdResult::FullSet => Some(f64::NEG_INFINITY),
            ThresholdResult::Aborted { .. } => None,
        }
    }

    /// Threshold to deploy: an aborted calibration falls back to the full set.
    pub fn effective_tau(&self) -> f64 {
        self.tau().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn is_aborted(&self) -> bool {
        matches!(self, ThresholdResult::Aborted { .. })
    }
}

/// Acceptance uniforms `V`, one per source row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRandomness {
    pub v: Vec<f64>,
    pub seed: u64,
}

impl AcceptanceRandomness {
    pub fn draw(m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..m).map(|_| rng.random::<f64>()).collect();
        Self { v, seed }
    }

    pub fn from_values(v: Vec<f64>, seed: u64) -> Result<Self> {
        if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::domain(format!("acceptance uniform {x} outside [0,1]")));
        }
        Ok(Self { v, seed })
    }
}

/// Indices of accepted source rows, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptedSample {
    pub indices: Vec<usize>,
}

/// Row with uniform `v` is kept when `v <= w/b`, written as `v·b <= w` so
/// that `w = v·b` lands exactly on the breakpoint. Zero weight keeps nothing.
#[inline]
fn accepts(v: f64, w: f64, b: f64) -> bool {
    w > 0.0 && v * b <= w
}

fn sorted_scores(mut scores: Vec<f64>) -> Vec<f64> {
    scores.sort_by(f64::total_cmp);
    scores
}

/// Largest `τ` among `sorted` with at most `k` scores strictly below it.
fn threshold_from_sorted(sorted: &[f64], k: Option<u64>) -> ThresholdResult {
    match k {
        // k(N) < N whenever it exists, so sorted[k] is in range.
        Some(k) if (k as usize) < sorted.len() => ThresholdResult::calibrated(sorted[k as usize]),
        _ => ThresholdResult::FullSet,
    }
}

/// Standard PAC threshold on source data: the largest observed true-label
/// score whose empirical error count is at most `k(m, ε, δ)`.
pub fn ps_threshold(src: &ScoreTable, rp: RiskParams) -> Result<ThresholdResult> {
    let sorted = sorted_scores(src.true_label_scores()?);
    let k = binom_k(sorted.len() as u64, rp);
    Ok(threshold_from_sorted(&sorted, k))
}

fn check_weights(w: &[f64], num_labels: usize) -> Result<Vec<f64>> {
    if w.len() != num_labels {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {num_labels} labels",
            w.len()
        )));
    }
    if let Some(x) = w.iter().find(|x| !x.is_finite()) {
        return Err(Error::domain(format!("weight {x} is not finite")));
    }
    Ok(w.iter().map(|&x| x.max(0.0)).collect())
}

/// Keeps row `i` when `v_i <= w_{y_i} / b`. Negative weights act as zero.
pub fn rejection_sample(
    src: &ScoreTable,
    v: &AcceptanceRandomness,
    w: &[f64],
    b: f64,
) -> Result<AcceptedSample> {
    let labels = src.require_labels()?;
    if v.v.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} acceptance uniforms for {} source rows",
            v.v.len(),
            labels.len()
        )));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::domain(format!("envelope b must be positive, got {b}")));
    }
    let w = check_weights(w, src.num_labels())?;
    if let Some(x) = w.iter().find(|&&x| x > b) {
        return Err(Error::domain(format!("weight {x} exceeds envelope {b}")));
    }
    let indices = labels
        .iter()
        .zip(&v.v)
        .enumerate()
        .filter(|(_, (&y, &vi))| accepts(vi, w[y], b))
        .map(|(i, _)| i)
        .collect();
    Ok(AcceptedSample { indices })
}

/// Rows of one label ordered by acceptance breakpoint `v·b`, together with
/// every prefix length some `w` in the label's interval can produce.
struct LabelCells {
    scores: Vec<f64>,
    prefix_lengths: Vec<usize>,
}

fn label_cells(breakpoints_scores: &mut [(f64, f64)], lo: f64, hi: f64) -> LabelCells {
    breakpoints_scores.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t: Vec<f64> = breakpoints_scores.iter().map(|p| p.0).collect();
    let count = |w: f64| if w > 0.0 { t.partition_point(|&x| x <= w) } else { 0 };

    let mut lengths = vec![count(lo), count(hi)];
    if lo <= 0.0 && hi > 0.0 {
        lengths.push(count(f64::MIN_POSITIVE.min(hi)));
    }
    lengths.extend(t.iter().filter(|&&x| x >= lo && x <= hi && x > 0.0).map(|&x| count(x)));
    lengths.sort_unstable();
    lengths.dedup();
    LabelCells { scores: breakpoints_scores.iter().map(|p| p.1).collect(), prefix_lengths: lengths }
}

/// Worst-case threshold over a weight box:
/// `min_{w ∈ W} τ̂(rejection_sample(src, v, w, b))` with `b = W.envelope_b`.
///
/// For each label the accepted rows form a prefix of that label's rows in
/// breakpoint order, so the box collapses to finitely many prefix-length
/// combinations. A candidate `τ` survives iff for every reachable total
/// sample size `N`, the largest achievable error count among the accepted
/// rows is at most `k(N, ε, δ)`; that maximum comes from a max-plus
/// convolution over labels. Survival is monotone in `τ`, so the answer is
/// found by bisection over the observed true-label scores.
pub fn psw_threshold(
    src: &ScoreTable,
    v: &AcceptanceRandomness,
    wbox: &WeightBox,
    rp: RiskParams,
) -> Result<ThresholdResult> {
    let labels = src.require_labels()?;
    let k = src.num_labels();
    if wbox.dim() != k {
        return Err(Error::DimensionMismatch(format!(
            "weight box has {} labels, scores have {k}",
            wbox.dim()
        )));
    }
    if v.v.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} acceptance uniforms for {} source rows",
            v.v.len(),
            labels.len()
        )));
    }
    let b = wbox.envelope_b;
    let true_scores = src.true_label_scores()?;

    let mut per_label: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
    for ((&y, &vi), &s) in labels.iter().zip(&v.v).zip(&true_scores) {
        per_label[y].push((vi * b, s));
    }
    let cells: Vec<LabelCells> = per_label
        .iter_mut()
        .enumerate()
        .map(|(y, rows)| label_cells(rows, wbox.lo[y].max(0.0), wbox.hi[y].max(0.0)))
        .collect();

    let m = labels.len();
    let k_table: Vec<i64> =
        binom_k_table(m as u64, rp).into_iter().map(|k| k.map_or(-1, |k| k as i64)).collect();

    let mut candidates = sorted_scores(true_scores);
    candidates.dedup();
    if candidates.is_empty() {
        return Ok(ThresholdResult::FullSet);
    }

    let survives = |tau: f64| worst_case_survives(&cells, &k_table, tau);
    if !survives(candidates[0]) {
        return Ok(ThresholdResult::FullSet);
    }
    // Invariant: candidates[lo] survives, candidates[hi] (if in range) does not.
    let (mut lo, mut hi) = (0usize, candidates.len());
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if survives(candidates[mid]) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThresholdResult::calibrated(candidates[lo]))
}

fn worst_case_survives(cells: &[LabelCells], k_table: &[i64], tau: f64) -> bool {
    const UNREACHABLE: i64 = i64::MIN;
    let total: usize = cells.iter().map(|c| c.scores.len()).sum();
    let mut best = vec![UNREACHABLE; total + 1];
    best[0] = 0;
    let mut reach = 0usize;
    let mut next = vec![UNREACHABLE; total + 1];

    for cell in cells {
        let mut errors_in_prefix = Vec::with_capacity(cell.scores.len() + 1);
        errors_in_prefix.push(0i64);
        let mut e = 0i64;
        for &s in &cell.scores {
            if s < tau {
                e += 1;
            }
            errors_in_prefix.push(e);
        }
        let top = *cell.prefix_lengths.last().unwrap_or(&0);
        next[..=reach + top].fill(UNREACHABLE);
        for n in 0..=reach {
            let base = best[n];
            if base == UNREACHABLE {
                continue;
            }
            for &j in &cell.prefix_lengths {
                let cand = base + errors_in_prefix[j];
                let slot = &mut next[n + j];
                if cand > *slot {
                    *slot = cand;
                }
            }
        }
        reach += top;
        std::mem::swap(&mut best, &mut next);
    }
    best[..=reach]
        .iter()
        .zip(k_table)
        .all(|(&errs, &k)| errs == UNREACHABLE || errs <= k)
}

/// Conservative baseline: plain PS at error level `ε / b`.
///
/// `b` is the box envelope floored at 1; the true weights average to one
/// under the source, so any valid envelope is at least 1 anyway.
pub fn psc_threshold(src: &ScoreTable, wbox: &WeightBox, rp: RiskParams) -> Result<ThresholdResult> {
    let b = wbox.envelope_b.max(1.0);
    ps_threshold(src, RiskParams { epsilon: rp.epsilon / b, delta: rp.delta })
}

/// Rejection sampling with point weights and `b = max w`, then plain PS.
pub fn psr_threshold(
    src: &ScoreTable,
    v: &AcceptanceRandomness,
    pointw: &[f64],
    rp: RiskParams,
) -> Result<ThresholdResult> {
    let w = check_weights(pointw, src.num_labels())?;
    let b = w.iter().copied().fold(0.0, f64::max);
    if b <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    let accepted = rejection_sample(src, v, &w, b)?;
    ps_threshold(&src.select(&accepted.indices), rp)
}

/// Weighted split-conformal threshold with plug-in weights: the largest
/// observed score `t` whose weighted share of scores below `t` is at most
/// `eps`. No test-point correction term is added.
pub fn wcp_threshold(src: &ScoreTable, pointw: &[f64], eps: f64) -> Result<ThresholdResult> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0,1), got {eps}")));
    }
    let labels = src.require_labels()?;
    let w = check_weights(pointw, src.num_labels())?;
    let scores = src.true_label_scores()?;
    let mut weighted: Vec<(f64, f64)> = labels
        .iter()
        .zip(scores)
        .map(|(&y, s)| (s, w[y]))
        .filter(|&(_, wt)| wt > 0.0)
        .collect();
    let total: f64 = weighted.iter().map(|p| p.1).sum();
    if weighted.is_empty() || total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    weighted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut below = 0.0;
    let mut best = f64::NEG_INFINITY;
    let mut i = 0;
    while i < weighted.len() {
        let t = weighted[i].0;
        if below / total > eps {
            break;
        }
        best = t;
        while i < weighted.len() && weighted[i].0 == t {
            below += weighted[i].1;
            i += 1;
        }
    }
    Ok(ThresholdResult::calibrated(best))
}

/// Prediction-set error rate and mean set size on labeled test data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub error: f64,
    pub avg_size: f64,
}

/// Aborted thresholds are evaluated as the full set.
pub fn evaluate_set(tau: &ThresholdResult, test: &ScoreTable) -> Result<SetMetrics> {
    let labels = test.require_labels()?;
    if labels.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty test table".into()));
    }
    let t = tau.effective_tau();
    let mut errors = 0u64;
    let mut size = 0u64;
    for (row, &y) in test.rows().zip(labels) {
        if row[y] < t {
            errors += 1;
        }
        size += row.iter().filter(|&&s| s >= t).count() as u64;
    }
    let n = labels.len() as f64;
    Ok(SetMetrics { error: errors as f64 / n, avg_size: size as f64 / n })
}
