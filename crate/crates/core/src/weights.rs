//! Confusion-matrix and predicted-label-frequency estimates, and the
//! importance weights derived from them.
//!
//! `C[i][j]` counts source rows predicted `i` with true label `j`; `q[k]`
//! counts target rows predicted `k`. Under label shift `C w* = q*`, so the
//! plug-in solve gives point weights and the interval solve gives a box.

use serde::{Deserialize, Serialize};

use crate::binomial::cp_interval;
use crate::error::{Error, Result};
use crate::interval_solver::{interval_gauss_elim, IntervalMatrix, IntervalVector, SolveMode, WeightBox};
use crate::scores::ScoreTable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionEstimate {
    pub num_labels: usize,
    /// Row-major joint counts, `counts[i * K + j]` = #{predicted i, label j}.
    pub counts: Vec<u64>,
    pub m: u64,
}

impl ConfusionEstimate {
    pub fn count(&self, predicted: usize, label: usize) -> u64 {
        self.counts[predicted * self.num_labels + label]
    }

    /// Plug-in joint probabilities `counts / m`.
    pub fn frequencies(&self) -> Vec<f64> {
        let m = self.m as f64;
        self.counts.iter().map(|&c| c as f64 / m).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDistEstimate {
    pub counts: Vec<u64>,
    pub n: u64,
}

impl LabelDistEstimate {
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// How a total failure budget `δ` is divided among the `K(K+1)` interval
/// estimates and the final threshold calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaBudget {
    pub total: f64,
    pub num_labels: usize,
    /// Budget handed to the interval stage, `K(K+1)/(K(K+1)+1) · δ`.
    pub intervals_total: f64,
    /// Level of each Clopper-Pearson interval, `δ/(K(K+1)+1)`.
    pub per_interval: f64,
    /// Budget left for threshold calibration, `δ/(K(K+1)+1)`.
    pub calibration: f64,
}

impl DeltaBudget {
    pub fn split(total: f64, num_labels: usize) -> Self {
        let intervals = (num_labels * (num_labels + 1)) as f64;
        Self {
            total,
            num_labels,
            intervals_total: intervals / (intervals + 1.0) * total,
            per_interval: total / (intervals + 1.0),
            calibration: total / (intervals + 1.0),
        }
    }

    pub fn num_intervals(&self) -> usize {
        self.num_labels * (self.num_labels + 1)
    }
}

pub fn estimate_confusion(src: &ScoreTable) -> Result<ConfusionEstimate> {
    let labels = src.require_labels()?;
    let k = src.num_labels();
    let mut counts = vec![0u64; k * k];
    for (i, &y) in labels.iter().enumerate() {
        counts[src.predict(i) * k + y] += 1;
    }
    Ok(ConfusionEstimate { num_labels: k, counts, m: src.len() as u64 })
}

/// Predicted-label counts on a (typically unlabeled) target table.
pub fn estimate_qhat(tgt: &ScoreTable) -> LabelDistEstimate {
    let mut counts = vec![0u64; tgt.num_labels()];
    for i in 0..tgt.len() {
        counts[tgt.predict(i)] += 1;
    }
    LabelDistEstimate { counts, n: tgt.len() as u64 }
}

/// Clopper-Pearson intervals for every confusion entry and every target
/// frequency, each at level `delta_total / (K(K+1))`, so all hold jointly
/// with probability at least `1 - delta_total`.
pub fn cp_bounds(
    conf: &ConfusionEstimate,
    qh: &LabelDistEstimate,
    delta_total: f64,
) -> Result<(IntervalMatrix, IntervalVector)> {
    let k = conf.num_labels;
    if qh.counts.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "confusion matrix has K = {k} but target counts have {} entries",
            qh.counts.len()
        )));
    }
    if !(delta_total > 0.0 && delta_total < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0,1), got {delta_total}")));
    }
    let level = delta_total / (k * (k + 1)) as f64;
    let mut clo = Vec::with_capacity(k * k);
    let mut chi = Vec::with_capacity(k * k);
    for &c in &conf.counts {
        let ci = cp_interval(c, conf.m, level)?;
        clo.push(ci.lo);
        chi.push(ci.hi);
    }
    let mut qlo = Vec::with_capacity(k);
    let mut qhi = Vec::with_capacity(k);
    for &c in &qh.counts {
        let ci = cp_interval(c, qh.n, level)?;
        qlo.push(ci.lo);
        qhi.push(ci.hi);
    }
    Ok((IntervalMatrix::new(k, clo, chi)?, IntervalVector::new(qlo, qhi)?))
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve_dense(dim: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    for col in 0..dim {
        let (piv, mag) = (col..dim)
            .map(|r| (r, a[r * dim + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if mag < 1e-12 {
            return Err(Error::SingularMatrix { pivot: col, magnitude: mag });
        }
        if piv != col {
            for j in 0..dim {
                a.swap(piv * dim + j, col * dim + j);
            }
            b.swap(piv, col);
        }
        let d = a[col * dim + col];
        for r in col + 1..dim {
            let f = a[r * dim + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..dim {
                a[r * dim + j] -= f * a[col * dim + j];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; dim];
    for i in (0..dim).rev() {
        let s: f64 = (i + 1..dim).map(|j| a[i * dim + j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i * dim + i];
    }
    Ok(x)
}

/// Black-box shift estimate: solves `ĉ w = q̂` and clamps negatives to zero.
pub fn bbse_point_weights(conf: &ConfusionEstimate, qh: &LabelDistEstimate) -> Result<Vec<f64>> {
    let k = conf.num_labels;
    if qh.counts.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "confusion matrix has K = {k} but target counts have {} entries",
            qh.counts.len()
        )));
    }
    if conf.m == 0 || qh.n == 0 {
        return Err(Error::Data("point weights need nonempty source and target".into()));
    }
    let w = solve_dense(k, conf.frequencies(), qh.frequencies())?;
    Ok(w.into_iter().map(|v| v.max(0.0)).collect())
}

/// Confusion/frequency estimation, Clopper-Pearson bounds at
/// `delta_total`, then interval elimination.
pub fn weight_box(
    src: &ScoreTable,
    tgt: &ScoreTable,
    delta_total: f64,
    mode: SolveMode,
) -> Result<WeightBox> {
    if src.num_labels() != tgt.num_labels() {
        return Err(Error::DimensionMismatch(format!(
            "source has K = {} but target has K = {}",
            src.num_labels(),
            tgt.num_labels()
        )));
    }
    let conf = estimate_confusion(src)?;
    let qh = estimate_qhat(tgt);
    let (c, q) = cp_bounds(&conf, &qh, delta_total)?;
    interval_gauss_elim(&c, &q, mode)
}
