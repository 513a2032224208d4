//! Interval Gaussian elimination.
//!
//! Solves `C w = q` when every entry of `C` and `q` is only known to lie in
//! an interval, returning a box that contains `C⁻¹ q` for every admissible
//! `(C, q)`. The forward sweep tracks lower/upper bounds for each
//! intermediate entry of the elimination; back-substitution then bounds the
//! partial sums and the solution.
//!
//! Two update rules are available:
//!
//! - [`SolveMode::Strict`] uses the sign-specific endpoint formulas that are
//!   valid while every off-diagonal lower bound stays nonnegative, and
//!   aborts as soon as one turns negative.
//! - [`SolveMode::Relaxed`] bounds every product `x·y/z` by the extremes over
//!   the eight endpoint combinations and uses full interval products in
//!   back-substitution, so negative entries are allowed.
//!
//! No row exchanges are performed; a non-positive pivot lower bound aborts.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    Strict,
    #[default]
    Relaxed,
}

impl std::str::FromStr for SolveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(SolveMode::Strict),
            "relaxed" => Ok(SolveMode::Relaxed),
            other => Err(Error::Config(format!("unknown solve mode '{other}'"))),
        }
    }
}

impl fmt::Display for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveMode::Strict => f.write_str("strict"),
            SolveMode::Relaxed => f.write_str("relaxed"),
        }
    }
}

/// Elementwise bounds `lo <= C <= hi` on a square matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMatrix {
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl IntervalMatrix {
    /// Builds a `K × K` interval matrix from row-major bound vectors.
    pub fn new(dim: usize, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimensionMismatch(format!(
                "interval matrix needs K >= 2, got {dim}"
            )));
        }
        if lo.len() != dim * dim || hi.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries per bound, got {} and {}",
                dim * dim,
                lo.len(),
                hi.len()
            )));
        }
        check_ordered(&lo, &hi)?;
        Ok(Self { dim, lo, hi })
    }

    pub fn from_rows(lo: &[Vec<f64>], hi: &[Vec<f64>]) -> Result<Self> {
        let dim = lo.len();
        if hi.len() != dim || lo.iter().chain(hi).any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("interval matrix rows must be square".into()));
        }
        Self::new(dim, lo.concat(), hi.concat())
    }

    /// Zero-width intervals around `c`.
    pub fn point(dim: usize, c: Vec<f64>) -> Result<Self> {
        Self::new(dim, c.clone(), c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self, i: usize, j: usize) -> f64 {
        self.lo[i * self.dim + j]
    }

    pub fn hi(&self, i: usize, j: usize) -> f64 {
        self.hi[i * self.dim + j]
    }

    pub fn contains(&self, c: &[f64]) -> bool {
        c.len() == self.lo.len()
            && c.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| l <= v && v <= h)
    }

    fn at(&self, i: usize, j: usize) -> (f64, f64) {
        let idx = i * self.dim + j;
        (self.lo[idx], self.hi[idx])
    }

    fn set(&mut self, i: usize, j: usize, (lo, hi): (f64, f64)) {
        let idx = i * self.dim + j;
        self.lo[idx] = lo;
        self.hi[idx] = hi;
    }
}

/// Elementwise bounds `lo <= q <= hi` on a vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalVector {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl IntervalVector {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch(format!(
                "bound lengths differ: {} vs {}",
                lo.len(),
                hi.len()
            )));
        }
        check_ordered(&lo, &hi)?;
        Ok(Self { lo, hi })
    }

    pub fn point(v: Vec<f64>) -> Self {
        Self { lo: v.clone(), hi: v }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.lo.len()
            && v.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| l <= x && x <= h)
    }
}

fn check_ordered(lo: &[f64], hi: &[f64]) -> Result<()> {
    for (i, (l, h)) in lo.iter().zip(hi).enumerate() {
        if !(l.is_finite() && h.is_finite()) || l > h {
            return Err(Error::domain(format!("entry {i}: invalid bounds [{l}, {h}]")));
        }
    }
    Ok(())
}

/// Box `W = Π_k [lo_k, hi_k]` around the importance weights, plus the
/// envelope `b = max_k hi_k`.
///
/// Lower bounds may be negative; consumers clamp them to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub envelope_b: f64,
}

impl WeightBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch("weight box bounds must match".into()));
        }
        check_ordered(&lo, &hi)?;
        if let Some(k) = hi.iter().position(|&h| h <= 0.0) {
            return Err(Error::domain(format!("weight upper bound {k} is not positive")));
        }
        let envelope_b = hi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { lo, hi, envelope_b })
    }

    /// Singleton box `{w}`.
    pub fn point(w: Vec<f64>) -> Result<Self> {
        Self::new(w.clone(), w)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.lo.len()
            && w.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| l <= x && x <= h)
    }

    pub fn max_width(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).fold(0.0, f64::max)
    }
}

/// Why interval elimination gave up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbortReason {
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    NonPositivePivot { row: usize, value: f64 },
    NonPositiveRhs { row: usize, value: f64 },
    NonPositiveWeightUpper { row: usize, value: f64 },
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AbortReason::NegativeOffDiagonal { row, col, value } => {
                write!(f, "off-diagonal lower bound c[{row}][{col}] = {value:e} is negative")
            }
            AbortReason::NonPositivePivot { row, value } => {
                write!(f, "diagonal lower bound c[{row}][{row}] = {value:e} is not positive")
            }
            AbortReason::NonPositiveRhs { row, value } => {
                write!(f, "right-hand-side lower bound q[{row}] = {value:e} is not positive")
            }
            AbortReason::NonPositiveWeightUpper { row, value } => {
                write!(f, "weight upper bound w[{row}] = {value:e} is not positive")
            }
        }
    }
}

/// Elimination aborted at `step` (0 = input check, `1..K-1` = sweep steps,
/// `K` = back-substitution). Rows and columns are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Error, Serialize, Deserialize)]
#[error("interval elimination aborted at step {step}: {reason}")]
pub struct Aborted {
    pub step: usize,
    pub reason: AbortReason,
}

/// Bounds on `x·y/z` for `x ∈ [xl, xh]`, `y ∈ [yl, yh]`, `z ∈ [zl, zh]`, `zl > 0`.
///
/// The expression is bilinear in (x, y) and monotone in z for fixed sign,
/// so its extremes sit on the eight corners.
fn ratio_product_bounds(x: (f64, f64), y: (f64, f64), z: (f64, f64)) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for xv in [x.0, x.1] {
        for yv in [y.0, y.1] {
            for zv in [z.0, z.1] {
                let r = xv * yv / zv;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
    }
    (lo, hi)
}

fn product_bounds(x: (f64, f64), y: (f64, f64)) -> (f64, f64) {
    let c = [x.0 * y.0, x.0 * y.1, x.1 * y.0, x.1 * y.1];
    (
        c.iter().copied().fold(f64::INFINITY, f64::min),
        c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

fn quotient_bounds(x: (f64, f64), z: (f64, f64)) -> (f64, f64) {
    let c = [x.0 / z.0, x.0 / z.1, x.1 / z.0, x.1 / z.1];
    (
        c.iter().copied().fold(f64::INFINITY, f64::min),
        c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

fn check_state(
    c: &IntervalMatrix,
    q: &IntervalVector,
    mode: SolveMode,
    step: usize,
) -> std::result::Result<(), Aborted> {
    let k = c.dim;
    for i in 0..k {
        let d = c.lo(i, i);
        if d <= 0.0 {
            return Err(Aborted { step, reason: AbortReason::NonPositivePivot { row: i, value: d } });
        }
    }
    if mode == SolveMode::Strict {
        for i in 0..k {
            for j in (0..k).filter(|&j| j != i) {
                let v = c.lo(i, j);
                if v < 0.0 {
                    return Err(Aborted {
                        step,
                        reason: AbortReason::NegativeOffDiagonal { row: i, col: j, value: v },
                    });
                }
            }
        }
    }
    for (i, &v) in q.lo.iter().enumerate() {
        if v <= 0.0 {
            return Err(Aborted { step, reason: AbortReason::NonPositiveRhs { row: i, value: v } });
        }
    }
    Ok(())
}

/// Propagates entrywise intervals on `(C, q)` through Gaussian elimination.
///
/// If the true system lies inside the inputs and no abort occurs, the exact
/// solution `C⁻¹ q` lies inside the returned box. Dimension mismatches are
/// reported as [`Error::DimensionMismatch`]; positivity failures during
/// elimination as [`Error::Aborted`].
pub fn interval_gauss_elim(
    c: &IntervalMatrix,
    q: &IntervalVector,
    mode: SolveMode,
) -> Result<WeightBox> {
    let k = c.dim;
    if q.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {k}x{k} but right-hand side has {} entries",
            q.len()
        )));
    }
    Ok(eliminate(c.clone(), q.clone(), mode)?)
}

/// One elimination step with row `pivot`, applied to every row below it.
fn sweep_step(c: &mut IntervalMatrix, q: &mut IntervalVector, pivot: usize, mode: SolveMode) {
    let k = c.dim;
    let (pl, ph) = c.at(pivot, pivot);
    for i in pivot + 1..k {
        let (ail, aih) = c.at(i, pivot);
        for j in pivot + 1..k {
            let (cl, ch) = c.at(i, j);
            let (rl, rh) = c.at(pivot, j);
            let next = match mode {
                SolveMode::Strict => (cl - aih * rh / pl, ch - ail * rl / ph),
                SolveMode::Relaxed => {
                    let (lo, hi) = ratio_product_bounds((ail, aih), (rl, rh), (pl, ph));
                    (cl - hi, ch - lo)
                }
            };
            c.set(i, j, next);
        }
        // Pivot-row right-hand side, matching the exact update
        // q_i - c_ik q_k / c_kk.
        let (ql, qh) = (q.lo[i], q.hi[i]);
        let (pql, pqh) = (q.lo[pivot], q.hi[pivot]);
        let (nl, nh) = match mode {
            SolveMode::Strict => (ql - aih * pqh / pl, qh - ail * pql / ph),
            SolveMode::Relaxed => {
                let (lo, hi) = ratio_product_bounds((ail, aih), (pql, pqh), (pl, ph));
                (ql - hi, qh - lo)
            }
        };
        q.lo[i] = nl;
        q.hi[i] = nh;
        for j in 0..=pivot {
            c.set(i, j, (0.0, 0.0));
        }
    }
}

fn eliminate(
    mut c: IntervalMatrix,
    mut q: IntervalVector,
    mode: SolveMode,
) -> std::result::Result<WeightBox, Aborted> {
    let k = c.dim;
    check_state(&c, &q, mode, 0)?;
    for pivot in 0..k - 1 {
        sweep_step(&mut c, &mut q, pivot, mode);
        check_state(&c, &q, mode, pivot + 1)?;
    }

    let mut wl = vec![0.0; k];
    let mut wh = vec![0.0; k];
    for i in (0..k).rev() {
        let (dl, dh) = c.at(i, i);
        let (lo, hi) = match mode {
            SolveMode::Strict => {
                let mut sl = 0.0;
                let mut sh = 0.0;
                for j in i + 1..k {
                    sl += c.lo(i, j) * wl[j];
                    sh += c.hi(i, j) * wh[j];
                }
                ((q.lo[i] - sh) / dh, (q.hi[i] - sl) / dl)
            }
            SolveMode::Relaxed => {
                let mut sl = 0.0;
                let mut sh = 0.0;
                for j in i + 1..k {
                    let (pl, ph) = product_bounds(c.at(i, j), (wl[j], wh[j]));
                    sl += pl;
                    sh += ph;
                }
                quotient_bounds((q.lo[i] - sh, q.hi[i] - sl), (dl, dh))
            }
        };
        wl[i] = lo;
        wh[i] = hi;
    }
    if let Some(row) = wh.iter().position(|&h| h <= 0.0) {
        return Err(Aborted {
            step: k,
            reason: AbortReason::NonPositiveWeightUpper { row, value: wh[row] },
        });
    }
    let envelope_b = wh.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(WeightBox { lo: wl, hi: wh, envelope_b })
}

/// Runs the first `steps` elimination steps and returns the intermediate
/// bounds. Aborts under the same conditions as [`interval_gauss_elim`].
pub fn forward_sweep(
    c: &IntervalMatrix,
    q: &IntervalVector,
    mode: SolveMode,
    steps: usize,
) -> std::result::Result<(IntervalMatrix, IntervalVector), Aborted> {
    let mut c = c.clone();
    let mut q = q.clone();
    check_state(&c, &q, mode, 0)?;
    for pivot in 0..steps.min(c.dim - 1) {
        sweep_step(&mut c, &mut q, pivot, mode);
        check_state(&c, &q, mode, pivot + 1)?;
    }
    Ok((c, q))
}
