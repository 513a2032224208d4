//! Exact binomial machinery: CDF, tail inversion `k(m, ε, δ)` and
//! Clopper-Pearson intervals.
//!
//! Point probabilities use Loader's saddle-point expansion (`stirlerr` +
//! `bd0`), which keeps full relative precision for every term even when
//! `m` is in the hundreds of thousands. The CDF sums terms outward from
//! `k` toward the tail, so every summand is smaller than the last and the
//! loop stops once the remaining mass is below double precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Error budget `epsilon` and failure budget `delta`, both in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl RiskParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::domain(format!("epsilon must lie in (0,1), got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Two-sided confidence interval for a binomial success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfInterval {
    pub lo: f64,
    pub hi: f64,
    /// Miscoverage level the interval was built for.
    pub level: f64,
}

impl ConfInterval {
    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(n!) - ln(sqrt(2 pi n) (n/e)^n)`, the Stirling remainder.
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;

    if n <= 15.0 {
        if n == 0.0 {
            return 0.0;
        }
        // n! is exact in f64 up to 22!, so ln(n!) is correct to an ulp.
        let mut fact = 1.0_f64;
        let mut i = 2.0;
        while i <= n {
            fact *= i;
            i += 1.0;
        }
        return fact.ln() - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/np) + np - x`, accurate when `x ≈ np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        let mut j = 1.0;
        loop {
            ej *= v2;
            let s1 = s + ej / (2.0 * j + 1.0);
            if s1 == s {
                return s1;
            }
            s = s1;
            j += 1.0;
        }
    }
    x * (x / np).ln() + np - x
}

/// `P[X = x]` for `X ~ Bin(n, p)` with `q = 1 - p` passed separately.
fn pmf_raw(x: u64, n: u64, p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return if x == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if x == n { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    if x == 0 {
        if n == 0 {
            return 1.0;
        }
        let lc = if p < 0.1 { -bd0(nf, nf * q) - nf * p } else { nf * q.ln() };
        return lc.exp();
    }
    if x == n {
        let lc = if q < 0.1 { -bd0(nf, nf * p) - nf * q } else { nf * p.ln() };
        return lc.exp();
    }
    let xf = x as f64;
    let rest = nf - xf;
    let lc = stirlerr(nf) - stirlerr(xf) - stirlerr(rest) - bd0(xf, nf * p) - bd0(rest, nf * q);
    let lf = LN_2PI + xf.ln() + (-xf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// Binomial probability mass `P[X = k]` for `X ~ Bin(m, eps)`.
pub fn binom_pmf(k: u64, m: u64, eps: f64) -> Result<f64> {
    check_cdf_args(k, m, eps)?;
    Ok(pmf_raw(k, m, eps, 1.0 - eps))
}

fn check_cdf_args(k: u64, m: u64, eps: f64) -> Result<()> {
    if k > m {
        return Err(Error::domain(format!("k = {k} exceeds m = {m}")));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::domain(format!("probability must lie in [0,1], got {eps}")));
    }
    Ok(())
}

/// `F(k; m, eps) = P[X <= k]` for `X ~ Bin(m, eps)`.
pub fn binom_cdf(k: u64, m: u64, eps: f64) -> Result<f64> {
    check_cdf_args(k, m, eps)?;
    Ok(cdf_unchecked(k, m, eps))
}

pub(crate) fn cdf_unchecked(k: u64, m: u64, p: f64) -> f64 {
    if k >= m || p == 0.0 {
        return 1.0;
    }
    if p == 1.0 {
        return 0.0;
    }
    let q = 1.0 - p;
    if (k as f64) <= m as f64 * p {
        // Below the mean terms shrink as i decreases.
        let mut sum = 0.0;
        let mut i = k;
        loop {
            let term = pmf_raw(i, m, p, q);
            sum += term;
            if i == 0 || term <= sum * 1e-17 {
                break;
            }
            i -= 1;
        }
        sum.min(1.0)
    } else {
        let mut upper = 0.0;
        let mut i = k + 1;
        loop {
            let term = pmf_raw(i, m, p, q);
            upper += term;
            if i == m || term <= upper * 1e-17 {
                break;
            }
            i += 1;
        }
        (1.0 - upper).max(0.0)
    }
}

/// Largest `k` with `F(k; m, ε) <= δ`, or `None` when even `F(0) > δ`.
///
/// `None` is the "no feasible k" sentinel; threshold calibrators map it to
/// the full label set.
pub fn binom_k(m: u64, rp: RiskParams) -> Option<u64> {
    let RiskParams { epsilon, delta } = rp;
    let feasible = |k: u64| cdf_unchecked(k, m, epsilon) <= delta;
    if !feasible(0) {
        return None;
    }
    // F(m) = 1 > delta, so an infeasible upper bracket always exists.
    let mut lo = 0;
    let mut hi = 1;
    while hi < m && feasible(hi) {
        lo = hi;
        hi = (hi * 2).min(m);
    }
    if hi >= m {
        hi = m;
    }
    // Invariant: feasible(lo), !feasible(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// `k(N, ε, δ)` for every `N` in `0..=max_n`.
///
/// Uses `k(N) <= k(N+1) <= k(N) + 1`, so each entry costs one CDF call.
pub fn binom_k_table(max_n: u64, rp: RiskParams) -> Vec<Option<u64>> {
    let mut out = Vec::with_capacity(max_n as usize + 1);
    let mut current: Option<u64> = None;
    for n in 0..=max_n {
        let next = current.map_or(0, |k| k + 1);
        if next < n && cdf_unchecked(next, n, rp.epsilon) <= rp.delta {
            current = Some(next);
        }
        out.push(current);
    }
    out
}

/// Exact two-sided Clopper-Pearson interval at miscoverage `level`.
pub fn cp_interval(successes: u64, trials: u64, level: f64) -> Result<ConfInterval> {
    if trials == 0 {
        return Err(Error::domain("Clopper-Pearson interval needs at least one trial"));
    }
    if successes > trials {
        return Err(Error::domain(format!(
            "successes = {successes} exceeds trials = {trials}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("level must lie in (0,1), got {level}")));
    }
    let half = level / 2.0;

    // lo solves P[X >= x; p] = level/2; the upper tail grows with p.
    let lo = if successes == 0 {
        0.0
    } else {
        let upper_tail = |p: f64| 1.0 - cdf_unchecked(successes - 1, trials, p);
        bisect(|p| upper_tail(p) < half).0
    };
    // hi solves P[X <= x; p] = level/2; the CDF falls with p.
    let hi = if successes == trials {
        1.0
    } else {
        bisect(|p| cdf_unchecked(successes, trials, p) > half).1
    };
    Ok(ConfInterval { lo, hi, level })
}

/// Bisection on [0, 1] for the switch point of a predicate that holds on a
/// prefix. Returns the final bracket `(last true, first false)`.
fn bisect(below: impl Fn(f64) -> bool) -> (f64, f64) {
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if below(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    (a, b)
}
