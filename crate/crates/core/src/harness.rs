//! Repeated-trial experiments.
//!
//! Every trial draws fresh source/target/test tables and fresh acceptance
//! uniforms from its own seed stream, calibrates each requested method on
//! the same data, and scores every method on the same test table. Trials
//! run in parallel; reports come back ordered by trial index.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::RiskParams;
use crate::error::{Error, Result};
use crate::interval_solver::{SolveMode, WeightBox};
use crate::predsets::{
    evaluate_set, ps_threshold, psc_threshold, psr_threshold, psw_threshold, wcp_threshold,
    AcceptanceRandomness, ThresholdResult,
};
use crate::scores::ScoreTable;
use crate::shift_sim::{sample_shifted, true_weights, ShiftSpec, SyntheticModel};
use crate::weights::{bbse_point_weights, estimate_confusion, estimate_qhat, weight_box, DeltaBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PS")]
    Ps,
    #[serde(rename = "PS-W")]
    PsW,
    #[serde(rename = "PS-C")]
    PsC,
    #[serde(rename = "PS-R")]
    PsR,
    #[serde(rename = "WCP")]
    Wcp,
    #[serde(rename = "ORACLE")]
    Oracle,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Ps, Method::PsW, Method::PsC, Method::PsR, Method::Wcp, Method::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ps => "PS",
            Method::PsW => "PS-W",
            Method::PsC => "PS-C",
            Method::PsR => "PS-R",
            Method::Wcp => "WCP",
            Method::Oracle => "ORACLE",
        }
    }

    /// Whether the method needs the interval weight box.
    fn needs_box(self) -> bool {
        matches!(self, Method::PsW | Method::PsC)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm || m.name().replace('-', "") == norm)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// One method's outcome on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub method: Method,
    pub trial: usize,
    pub seed: u64,
    pub error: f64,
    pub avg_size: f64,
    /// `None` encodes `τ = −∞` (full set, or the fallback after an abort).
    pub tau: Option<f64>,
    pub aborted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_box: Option<WeightBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: ShiftSpec,
    pub model: SyntheticModel,
    pub methods: Vec<Method>,
    pub risk: RiskParams,
    pub trials: usize,
    pub seed: u64,
    pub mode: SolveMode,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of `stream` within `trial`, a pure function of the master seed so
/// trials can run in any order.
pub fn trial_seed(master: u64, trial: usize, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64((trial as u64) << 8 | stream))
}

const DATA_STREAM: u64 = 0;
const ACCEPT_STREAM: u64 = 1;

/// Calibrates one method given already-drawn data.
///
/// The PS-W / PS-C weight box is computed at `K(K+1)/(K(K+1)+1) · δ` and the
/// threshold step gets the remaining `δ/(K(K+1)+1)`.
pub fn calibrate_method(
    method: Method,
    source: &ScoreTable,
    target: &ScoreTable,
    v: &AcceptanceRandomness,
    risk: RiskParams,
    mode: SolveMode,
    oracle_weights: Option<&[f64]>,
) -> Result<(ThresholdResult, Option<WeightBox>)> {
    let budget = DeltaBudget::split(risk.delta, source.num_labels());
    let residual = RiskParams { epsilon: risk.epsilon, delta: budget.calibration };
    let point = || -> Result<Vec<f64>> {
        bbse_point_weights(&estimate_confusion(source)?, &estimate_qhat(target))
    };
    if method.needs_box() {
        let wbox = match weight_box(source, target, budget.intervals_total, mode) {
            Ok(b) => b,
            Err(Error::Aborted(abort)) => return Ok((ThresholdResult::Aborted { abort }, None)),
            Err(e) => return Err(e),
        };
        let tau = match method {
            Method::PsW => psw_threshold(source, v, &wbox, residual)?,
            _ => psc_threshold(source, &wbox, residual)?,
        };
        return Ok((tau, Some(wbox)));
    }
    let tau = match method {
        Method::Ps => ps_threshold(source, risk)?,
        Method::PsR => psr_threshold(source, v, &point()?, risk)?,
        Method::Wcp => wcp_threshold(source, &point()?, risk.epsilon)?,
        Method::Oracle => {
            let w = oracle_weights
                .ok_or_else(|| Error::Config("ORACLE needs the true importance weights".into()))?;
            psr_threshold(source, v, w, risk)?
        }
        Method::PsW | Method::PsC => unreachable!(),
    };
    Ok((tau, None))
}

fn run_one_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<TrialReport>> {
    let data_seed = trial_seed(cfg.seed, trial, DATA_STREAM);
    let data = sample_shifted(&cfg.spec, &cfg.model, data_seed)?;
    let v = AcceptanceRandomness::draw(data.source.len(), trial_seed(cfg.seed, trial, ACCEPT_STREAM));
    let oracle = true_weights(&cfg.spec);

    let mut out = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let (tau, wbox) = match calibrate_method(method, &data.source, &data.target, &v, cfg.risk, cfg.mode, Some(&oracle)) {
            Ok(r) => r,
            // A singular plug-in system only sinks point-weight methods.
            Err(Error::SingularMatrix { .. }) | Err(Error::ZeroWeights) => (ThresholdResult::FullSet, None),
            Err(e) => return Err(e),
        };
        let metrics = evaluate_set(&tau, &data.test)?;
        let t = tau.effective_tau();
        out.push(TrialReport {
            method,
            trial,
            seed: data_seed,
            error: metrics.error,
            avg_size: metrics.avg_size,
            tau: (t > f64::NEG_INFINITY).then_some(t),
            aborted: tau.is_aborted(),
            weight_box: wbox,
        });
    }
    Ok(out)
}

/// Runs `cfg.trials` paired trials; reports are ordered by trial, then by
/// the order of `cfg.methods`.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialReport>> {
    if cfg.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if cfg.methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    if cfg.spec.o == 0 {
        return Err(Error::Config("test size o must be positive".into()));
    }
    let per_trial: Vec<Vec<TrialReport>> =
        (0..cfg.trials).into_par_iter().map(|t| run_one_trial(cfg, t)).collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Min, quartiles and max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl FiveNumber {
    /// Linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self { min: v[0], q25: q(0.25), median: q(0.5), q75: q(0.75), max: v[v.len() - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub trials: usize,
    pub error: FiveNumber,
    pub size: FiveNumber,
    pub mean_error: f64,
    pub mean_size: f64,
    /// Trials with test error above `epsilon`.
    pub violations: usize,
    pub aborted: usize,
}

/// Per-method summaries, in first-seen method order.
pub fn aggregate(reports: &[TrialReport], epsilon: f64) -> Result<Vec<MethodSummary>> {
    if reports.is_empty() {
        return Err(Error::Data("no reports to aggregate".into()));
    }
    let mut order: Vec<Method> = Vec::new();
    for r in reports {
        if !order.contains(&r.method) {
            order.push(r.method);
        }
    }
    Ok(order
        .into_iter()
        .map(|method| {
            let rs: Vec<&TrialReport> = reports.iter().filter(|r| r.method == method).collect();
            let errors: Vec<f64> = rs.iter().map(|r| r.error).collect();
            let sizes: Vec<f64> = rs.iter().map(|r| r.avg_size).collect();
            let n = rs.len() as f64;
            MethodSummary {
                method,
                trials: rs.len(),
                error: FiveNumber::of(&errors).expect("nonempty"),
                size: FiveNumber::of(&sizes).expect("nonempty"),
                mean_error: errors.iter().sum::<f64>() / n,
                mean_size: sizes.iter().sum::<f64>() / n,
                violations: errors.iter().filter(|&&e| e > epsilon).count(),
                aborted: rs.iter().filter(|r| r.aborted).count(),
            }
        })
        .collect())
}
