//! Label-shift scenarios and a synthetic scorer.
//!
//! Features are drawn as `x = center_y + noise_scale · N(0, I)`, and scores
//! are the softmax of `-‖x - center_k‖² / temperature`. Because `x | y` has
//! the same law in every domain, label shift holds by construction and
//! only the label marginals differ between source and target.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::ScoreTable;

/// Source/target label distributions and sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub source_dist: Vec<f64>,
    pub target_dist: Vec<f64>,
    /// Labeled source rows.
    pub m: usize,
    /// Unlabeled target rows.
    pub n: usize,
    /// Labeled target test rows.
    pub o: usize,
}

impl ShiftSpec {
    pub fn new(source_dist: Vec<f64>, target_dist: Vec<f64>, m: usize, n: usize, o: usize) -> Result<Self> {
        let spec = Self { source_dist, target_dist, m, n, o };
        spec.validate()?;
        Ok(spec)
    }

    pub fn num_labels(&self) -> usize {
        self.source_dist.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.source_dist.len();
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 labels, got {k}")));
        }
        if self.target_dist.len() != k {
            return Err(Error::Config(format!(
                "source has {k} labels, target has {}",
                self.target_dist.len()
            )));
        }
        check_simplex("source", &self.source_dist)?;
        check_simplex("target", &self.target_dist)?;
        if let Some(y) = (0..k).find(|&y| self.target_dist[y] > 0.0 && self.source_dist[y] <= 0.0) {
            return Err(Error::Config(format!(
                "label {y} has target mass but no source mass"
            )));
        }
        Ok(())
    }
}

fn check_simplex(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::Config(format!("{name} distribution has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("{name} distribution sums to {s}, not 1")));
    }
    Ok(())
}

/// Tweak-one distribution: `label` gets `rho`, the rest share `1 - rho`.
pub fn tweak_one(num_labels: usize, rho: f64, label: usize) -> Result<Vec<f64>> {
    if num_labels < 2 || label >= num_labels {
        return Err(Error::Config(format!("invalid tweak-one label {label} for K = {num_labels}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("rho must lie in [0,1], got {rho}")));
    }
    let rest = (1.0 - rho) / (num_labels - 1) as f64;
    Ok((0..num_labels).map(|k| if k == label { rho } else { rest }).collect())
}

/// `q(y) / p(y)`, with zero where both vanish.
pub fn true_weights(spec: &ShiftSpec) -> Vec<f64> {
    spec.source_dist
        .iter()
        .zip(&spec.target_dist)
        .map(|(&p, &q)| if p > 0.0 { q / p } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    pub class_centers: Vec<Vec<f64>>,
    pub noise_scale: f64,
    pub temperature: f64,
}

impl SyntheticModel {
    pub fn new(class_centers: Vec<Vec<f64>>, noise_scale: f64, temperature: f64) -> Result<Self> {
        let model = Self { class_centers, noise_scale, temperature };
        model.validate()?;
        Ok(model)
    }

    /// Centers at `0, spacing, 2·spacing, …` on a line; interior classes are
    /// confused with two neighbours and are therefore harder.
    pub fn on_line(num_labels: usize, spacing: f64, noise_scale: f64, temperature: f64) -> Result<Self> {
        let centers = (0..num_labels).map(|k| vec![k as f64 * spacing]).collect();
        Self::new(centers, noise_scale, temperature)
    }

    /// Centers at `separation · e_k` in `R^K`; every class equally hard.
    pub fn simplex(num_labels: usize, separation: f64, noise_scale: f64, temperature: f64) -> Result<Self> {
        let centers = (0..num_labels)
            .map(|k| (0..num_labels).map(|j| if j == k { separation } else { 0.0 }).collect())
            .collect();
        Self::new(centers, noise_scale, temperature)
    }

    pub fn num_labels(&self) -> usize {
        self.class_centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_centers.len() < 2 {
            return Err(Error::Config("need at least 2 class centers".into()));
        }
        let d = self.class_centers[0].len();
        if d == 0 || self.class_centers.iter().any(|c| c.len() != d || c.iter().any(|x| !x.is_finite())) {
            return Err(Error::Config("class centers must share a positive, finite dimension".into()));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!("noise_scale must be positive, got {}", self.noise_scale)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }

    /// Score row for one draw of `x | y`, appended to `out`.
    fn push_scores(&self, y: usize, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        let center = &self.class_centers[y];
        let x: Vec<f64> = center
            .iter()
            .map(|c| {
                let z: f64 = StandardNormal.sample(rng);
                c + self.noise_scale * z
            })
            .collect();
        let logits: Vec<f64> = self
            .class_centers
            .iter()
            .map(|ck| -ck.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / self.temperature)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / z));
    }

    /// `count` labeled rows with labels drawn i.i.d. from `dist`.
    pub fn sample(&self, dist: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Result<ScoreTable> {
        let k = self.num_labels();
        if dist.len() != k {
            return Err(Error::Config(format!("distribution has {} labels, model has {k}", dist.len())));
        }
        if count == 0 {
            return ScoreTable::empty(k, true);
        }
        let picker = WeightedIndex::new(dist).map_err(|e| Error::Config(format!("bad distribution: {e}")))?;
        let mut scores = Vec::with_capacity(count * k);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            let y = picker.sample(rng);
            self.push_scores(y, rng, &mut scores);
            labels.push(y);
        }
        ScoreTable::new(k, scores, Some(labels))
    }
}

/// The three tables of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedSample {
    /// Labeled source calibration rows (`m`).
    pub source: ScoreTable,
    /// Unlabeled target calibration rows (`n`).
    pub target: ScoreTable,
    /// Labeled target test rows (`o`).
    pub test: ScoreTable,
}

/// Draws source, unlabeled-target and target-test tables from one seed.
pub fn sample_shifted(spec: &ShiftSpec, model: &SyntheticModel, seed: u64) -> Result<ShiftedSample> {
    spec.validate()?;
    model.validate()?;
    if spec.num_labels() != model.num_labels() {
        return Err(Error::Config(format!(
            "scenario has {} labels, model has {}",
            spec.num_labels(),
            model.num_labels()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = model.sample(&spec.source_dist, spec.m, &mut rng)?;
    let target = model.sample(&spec.target_dist, spec.n, &mut rng)?.unlabeled();
    let test = model.sample(&spec.target_dist, spec.o, &mut rng)?;
    Ok(ShiftedSample { source, target, test })
}
