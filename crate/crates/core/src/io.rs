//! File formats.
//!
//! Every file begins with the line `# pacshift-v1`. Readers accept files
//! with or without it and reject any other `# pacshift-…` version.
//!
//! - Scores: CSV with header `label,s0,…,s{K-1}` (labeled) or `s0,…,s{K-1}`.
//! - Scenarios: flat TOML key/value file, see [`Scenario`].
//! - Trial reports: JSON lines, one [`TrialReport`] per line.
//! - Summaries: CSV, one row per method.
//! - Calibration reports: a single JSON object.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binomial::RiskParams;
use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, FiveNumber, Method, MethodSummary, TrialReport};
use crate::interval_solver::{SolveMode, WeightBox};
use crate::predsets::{SetMetrics, ThresholdResult};
use crate::scores::ScoreTable;
use crate::shift_sim::{ShiftSpec, SyntheticModel};
use crate::weights::DeltaBudget;
use crate::FORMAT_TAG;

fn check_tag_line(line: &str) -> Result<()> {
    let t = line.trim();
    if t.starts_with("# pacshift-") && t != FORMAT_TAG {
        return Err(Error::Data(format!("unsupported format version '{t}'")));
    }
    Ok(())
}

fn fmt_f64(x: f64) -> String {
    // `{}` prints the shortest string that parses back to the same value.
    format!("{x}")
}

fn parse_f64(cell: &str, line: u64, col: usize) -> Result<f64> {
    let c = cell.trim();
    let x: f64 = c
        .parse()
        .map_err(|_| Error::Data(format!("line {line}, column {}: '{c}' is not a number", col + 1)))?;
    if x.is_nan() {
        return Err(Error::Data(format!("line {line}, column {}: NaN score", col + 1)));
    }
    Ok(x)
}

// ---------------------------------------------------------------- scores

/// Parses a score CSV from any reader.
pub fn parse_scores<R: Read>(reader: R) -> Result<ScoreTable> {
    let mut reader = BufReader::new(reader);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    check_tag_line(&first)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(first.as_bytes().chain(reader));
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Data("empty score file".into()));
    }
    let labeled = header[0].eq_ignore_ascii_case("label");
    let first = usize::from(labeled);
    let k = header.len() - first;
    for (j, name) in header.iter().skip(first).enumerate() {
        if name != format!("s{j}") {
            return Err(Error::Data(format!("header column {} is '{name}', expected 's{j}'", j + first + 1)));
        }
    }
    if k < 2 {
        return Err(Error::Data(format!("need at least 2 score columns, got {k}")));
    }

    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if labeled {
            let y: usize = rec[0]
                .parse()
                .map_err(|_| Error::Data(format!("line {line}: label '{}' is not a non-negative integer", &rec[0])))?;
            if y >= k {
                return Err(Error::Data(format!("line {line}: label {y} out of range 0..{k}")));
            }
            labels.push(y);
        }
        for (j, cell) in rec.iter().enumerate().skip(first) {
            scores.push(parse_f64(cell, line, j)?);
        }
    }
    if scores.is_empty() {
        return Err(Error::Data("score file has no data rows".into()));
    }
    ScoreTable::new(k, scores, labeled.then_some(labels))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::UnequalLengths { pos, expected_len, len } => Error::Data(format!(
            "line {}: ragged row with {len} fields, expected {expected_len}",
            pos.map_or(0, |p| p.line())
        )),
        other => Error::Data(format!("malformed CSV: {other:?}")),
    }
}

pub fn read_scores(path: &Path) -> Result<ScoreTable> {
    parse_scores(fs::File::open(path)?)
}

pub fn write_scores<W: Write>(table: &ScoreTable, mut out: W) -> Result<()> {
    writeln!(out, "{FORMAT_TAG}")?;
    let k = table.num_labels();
    let mut header: Vec<String> = Vec::with_capacity(k + 1);
    if table.is_labeled() {
        header.push("label".into());
    }
    header.extend((0..k).map(|j| format!("s{j}")));
    writeln!(out, "{}", header.join(","))?;
    for (i, row) in table.rows().enumerate() {
        let mut cells: Vec<String> = Vec::with_capacity(k + 1);
        if let Some(labels) = table.labels() {
            cells.push(labels[i].to_string());
        }
        cells.extend(row.iter().map(|&x| fmt_f64(x)));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn save_scores(table: &ScoreTable, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_scores(table, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

// ---------------------------------------------------------------- scenarios

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Class centers evenly spaced on a line.
    Line,
    /// Class centers on the scaled standard basis.
    Simplex,
    /// Class centers listed explicitly under `centers`.
    Custom,
}

/// Flat scenario file: the shift spec, the synthetic scorer and optional
/// run parameters (command-line flags override the latter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub source_dist: Vec<f64>,
    pub target_dist: Vec<f64>,
    pub m: usize,
    pub n: usize,
    pub o: usize,
    pub model: ModelKind,
    /// Distance between neighbouring centers (line) or along each axis
    /// (simplex); ignored for custom centers.
    #[serde(default)]
    pub separation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f64>>>,
    pub noise_scale: f64,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<SolveMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<Method>>,
}

impl Scenario {
    pub fn shift_spec(&self) -> Result<ShiftSpec> {
        ShiftSpec::new(self.source_dist.clone(), self.target_dist.clone(), self.m, self.n, self.o)
    }

    pub fn synthetic_model(&self) -> Result<SyntheticModel> {
        let k = self.source_dist.len();
        if self.model != ModelKind::Custom && self.centers.is_some() {
            return Err(Error::Config("'centers' is only allowed with model = \"custom\"".into()));
        }
        match self.model {
            ModelKind::Custom => {
                let centers = self
                    .centers
                    .clone()
                    .ok_or_else(|| Error::Config("model = \"custom\" needs 'centers'".into()))?;
                if centers.len() != k {
                    return Err(Error::Config(format!("{} centers for {k} labels", centers.len())));
                }
                SyntheticModel::new(centers, self.noise_scale, self.temperature)
            }
            ModelKind::Line => SyntheticModel::on_line(k, self.separation, self.noise_scale, self.temperature),
            ModelKind::Simplex => SyntheticModel::simplex(k, self.separation, self.noise_scale, self.temperature),
        }
    }

    /// Full experiment configuration; every run parameter must be set.
    pub fn to_config(&self) -> Result<ExperimentConfig> {
        let missing = |name: &str| Error::Config(format!("scenario does not set '{name}'"));
        let epsilon = self.epsilon.ok_or_else(|| missing("epsilon"))?;
        let delta = self.delta.ok_or_else(|| missing("delta"))?;
        let risk = RiskParams::new(epsilon, delta).map_err(|e| Error::Config(e.to_string()))?;
        Ok(ExperimentConfig {
            spec: self.shift_spec()?,
            model: self.synthetic_model()?,
            methods: self.methods.clone().ok_or_else(|| missing("methods"))?,
            risk,
            trials: self.trials.ok_or_else(|| missing("trials"))?,
            seed: self.seed.ok_or_else(|| missing("seed"))?,
            mode: self.mode.unwrap_or_default(),
        })
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    if let Some(first) = text.lines().next() {
        check_tag_line(first)?;
    }
    toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {}", e.message())))
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&fs::read_to_string(path)?)
}

pub fn scenario_to_string(s: &Scenario) -> Result<String> {
    let body = toml::to_string(s).map_err(|e| Error::Config(format!("scenario: {e}")))?;
    Ok(format!("{FORMAT_TAG}\n{body}"))
}

// ---------------------------------------------------------------- reports

pub fn write_reports<W: Write>(reports: &[TrialReport], mut out: W) -> Result<()> {
    writeln!(out, "{FORMAT_TAG}")?;
    for r in reports {
        let line = serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn parse_reports<R: Read>(reader: R) -> Result<Vec<TrialReport>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.starts_with('#') {
            check_tag_line(t)?;
            continue;
        }
        if t.is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(t).map_err(|e| Error::Data(format!("report line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

const SUMMARY_HEADER: [&str; 17] = [
    "method",
    "trials",
    "violations",
    "aborted",
    "mean_error",
    "mean_size",
    "error_min",
    "error_q25",
    "error_median",
    "error_q75",
    "error_max",
    "size_min",
    "size_q25",
    "size_median",
    "size_q75",
    "size_max",
    "epsilon",
];

pub fn write_summary<W: Write>(summaries: &[MethodSummary], epsilon: f64, mut out: W) -> Result<()> {
    writeln!(out, "{FORMAT_TAG}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for s in summaries {
        let five = |f: &FiveNumber| [f.min, f.q25, f.median, f.q75, f.max].map(fmt_f64);
        let mut rec = vec![
            s.method.name().to_string(),
            s.trials.to_string(),
            s.violations.to_string(),
            s.aborted.to_string(),
            fmt_f64(s.mean_error),
            fmt_f64(s.mean_size),
        ];
        rec.extend(five(&s.error));
        rec.extend(five(&s.size));
        rec.push(fmt_f64(epsilon));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_summary<R: Read>(reader: R) -> Result<Vec<MethodSummary>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(SUMMARY_HEADER) {
        return Err(Error::Data("unexpected summary header".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let int = |j: usize| -> Result<usize> {
            rec[j].parse().map_err(|_| Error::Data(format!("line {line}: bad integer '{}'", &rec[j])))
        };
        let num = |j: usize| parse_f64(&rec[j], line, j);
        let five = |j: usize| -> Result<FiveNumber> {
            Ok(FiveNumber { min: num(j)?, q25: num(j + 1)?, median: num(j + 2)?, q75: num(j + 3)?, max: num(j + 4)? })
        };
        out.push(MethodSummary {
            method: rec[0].parse()?,
            trials: int(1)?,
            violations: int(2)?,
            aborted: int(3)?,
            mean_error: num(4)?,
            mean_size: num(5)?,
            error: five(6)?,
            size: five(11)?,
        });
    }
    Ok(out)
}

/// Output of a single calibration run on score files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method: Method,
    pub epsilon: f64,
    pub delta: f64,
    pub mode: SolveMode,
    pub seed: u64,
    pub num_labels: usize,
    pub source_rows: usize,
    pub target_rows: usize,
    pub result: ThresholdResult,
    /// `None` encodes `τ = −∞` or an abort.
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_box: Option<WeightBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_weights: Option<Vec<f64>>,
    pub delta_budget: DeltaBudget,
    /// Error and size on a labeled test file, when one was given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_metrics: Option<SetMetrics>,
}

pub fn calibration_report_to_string(r: &CalibrationReport) -> Result<String> {
    let body = serde_json::to_string_pretty(r).map_err(|e| Error::Data(e.to_string()))?;
    Ok(format!("{FORMAT_TAG}\n{body}\n"))
}

pub fn parse_calibration_report(text: &str) -> Result<CalibrationReport> {
    let body: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    serde_json::from_str(&body).map_err(|e| Error::Data(format!("calibration report: {e}")))
}
