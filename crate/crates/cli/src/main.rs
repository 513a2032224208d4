//! `pacshift` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver abort.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pacshift::harness::{aggregate, calibrate_method, run_trials, Method};
use pacshift::io::{
    calibration_report_to_string, read_scenario, read_scores, save_scores, write_reports,
    write_summary, CalibrationReport,
};
use pacshift::predsets::{evaluate_set, AcceptanceRandomness};
use pacshift::shift_sim::sample_shifted;
use pacshift::weights::{bbse_point_weights, estimate_confusion, estimate_qhat, DeltaBudget};
use pacshift::{Error, RiskParams, SolveMode, ThresholdResult};

#[derive(Parser)]
#[command(name = "pacshift", version, about = "PAC prediction sets under label shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate a threshold from labeled source and unlabeled target scores.
    Calibrate(CalibrateArgs),
    /// Run repeated synthetic trials and write per-trial reports and a summary.
    Experiment(ExperimentArgs),
    /// Draw one source/target/test dataset from a scenario and write score files.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Labeled source score CSV.
    #[arg(long)]
    source: PathBuf,
    /// Unlabeled (or labeled; labels are ignored) target score CSV.
    #[arg(long)]
    target: PathBuf,
    /// Optional labeled target test CSV to evaluate the calibrated set on.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 5e-4)]
    delta: f64,
    #[arg(long, default_value = "PS-W")]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SolveMode::Relaxed)]
    mode: SolveMode,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Repeat to run several methods; overrides the scenario's list.
    #[arg(long = "method")]
    methods: Vec<Method>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<SolveMode>,
    /// Output directory for `reports.jsonl` and `summary.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for `source.csv`, `target.csv` and `test.csv`.
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Domain(_) => 2,
            Error::Aborted(_) => 4,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure { code: 2, message: msg.into() }
}

fn risk(epsilon: f64, delta: f64) -> Result<RiskParams, Failure> {
    RiskParams::new(epsilon, delta).map_err(|e| config_err(e.to_string()))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::from(Error::Io(e))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn calibrate(args: &CalibrateArgs) -> Result<ExitCode, Failure> {
    let rp = risk(args.epsilon, args.delta)?;
    if args.method == Method::Oracle {
        return Err(config_err("ORACLE needs the true weights and is only available in experiments"));
    }
    let source = read_scores(&args.source)?;
    if !source.is_labeled() {
        return Err(Error::MissingLabels.into());
    }
    let target = read_scores(&args.target)?.unlabeled();
    if source.num_labels() != target.num_labels() {
        return Err(Error::DimensionMismatch(format!(
            "source has K = {} but target has K = {}",
            source.num_labels(),
            target.num_labels()
        ))
        .into());
    }
    let test = args.test.as_deref().map(read_scores).transpose()?;

    let v = AcceptanceRandomness::draw(source.len(), args.seed);
    let (result, weight_box) = calibrate_method(args.method, &source, &target, &v, rp, args.mode, None)?;
    let point_weights = match args.method {
        Method::PsR | Method::Wcp => Some(bbse_point_weights(&estimate_confusion(&source)?, &estimate_qhat(&target))?),
        _ => None,
    };
    let test_metrics = test.as_ref().map(|t| evaluate_set(&result, t)).transpose()?;

    let t = result.effective_tau();
    let report = CalibrationReport {
        method: args.method,
        epsilon: args.epsilon,
        delta: args.delta,
        mode: args.mode,
        seed: args.seed,
        num_labels: source.num_labels(),
        source_rows: source.len(),
        target_rows: target.len(),
        tau: (t > f64::NEG_INFINITY).then_some(t),
        result: result.clone(),
        weight_box,
        point_weights,
        delta_budget: DeltaBudget::split(args.delta, source.num_labels()),
        test_metrics,
    };
    let text = calibration_report_to_string(&report)?;
    write_out(args.out.as_deref(), &text)?;

    if let ThresholdResult::Aborted { abort } = &result {
        eprintln!("pacshift: weight box aborted: {abort}");
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}

fn experiment(args: &ExperimentArgs) -> Result<ExitCode, Failure> {
    let mut sc = read_scenario(&args.scenario)?;
    sc.epsilon = args.epsilon.or(sc.epsilon);
    sc.delta = args.delta.or(sc.delta);
    sc.trials = args.trials.or(sc.trials);
    sc.seed = args.seed.or(sc.seed);
    sc.mode = args.mode.or(sc.mode);
    if !args.methods.is_empty() {
        sc.methods = Some(args.methods.clone());
    }
    let cfg = sc.to_config()?;

    let reports = run_trials(&cfg)?;
    let summary = aggregate(&reports, cfg.risk.epsilon)?;

    fs::create_dir_all(&args.out).map_err(Error::Io)?;
    let mut jsonl = Vec::new();
    write_reports(&reports, &mut jsonl)?;
    fs::write(args.out.join("reports.jsonl"), jsonl).map_err(Error::Io)?;
    let mut csv = Vec::new();
    write_summary(&summary, cfg.risk.epsilon, &mut csv)?;
    fs::write(args.out.join("summary.csv"), &csv).map_err(Error::Io)?;

    println!("{:<7} {:>6} {:>10} {:>8} {:>11} {:>10}", "method", "trials", "violations", "aborted", "mean_error", "mean_size");
    for s in &summary {
        println!(
            "{:<7} {:>6} {:>10} {:>8} {:>11.5} {:>10.4}",
            s.method.name(),
            s.trials,
            s.violations,
            s.aborted,
            s.mean_error,
            s.mean_size
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate(args: &SimulateArgs) -> Result<ExitCode, Failure> {
    let sc = read_scenario(&args.scenario)?;
    let seed = args.seed.or(sc.seed).unwrap_or(0);
    let data = sample_shifted(&sc.shift_spec()?, &sc.synthetic_model()?, seed)?;
    fs::create_dir_all(&args.out).map_err(Error::Io)?;
    save_scores(&data.source, &args.out.join("source.csv"))?;
    save_scores(&data.target, &args.out.join("target.csv"))?;
    save_scores(&data.test, &args.out.join("test.csv"))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Experiment(a) => experiment(a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("pacshift: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
