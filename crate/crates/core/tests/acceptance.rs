//! End-to-end acceptance suite. Runs as a plain binary so that every
//! criterion prints exactly one PASS/FAIL line regardless of capture.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use pacshift::harness::{run_trials, ExperimentConfig, Method, TrialReport};
use pacshift::predsets::{psw_threshold, AcceptanceRandomness};
use pacshift::shift_sim::{tweak_one, ShiftSpec, SyntheticModel};
use pacshift::weights::DeltaBudget;
use pacshift::{
    binom_cdf, binom_k, cp_interval, interval_gauss_elim, IntervalMatrix, IntervalVector, RiskParams, ScoreTable,
    SolveMode, WeightBox,
};

struct Outcome {
    ok: bool,
    detail: String,
}

fn check(cond: bool, failures: &mut Vec<String>, msg: impl Into<String>) {
    if !cond {
        failures.push(msg.into());
    }
}

fn finish(failures: Vec<String>, elapsed: Duration, limit: Duration, summary: String) -> Outcome {
    let mut failures = failures;
    if elapsed > limit {
        failures.push(format!("runtime {:.1}s exceeds {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()));
    }
    let timing = format!("{:.2}s", elapsed.as_secs_f64());
    if failures.is_empty() {
        Outcome { ok: true, detail: format!("{summary} [{timing}]") }
    } else {
        Outcome { ok: false, detail: format!("{summary} [{timing}]; {}", failures.join("; ")) }
    }
}

// ------------------------------------------------------------ criterion 1

fn binomial_correctness() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/binom_cdf_oracle.csv");
    let mut reader = csv::Reader::from_path(&path).expect("oracle fixture");
    let mut rows = 0usize;
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(0xB1_0001);
    let mut bracket_checked = 0usize;
    for rec in reader.records() {
        let rec = rec.expect("fixture row");
        let k: u64 = rec[0].parse().unwrap();
        let m: u64 = rec[1].parse().unwrap();
        let eps: f64 = rec[2].parse().unwrap();
        let want: f64 = rec[3].parse().unwrap();
        let got = binom_cdf(k, m, eps).unwrap();
        let err = (got - want).abs();
        worst = worst.max(err);
        check(err <= 1e-10, &mut failures, format!("cdf({k},{m},{eps}) off by {err:e}"));
        rows += 1;

        // Bracket property on the same (m, ε) with a log-uniform δ.
        let delta = 10f64.powf(rng.random_range(-6.0..-0.3));
        let rp = RiskParams::new(eps, delta).unwrap();
        match binom_k(m, rp) {
            Some(kk) => {
                let lo = binom_cdf(kk, m, eps).unwrap();
                let hi = if kk < m { binom_cdf(kk + 1, m, eps).unwrap() } else { 1.0 };
                check(lo <= delta && delta < hi, &mut failures, format!("k({m},{eps},{delta}) = {kk} not bracketed"));
            }
            None => check(
                binom_cdf(0, m, eps).unwrap() > delta,
                &mut failures,
                format!("k({m},{eps},{delta}) missing but F(0) <= delta"),
            ),
        }
        bracket_checked += 1;
    }
    check(rows == 500, &mut failures, format!("expected 500 oracle rows, read {rows}"));

    let level = 0.1;
    let draws = 10_000u32;
    let sigma = (level * (1.0 - level) / draws as f64).sqrt();
    let floor = 1.0 - level - 3.0 * sigma;
    let mut min_cov = 1.0f64;
    for &n in &[50u64, 500] {
        let intervals: Vec<_> = (0..=n).map(|x| cp_interval(x, n, level).unwrap()).collect();
        for &p in &[0.01, 0.1, 0.5] {
            let dist = Binomial::new(n, p).unwrap();
            let covered = (0..draws).filter(|_| intervals[dist.sample(&mut rng) as usize].contains(p)).count();
            let cov = covered as f64 / draws as f64;
            min_cov = min_cov.min(cov);
            check(cov >= floor, &mut failures, format!("CP coverage {cov} < {floor:.4} at n={n}, p={p}"));
        }
    }

    finish(
        failures,
        start.elapsed(),
        Duration::from_secs(30),
        format!(
            "{rows} cdf rows, max abs error {worst:.1e}; {bracket_checked} k brackets; min CP coverage {min_cov:.4} (floor {floor:.4})"
        ),
    )
}

// ------------------------------------------------------------ criterion 2

/// Gaussian elimination with partial pivoting on a dense row-major system.
fn dense_solve(k: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    for col in 0..k {
        let p = (col..k).max_by(|&i, &j| a[i * k + col].abs().total_cmp(&a[j * k + col].abs())).unwrap();
        if p != col {
            for j in 0..k {
                a.swap(col * k + j, p * k + j);
            }
            b.swap(col, p);
        }
        for i in col + 1..k {
            let f = a[i * k + col] / a[col * k + col];
            for j in col..k {
                a[i * k + j] -= f * a[col * k + j];
            }
            b[i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| a[i * k + j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i * k + i];
    }
    x
}

/// Confusion-like system: nonnegative, diagonally dominant, positive solution.
fn random_system(rng: &mut ChaCha8Rng) -> (usize, IntervalMatrix, IntervalVector) {
    let k = rng.random_range(2..=6);
    let mut center = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            center[i * k + j] =
                if i == j { rng.random_range(0.3..1.0) } else { rng.random_range(0.0..0.25 / k as f64) };
        }
    }
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..3.0)).collect();
    let q: Vec<f64> = (0..k).map(|i| (0..k).map(|j| center[i * k + j] * w[j]).sum()).collect();
    let width = rng.random_range(0.0..0.06);
    let mut lo = Vec::with_capacity(k * k);
    let mut hi = Vec::with_capacity(k * k);
    for &c in &center {
        lo.push((c - width * rng.random::<f64>()).max(0.0));
        hi.push(c + width * rng.random::<f64>());
    }
    let qlo = q.iter().map(|&x| x - width * rng.random::<f64>()).collect();
    let qhi = q.iter().map(|&x| x + width * rng.random::<f64>()).collect();
    (k, IntervalMatrix::new(k, lo, hi).unwrap(), IntervalVector::new(qlo, qhi).unwrap())
}

fn interval_soundness() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB1_0002);
    let mut solved = 0usize;
    let mut aborted = 0usize;
    let mut violations = 0usize;
    let mut degenerate_worst = 0.0f64;

    while solved < 1000 && solved + aborted < 5000 {
        let (k, c, q) = random_system(&mut rng);
        let wbox = match interval_gauss_elim(&c, &q, SolveMode::Relaxed) {
            Ok(b) => b,
            Err(_) => {
                aborted += 1;
                continue;
            }
        };
        solved += 1;
        for _ in 0..100 {
            let a: Vec<f64> =
                (0..k * k).map(|idx| rng.random_range(c.lo(idx / k, idx % k)..=c.hi(idx / k, idx % k))).collect();
            let b: Vec<f64> = (0..k).map(|i| rng.random_range(q.lo[i]..=q.hi[i])).collect();
            let x = dense_solve(k, a, b);
            // Slack only for the round-off of the reference solve itself.
            let inside = (0..k).all(|i| {
                let tol = 1e-12 * (1.0 + x[i].abs());
                wbox.lo[i] - tol <= x[i] && x[i] <= wbox.hi[i] + tol
            });
            if !inside {
                violations += 1;
            }
        }

        // Degenerate intervals at the center of the same system.
        let mid: Vec<f64> = (0..k * k).map(|idx| 0.5 * (c.lo(idx / k, idx % k) + c.hi(idx / k, idx % k))).collect();
        let qm: Vec<f64> = (0..k).map(|i| 0.5 * (q.lo[i] + q.hi[i])).collect();
        let exact = dense_solve(k, mid.clone(), qm.clone());
        match interval_gauss_elim(&IntervalMatrix::point(k, mid).unwrap(), &IntervalVector::point(qm), SolveMode::Relaxed) {
            Ok(pb) => {
                for i in 0..k {
                    degenerate_worst = degenerate_worst.max((pb.lo[i] - exact[i]).abs()).max((pb.hi[i] - exact[i]).abs());
                }
            }
            Err(e) => failures.push(format!("degenerate system aborted: {e}")),
        }
    }
    check(solved >= 1000, &mut failures, format!("only {solved} systems solved ({aborted} aborted)"));
    check(violations == 0, &mut failures, format!("{violations} containment violations"));
    check(degenerate_worst <= 1e-8, &mut failures, format!("degenerate mismatch {degenerate_worst:e}"));

    finish(
        failures,
        start.elapsed(),
        Duration::from_secs(60),
        format!(
            "{solved} systems x 100 samples, {violations} violations ({aborted} aborted draws skipped); degenerate max error {degenerate_worst:.1e}"
        ),
    )
}

// ------------------------------------------------------------ criterion 3

fn accepts(v: f64, w: f64, b: f64) -> bool {
    w > 0.0 && v * b <= w
}

fn plain_ps(mut scores: Vec<f64>, rp: RiskParams) -> f64 {
    scores.sort_by(f64::total_cmp);
    match binom_k(scores.len() as u64, rp) {
        Some(k) if (k as usize) < scores.len() => scores[k as usize],
        _ => f64::NEG_INFINITY,
    }
}

/// Minimum PS threshold over one representative weight from every
/// acceptance cell of the box.
fn brute_force(scores: &[f64], labels: &[usize], v: &[f64], wbox: &WeightBox, rp: RiskParams) -> f64 {
    let b = wbox.envelope_b;
    let reps: Vec<Vec<f64>> = (0..2)
        .map(|k| {
            let lo = wbox.lo[k].max(0.0);
            let hi = wbox.hi[k];
            let mut r = vec![lo, hi];
            r.extend((0..labels.len()).filter(|&i| labels[i] == k).map(|i| v[i] * b).filter(|&x| lo <= x && x <= hi));
            r
        })
        .collect();
    let mut best = f64::INFINITY;
    for &w0 in &reps[0] {
        for &w1 in &reps[1] {
            let w = [w0, w1];
            let kept: Vec<f64> =
                (0..labels.len()).filter(|&i| accepts(v[i], w[labels[i]], b)).map(|i| scores[i]).collect();
            best = best.min(plain_ps(kept, rp));
        }
    }
    best
}

fn threshold_exactness() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB1_0003);
    let mut finite = 0usize;
    for inst in 0..200 {
        let m = rng.random_range(1..=20);
        // Coarse score grid so ties occur.
        let scores: Vec<f64> = (0..m).map(|_| rng.random_range(0..=10) as f64 / 10.0).collect();
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..2)).collect();
        let raw: Vec<f64> = scores
            .iter()
            .zip(&labels)
            .flat_map(|(&s, &y)| if y == 0 { [s, 1.0 - s] } else { [1.0 - s, s] })
            .collect();
        let table = ScoreTable::new(2, raw, Some(labels.clone())).unwrap();
        let v = AcceptanceRandomness::draw(m, inst as u64);
        let wbox = if inst % 4 == 0 {
            let b = rng.random_range(0.5..3.0);
            WeightBox::new(vec![0.0, 0.0], vec![b, b]).unwrap()
        } else {
            let lo: Vec<f64> = (0..2).map(|_| rng.random_range(-0.3..1.5)).collect();
            let hi: Vec<f64> = lo.iter().map(|&l| (l + rng.random_range(0.0..2.0)).max(0.05)).collect();
            WeightBox::new(lo, hi).unwrap()
        };
        let rp = RiskParams::new(rng.random_range(0.15..0.6), rng.random_range(0.05..0.6)).unwrap();

        let got = psw_threshold(&table, &v, &wbox, rp).unwrap().effective_tau();
        let want = brute_force(&scores, &labels, &v.v, &wbox, rp);
        if got.is_finite() {
            finite += 1;
        }
        check(got == want, &mut failures, format!("instance {inst}: psw {got} vs brute force {want}"));
    }
    finish(
        failures,
        start.elapsed(),
        Duration::from_secs(60),
        format!("200 instances (K=2, m<=20), {finite} with finite thresholds"),
    )
}

// --------------------------------------------------------- criteria 4 & 5

/// K = 3 tweak-one large shift. Label 1 is rare in the source and sits
/// between the other two classes, so its weight is both large and noisy.
fn large_shift_config(n: usize, methods: Vec<Method>) -> ExperimentConfig {
    let spec = ShiftSpec::new(tweak_one(3, 0.05, 1).unwrap(), tweak_one(3, 0.8, 2).unwrap(), 5000, n, 2000).unwrap();
    let model = SyntheticModel::new(vec![vec![0.0], vec![1.2], vec![3.7]], 0.35, 10.0).unwrap();
    ExperimentConfig {
        spec,
        model,
        methods,
        risk: RiskParams::new(0.1, 5e-4).unwrap(),
        trials: 100,
        seed: 1,
        mode: SolveMode::Relaxed,
    }
}

fn by_method(reports: &[TrialReport], m: Method) -> Vec<&TrialReport> {
    let mut v: Vec<&TrialReport> = reports.iter().filter(|r| r.method == m).collect();
    v.sort_by_key(|r| r.trial);
    v
}

fn violations(reports: &[TrialReport], m: Method) -> usize {
    by_method(reports, m).iter().filter(|r| r.error > 0.1).count()
}

fn end_to_end(main: &[TrialReport], small_n: &[TrialReport], elapsed: Duration) -> Outcome {
    let mut failures = Vec::new();
    let psw = violations(main, Method::PsW);
    let psc = violations(main, Method::PsC);
    let ps = violations(main, Method::Ps);
    let psr = violations(small_n, Method::PsR);
    let aborted = by_method(main, Method::PsW).iter().filter(|r| r.aborted).count();
    check(psw == 0, &mut failures, format!("PS-W violated {psw} times"));
    check(psc == 0, &mut failures, format!("PS-C violated {psc} times"));
    check(ps >= 30, &mut failures, format!("PS violated only {ps} times"));
    check(psr >= 10, &mut failures, format!("PS-R (n=500) violated only {psr} times"));
    finish(
        failures,
        elapsed,
        Duration::from_secs(600),
        format!("violations/100: PS-W {psw}, PS-C {psc}, PS {ps}, PS-R(n=500) {psr}; PS-W aborts {aborted}"),
    )
}

fn size_ordering(main: &[TrialReport]) -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let psw = by_method(main, Method::PsW);
    let psc = by_method(main, Method::PsC);
    let oracle = by_method(main, Method::Oracle);
    let w_lt_c = psw.iter().zip(&psc).filter(|(w, c)| w.avg_size < c.avg_size).count();
    let o_le_w = oracle.iter().zip(&psw).filter(|(o, w)| o.avg_size <= w.avg_size).count();
    check(psw.len() == 100 && psc.len() == 100 && oracle.len() == 100, &mut failures, "missing trials");
    check(w_lt_c >= 90, &mut failures, format!("PS-W smaller than PS-C in only {w_lt_c}/100"));
    check(o_le_w >= 90, &mut failures, format!("ORACLE no larger than PS-W in only {o_le_w}/100"));
    let mean = |rs: &[&TrialReport]| rs.iter().map(|r| r.avg_size).sum::<f64>() / rs.len().max(1) as f64;
    finish(
        failures,
        start.elapsed(),
        Duration::from_secs(600),
        format!(
            "size(PS-W) < size(PS-C) in {w_lt_c}/100, size(ORACLE) <= size(PS-W) in {o_le_w}/100; mean sizes ORACLE {:.3}, PS-W {:.3}, PS-C {:.3}",
            mean(&oracle),
            mean(&psw),
            mean(&psc)
        ),
    )
}

// ------------------------------------------------------------ criterion 6

fn delta_budget_audit() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    for k in 2..=20 {
        for &delta in &[1e-6, 5e-4, 0.01, 0.05, 0.1, 0.5, 0.999] {
            let b = DeltaBudget::split(delta, k);
            let kk = (k * (k + 1)) as f64;
            let sum = b.per_interval * b.num_intervals() as f64 + b.calibration;
            let err = (sum - delta).abs();
            worst = worst.max(err);
            check(err <= 1e-12, &mut failures, format!("K={k}, delta={delta}: levels sum to {sum}"));
            check(
                (b.per_interval - delta / (kk + 1.0)).abs() <= 1e-15 && (b.calibration - delta / (kk + 1.0)).abs() <= 1e-15,
                &mut failures,
                format!("K={k}, delta={delta}: per-step level is not delta/(K(K+1)+1)"),
            );
            check(
                (b.intervals_total + b.calibration - delta).abs() <= 1e-12,
                &mut failures,
                format!("K={k}, delta={delta}: interval stage plus calibration != delta"),
            );
            cases += 1;
        }
    }
    finish(failures, start.elapsed(), Duration::from_secs(1), format!("{cases} (K, delta) cases, max error {worst:.1e}"))
}

fn main() -> ExitCode {
    let mut outcomes: Vec<(u32, Outcome)> = Vec::new();
    let mut emit = |n: u32, o: Outcome| {
        println!("criterion {n}: {} {}", if o.ok { "PASS" } else { "FAIL" }, o.detail);
        outcomes.push((n, o));
    };

    emit(1, binomial_correctness());
    emit(2, interval_soundness());
    emit(3, threshold_exactness());

    let start = Instant::now();
    let main_run = run_trials(&large_shift_config(
        5000,
        vec![Method::Ps, Method::PsW, Method::PsC, Method::Oracle],
    ))
    .expect("large-shift run");
    let small_run = run_trials(&large_shift_config(500, vec![Method::PsR])).expect("small-n run");
    emit(4, end_to_end(&main_run, &small_run, start.elapsed()));
    emit(5, size_ordering(&main_run));
    emit(6, delta_budget_audit());

    let failed: Vec<u32> = outcomes.iter().filter(|(_, o)| !o.ok).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", outcomes.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
