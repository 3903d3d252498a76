//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p loadtrack-cli --test acceptance`.

#[path = "../../core/tests/support/dynamics.rs"]
mod dynamics;
#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use loadtrack_core::{
    audit_dwell, count_schedules, enumerate_schedules, make_dynamics, normalize_peak, parse_csv,
    resample, simulate_load, zoh_discretize, Complex64, DayRecord, LoadBank, LoadSpec,
    PowerProfile, ScheduleMatrix, Scheduler, SwitchLimits, TrackingConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn loadtrack(args: &[&str]) -> (i32, String, Duration) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_loadtrack"))
        .args(args)
        .output()
        .unwrap();
    let elapsed = start.elapsed();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        elapsed,
    )
}

fn profile(name: &str) -> PowerProfile {
    let bytes = std::fs::read(data(name)).unwrap();
    let series = normalize_peak(&parse_csv(&bytes).unwrap().series).unwrap();
    resample(&series, 1.0, 86_400.0).unwrap()
}

/// `schedules=` values in report order.
fn schedule_counts(report: &str) -> Vec<(String, u128)> {
    report
        .lines()
        .filter_map(|l| {
            let (flags, rest) = l.split_once("schedules=")?;
            let n = rest.split_whitespace().next()?.parse().ok()?;
            Some((flags.split_whitespace().collect::<Vec<_>>().join(" "), n))
        })
        .collect()
}

fn unconstrained_count() -> Verdict {
    let (code, out, elapsed) = loadtrack(&[
        "count",
        "--horizon-epochs",
        "6",
        "--min-on-epochs",
        "1",
        "--min-off-epochs",
        "1",
        "--pinned",
    ]);
    let counts = schedule_counts(&out);
    let got = counts.first().map(|c| c.1);
    verdict(
        code == 0 && got == Some(32768) && elapsed < Duration::from_secs(1),
        format!("count n=3 H=6 pinned printed {got:?} in {elapsed:.3?} (need 32768 in < 1 s)"),
    )
}

fn oracle_instances() -> Vec<oracle::Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x00ac_ce97);
    (0..200)
        .map(|_| oracle::random_instance(&mut rng))
        .collect()
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut mismatches = 0;
    let mut sizes = 0usize;
    for inst in oracle_instances() {
        let space = inst.space();
        let mut got: Vec<ScheduleMatrix> = enumerate_schedules(&space).collect();
        let mut want = oracle::brute_force(&inst);
        sizes += want.len();
        let count_ok = count_schedules(&space).ok() == Some(want.len() as u128);
        got.sort_by_key(ScheduleMatrix::canonical_key);
        want.sort_by_key(ScheduleMatrix::canonical_key);
        if got != want || !count_ok {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches == 0 && elapsed < Duration::from_secs(30),
        format!("200 instances (n<=2, H<=8, {sizes} schedules total), {mismatches} mismatches, {elapsed:.2?} (< 30 s)"),
    )
}

fn count_structure() -> Verdict {
    let mut product_failures = 0;
    let mut monotone_failures = 0;
    for inst in oracle_instances() {
        let space = inst.space();
        let total = count_schedules(&space).unwrap();
        let product: u128 = (0..inst.limits.len())
            .map(|i| count_schedules(&space.single_load(i)).unwrap())
            .product();
        product_failures += (total != product) as usize;
        for i in 0..inst.limits.len() {
            for (don, doff) in [(1, 0), (0, 1)] {
                let mut harder = inst.clone();
                let l = harder.limits[i];
                harder.limits[i] =
                    SwitchLimits::new(l.min_on_epochs + don, l.min_off_epochs + doff);
                monotone_failures += (count_schedules(&harder.space()).unwrap() > total) as usize;
            }
        }
    }
    verdict(
        product_failures == 0 && monotone_failures == 0,
        format!("product identity failures {product_failures}, monotonicity failures {monotone_failures}"),
    )
}

fn published_counts() -> Verdict {
    let (code_a, report_a, _) = loadtrack(&[
        "count",
        "--horizon-epochs",
        "6",
        "--min-on-epochs",
        "4",
        "--min-off-epochs",
        "4",
        "--initial",
        "000",
        "--all-flags",
    ]);
    let (code_b, report_b, _) = loadtrack(&[
        "count",
        "--loads",
        "2",
        "--horizon-epochs",
        "6",
        "--set",
        "loads.1.min_on_s=420",
        "--set",
        "loads.1.min_off_s=420",
        "--set",
        "loads.2.min_on_s=300",
        "--set",
        "loads.2.min_off_s=300",
        "--initial",
        "00",
        "--all-flags",
    ]);
    let a = schedule_counts(&report_a);
    let b = schedule_counts(&report_b);
    let reported = code_a == 0
        && code_b == 0
        && a.len() == 8
        && b.len() == 8
        && report_a.contains("reference: published count 2197")
        && report_b.contains("reference: published count 36");
    let matches = |c: &[(String, u128)], want: u128| {
        c.iter()
            .filter(|(_, n)| *n == want)
            .map(|(f, _)| f.clone())
            .collect::<Vec<_>>()
    };
    let list = |c: &[(String, u128)]| {
        c.iter()
            .map(|(_, n)| n.to_string())
            .collect::<Vec<_>>()
            .join("/")
    };
    verdict(
        reported,
        format!(
            "report only, not an equality gate. 2197 instance counts {} match under {:?}; 36 instance counts {} match under {:?}",
            list(&a),
            matches(&a, 2197),
            list(&b),
            matches(&b, 36)
        ),
    )
}

fn zoh_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let on_pole = -10f64.powf(rng.random_range(-3.0..0.0));
        let off_pole = -10f64.powf(rng.random_range(-3.0..0.0));
        let dt = rng.random_range(0.1..5.0);
        let size = rng.random_range(0.05..1.0);
        let p0 = rng.random_range(0.0..size);
        let mut w = Vec::new();
        let mut on = rng.random_bool(0.5);
        while w.len() < 400 {
            w.extend(std::iter::repeat_n(on, rng.random_range(1..=50)));
            on = !on;
        }
        w.truncate(400);
        let load = LoadSpec::new(
            1,
            size,
            make_dynamics(&[Complex64::new(on_pole, 0.0)]).unwrap(),
            make_dynamics(&[Complex64::new(off_pole, 0.0)]).unwrap(),
            1,
            1,
        )
        .unwrap();
        let bits: Vec<u8> = w.iter().map(|&b| b as u8).collect();
        let got = simulate_load(&load, dt, &bits, p0).unwrap();
        let want = dynamics::first_order_closed_form(size, 0.0, on_pole, off_pole, dt, &w, p0);
        for (g, e) in got.iter().zip(&want) {
            worst = worst.max((g - e).abs());
        }
    }
    verdict(
        worst <= 1e-9,
        format!("50 cases, max |sim - closed form| = {worst:.2e} (<= 1e-9)"),
    )
}

fn dc_gain() -> Verdict {
    let bank = LoadBank::reference();
    let mut worst = 0.0f64;
    for load in bank.loads() {
        for d in [&load.on_dynamics, &load.off_dynamics] {
            let g = zoh_discretize(d, bank.dt()).unwrap().dc_gain();
            worst = worst.max((g - 1.0).abs());
        }
    }
    verdict(
        worst <= 1e-9,
        format!("max |G(1) - 1| over 6 models = {worst:.2e} (<= 1e-9)"),
    )
}

fn steady_state() -> Verdict {
    let bank = LoadBank::reference();
    let mut parts = Vec::new();
    let mut pass = true;
    for load in bank.loads() {
        let tau = load.on_dynamics.time_constant();
        let k = (5.0 * tau / bank.dt()).round() as usize;
        let p = simulate_load(load, bank.dt(), &vec![1; k], 0.0).unwrap();
        let rel = (p[k] - load.size).abs() / load.size;
        pass &= rel <= 1e-3;
        parts.push(format!(
            "load {} at 5 tau = {k} s: {:.3}%",
            load.index,
            rel * 100.0
        ));
        // The settled value itself, for the ledger analysis.
        let long = simulate_load(load, bank.dt(), &vec![1; 20 * k], 0.0).unwrap();
        parts.push(format!(
            "at 100 tau: {:.1e}%",
            (long[20 * k] - load.size).abs() / load.size * 100.0
        ));
    }
    verdict(
        pass,
        format!("relative deviation (need <= 0.1%): {}", parts.join(", ")),
    )
}

fn overshoot() -> Verdict {
    let bank = LoadBank::reference();
    let load = &bank.loads()[1];
    let p = simulate_load(load, 1.0, &[1; 400], 0.0).unwrap();
    let peak = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let den = load.on_dynamics.denominator();
    let fine = dynamics::second_order_rk4(den[2], den[1], load.size, 0.01, 40_000, 1);
    let fine_peak = fine.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let diff = (peak - fine_peak).abs();
    verdict(
        peak > load.size && diff <= 1e-4,
        format!("load 2 peak {peak:.6} > 0.2586; fine-step peak {fine_peak:.6}, |diff| = {diff:.1e} (<= 1e-4)"),
    )
}

fn barrier_feasibility(record: &DayRecord) -> Verdict {
    let bad = (0..record.samples())
        .filter(|&k| record.error[k] < 0.0 && !record.in_fallback(k))
        .count();
    verdict(
        bad == 0,
        format!(
            "clear day: {bad} samples with e < 0 outside {} fall-back epochs ({} inside)",
            record.metrics.fallback_epochs, record.metrics.negative_error_samples
        ),
    )
}

fn largest_load_priority(record: &DayRecord) -> Verdict {
    let high: Vec<usize> = (0..record.samples())
        .filter(|&k| record.target[k] > 0.75)
        .collect();
    let on = high.iter().filter(|&&k| record.switching[0][k]).count();
    let share = on as f64 / high.len().max(1) as f64;
    verdict(
        !high.is_empty() && share >= 0.9,
        format!(
            "load 1 on for {on}/{} samples with P > 0.75 ({:.1}%, need >= 90%)",
            high.len(),
            share * 100.0
        ),
    )
}

fn dwell_audit(clear: &DayRecord, cloudy: &DayRecord) -> Verdict {
    let bank = LoadBank::reference();
    let a = audit_dwell(clear, &bank).len();
    let b = audit_dwell(cloudy, &bank).len();
    verdict(
        a == 0 && b == 0,
        format!(
            "violations of 180/240/300 s minimums: clear {a}, cloudy {b}; switches clear {:?}, cloudy {:?}",
            clear.metrics.switch_counts, cloudy.metrics.switch_counts
        ),
    )
}

fn run_cli_day(dir: &Path, threads: &str) -> (i32, Duration, Vec<u8>) {
    let out = dir.join(format!("threads{threads}"));
    let (code, _, elapsed) = loadtrack(&[
        "simulate",
        "-q",
        "--profile",
        data("clear_day.csv").to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--threads",
        threads,
    ]);
    (
        code,
        elapsed,
        std::fs::read(out.join("day.csv")).unwrap_or_default(),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let (code1, time1, csv1) = run_cli_day(tmp.path(), "1");
    let (code4, time4, csv4) = run_cli_day(tmp.path(), "4");

    let scheduler = Scheduler::new(LoadBank::reference(), TrackingConfig::reference()).unwrap();
    let clear = scheduler.run(&profile("clear_day.csv")).unwrap();
    let cloudy = scheduler.run(&profile("cloudy_day.csv")).unwrap();

    let criteria: Vec<(&str, Verdict)> = vec![
        ("unconstrained count", unconstrained_count()),
        ("oracle equivalence", oracle_equivalence()),
        ("count structure", count_structure()),
        ("published counts 2197 and 36", published_counts()),
        ("ZOH exactness", zoh_exactness()),
        ("DC gain", dc_gain()),
        ("steady-state demand", steady_state()),
        ("overshoot", overshoot()),
        ("barrier feasibility", barrier_feasibility(&clear)),
        ("largest-load priority", largest_load_priority(&clear)),
        ("dwell audit", dwell_audit(&clear, &cloudy)),
        (
            "performance",
            verdict(
                code1 == 0 && time1 <= Duration::from_secs(60),
                format!(
                    "full day via CLI: {time1:.2?} with 1 thread, {time4:.2?} with 4 (<= 60 s)"
                ),
            ),
        ),
        (
            "determinism",
            verdict(
                code1 == 0 && code4 == 0 && !csv1.is_empty() && csv1 == csv4,
                format!(
                    "day.csv with --threads 1 vs 4: {} bytes, identical = {}",
                    csv1.len(),
                    csv1 == csv4
                ),
            ),
        ),
    ];

    let mut failed = 0;
    for (i, (name, v)) in criteria.iter().enumerate() {
        println!(
            "criterion {:>2} {} {name}: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += !v.pass as usize;
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
