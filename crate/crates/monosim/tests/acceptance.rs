//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.
//! The two end-to-end criteria dominate the run time (about a quarter hour on
//! one core in release mode, far longer in debug).

use std::process::ExitCode;
use std::time::Instant;

use monosim::probes::{self, Check, EndToEnd};

fn summarize(checks: &[Check]) -> String {
    let failed: Vec<String> =
        checks.iter().filter(|c| !c.pass).map(|c| format!("{} = {:.4e} vs {:.4e}", c.name, c.value, c.bound)).collect();
    if failed.is_empty() {
        format!("{} checks", checks.len())
    } else {
        format!("failed: {}", failed.join("; "))
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn suite(checks: anyhow::Result<Vec<Check>>) -> Outcome {
    match checks {
        Ok(c) => Outcome { pass: c.iter().all(|c| c.pass), detail: summarize(&c) },
        Err(e) => Outcome { pass: false, detail: format!("error: {e:#}") },
    }
}

fn recovery() -> anyhow::Result<Outcome> {
    let runs = probes::recovery_runs(10)?;
    let good = runs.iter().filter(|r| r.loss <= 0.01 && r.sin_angle <= 0.05 && r.seconds <= 120.0).count();
    let slowest = runs.iter().map(|r| r.seconds).fold(0.0, f64::max);
    Ok(Outcome {
        pass: good >= 8,
        detail: format!(
            "{good}/10 seeds with loss <= 0.01, sin <= 0.05, time <= 120s (median loss {:.2e}, max sin {:.2e}, slowest {slowest:.1}s)",
            median(runs.iter().map(|r| r.loss).collect()),
            runs.iter().map(|r| r.sin_angle).fold(0.0, f64::max),
        ),
    })
}

fn robustness() -> anyhow::Result<Outcome> {
    let eps = 0.02;
    let mut pass = true;
    let mut parts = Vec::new();
    for opt in [0.01, 0.05] {
        let runs: Vec<EndToEnd> = probes::robustness_runs(opt, 10)?;
        let ref_opt = median(runs.iter().map(|r| r.opt).collect());
        let loss = median(runs.iter().map(|r| r.loss).collect());
        let bound = 16.0 * ref_opt + eps;
        pass &= loss <= bound;
        parts.push(format!("OPT~{ref_opt:.4}: median loss {loss:.4} <= {bound:.4} (ratio {:.2})", loss / ref_opt));
    }
    Ok(Outcome { pass, detail: parts.join("; ") })
}

fn timed(limit_s: f64, run: impl FnOnce() -> anyhow::Result<Vec<Check>>) -> Outcome {
    let start = Instant::now();
    let mut o = suite(run());
    let secs = start.elapsed().as_secs_f64();
    if secs > limit_s {
        o.pass = false;
    }
    o.detail = format!("{} in {secs:.1}s (limit {limit_s}s)", o.detail);
    o
}

fn main() -> ExitCode {
    type Run = Box<dyn Fn() -> Outcome>;
    let criteria: Vec<(u32, &str, Run)> = vec![
        (3, "spectral matrix structure", Box::new(|| timed(300.0, || probes::spectral_suite(1_000_000, 1)))),
        (4, "isotonic oracle equivalence", Box::new(|| suite(probes::isotonic_suite()))),
        (5, "OU semigroup suite", Box::new(|| suite(probes::semigroup_suite()))),
        (6, "oracle-sign angle contraction", Box::new(|| suite(probes::contraction_suite(10)))),
        (7, "Wedin bound and concentration", Box::new(|| suite(probes::wedin_suite(10)))),
        (8, "initializer angle contract", Box::new(|| suite(probes::initializer_suite(10)))),
        (
            1,
            "noiseless recovery",
            Box::new(|| recovery().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e:#}") })),
        ),
        (
            2,
            "constant-factor robustness",
            Box::new(|| robustness().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e:#}") })),
        ),
    ];
    let mut failures = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let o = run();
        failures += usize::from(!o.pass);
        println!(
            "{} criterion {id} ({name}): {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
