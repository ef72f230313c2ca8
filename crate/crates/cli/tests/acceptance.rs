//! Acceptance suite: runs A1–A11 at their stated settings and prints one
//! PASS/FAIL line per criterion. A FAIL is reported, not raised; the process
//! exits non-zero only when a run cannot complete.

use std::process::ExitCode;
use std::time::Instant;

use fvqsd_cli::checks;
use fvqsd_cli::config::parse_config;
use fvqsd_cli::{run_experiment, Verdict};

enum Source {
    Config(&'static str),
    Check(fn() -> fvqsd_core::Result<Vec<Verdict>>),
}

struct Criterion {
    id: &'static str,
    source: Source,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: "A1", source: Source::Config("experiment=qsd_accuracy\n") },
    Criterion { id: "A2", source: Source::Check(checks::oracle_analytic) },
    Criterion { id: "A3", source: Source::Config("experiment=contraction_vs_N\n") },
    Criterion { id: "A4", source: Source::Config("experiment=chaos_vs_N\n") },
    // dt = 0.01 keeps the t = 200 horizon affordable on one core.
    Criterion { id: "A5", source: Source::Config("experiment=chaos_vs_N\ndt=0.01\ntimes=5,50,200\n") },
    Criterion { id: "A6", source: Source::Config("experiment=boundary_fraction\n") },
    Criterion { id: "A7", source: Source::Config("experiment=exit_scaling\n") },
    Criterion { id: "A8", source: Source::Config("experiment=uniform_survival\n") },
    Criterion { id: "A9", source: Source::Check(|| checks::coupling_marginal(10_000)) },
    Criterion { id: "A10", source: Source::Config("experiment=lyapunov_decay\n") },
    Criterion { id: "A11", source: Source::Check(|| checks::dynkin_residual(200)) },
];

fn verdicts_for(c: &Criterion) -> Result<Vec<Verdict>, String> {
    let all = match &c.source {
        Source::Config(text) => {
            let cfg = parse_config(text).map_err(|e| e.to_string())?;
            run_experiment(&cfg).map_err(|e| e.to_string())?.verdicts
        }
        Source::Check(f) => f().map_err(|e| e.to_string())?,
    };
    let mine: Vec<Verdict> =
        all.into_iter().filter(|v| v.criterion_id.split('/').next() == Some(c.id)).collect();
    if mine.is_empty() {
        return Err(format!("no verdict produced for {}", c.id));
    }
    Ok(mine)
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut passed = 0;
    let mut errors = 0;
    for c in CRITERIA {
        let start = Instant::now();
        match verdicts_for(c) {
            Ok(vs) => {
                let pass = vs.iter().all(|v| v.pass);
                passed += usize::from(pass);
                let parts: Vec<String> = vs
                    .iter()
                    .map(|v| {
                        let mark = if v.pass { "ok" } else { "FAILED" };
                        format!("{} {mark} value={:.6} threshold={}", v.criterion_id, v.value, v.threshold)
                    })
                    .collect();
                let status = if pass { "PASS" } else { "FAIL" };
                println!("{} {status} [{:.1}s] {}", c.id, start.elapsed().as_secs_f64(), parts.join("; "));
                for v in vs.iter().filter(|v| !v.detail.is_empty()) {
                    println!("    {}: {}", v.criterion_id, v.detail);
                }
            }
            Err(e) => {
                errors += 1;
                println!("{} FAIL [{:.1}s] error: {e}", c.id, start.elapsed().as_secs_f64());
            }
        }
    }
    println!("acceptance: {passed}/{} criteria pass", CRITERIA.len());
    if errors > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
