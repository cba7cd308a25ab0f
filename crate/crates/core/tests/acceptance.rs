//! Acceptance suite: one pass/fail line per criterion.

use std::process::{Command, ExitCode};
use std::time::Instant;

use nildyn::selftest::run_criterion;

const SEED: u64 = 0;

fn selftest_json(threads: usize) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_nildyn"))
        .args(["--json", "--threads", &threads.to_string(), "selftest"])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("selftest exited with {}", out.status));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

/// The binary must print byte-identical JSON at 1 and 8 threads.
fn determinism_end_to_end() -> Result<(), String> {
    let one = selftest_json(1)?;
    let eight = selftest_json(8)?;
    if one != eight {
        return Err("binary output differs between 1 and 8 threads".into());
    }
    Ok(())
}

fn main() -> ExitCode {
    let mut failed = 0;
    for id in 1..=10 {
        let t = Instant::now();
        let mut c = run_criterion(id, SEED);
        let mut note = String::new();
        if id == 10 && c.passed {
            if let Err(e) = determinism_end_to_end() {
                c.passed = false;
                note = format!(" ({e})");
            }
        }
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {:<30} {verdict} [{:.2} s]{note}",
            c.id,
            c.name,
            t.elapsed().as_secs_f64()
        );
        if !c.passed {
            println!("  details: {}", c.details);
            failed += 1;
        }
    }
    println!("acceptance: {}/10 passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
