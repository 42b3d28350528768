//! Runs every acceptance criterion at its stated tolerance and runtime bound.
//! Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

use std::process::ExitCode;
use std::time::Instant;

use plmforge::suites::{criterion, Config};

const SEED: u64 = 20240601;

/// (criterion, title, runtime bound in seconds)
const CRITERIA: [(u32, &str, f64); 10] = [
    (1, "gadget correctness", 5.0),
    (2, "deterministic bases", 5.0),
    (3, "compiler distribution equality", 60.0),
    (4, "projectivity and output projectors", 120.0),
    (5, "authentication correctness diagram", 60.0),
    (6, "Pauli key update", 30.0),
    (7, "teleportation", 10.0),
    (8, "end-to-end functionality", 600.0),
    (9, "real versus simulated package", 600.0),
    (10, "circuit rewriting", 10.0),
];

fn main() -> ExitCode {
    let cfg = Config::new(SEED);
    let mut failures = 0;
    for (n, title, bound) in CRITERIA {
        let start = Instant::now();
        let cases = criterion(n, &cfg);
        let secs = start.elapsed().as_secs_f64();
        let bad: Vec<String> = cases
            .iter()
            .filter(|c| !c.pass())
            .map(|c| format!("{} (metric {:e}, tolerance {:e})", c.name, c.metric, c.tolerance))
            .collect();
        let slow = secs > bound;
        let ok = bad.is_empty() && !slow && !cases.is_empty();
        if !ok {
            failures += 1;
        }
        let worst = cases.iter().map(|c| c.metric / c.tolerance.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
        println!(
            "{} criterion {n}: {title}: {} cases, {secs:.2} s of {bound:.0} s, worst metric/tolerance {worst:.2e}",
            if ok { "PASS" } else { "FAIL" },
            cases.len(),
        );
        for b in &bad {
            println!("    failed case {b}");
        }
        if slow {
            println!("    runtime bound exceeded");
        }
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
