//! Runs the acceptance suite twice: one PASS/FAIL line per criterion, and
//! the two summaries must match byte for byte.

use std::process::ExitCode;

use altphillips::verify::{run_suite, SuiteOptions};

fn main() -> ExitCode {
    let opts = SuiteOptions::default();
    let first = run_suite(&opts);
    print!("{}", first.render());
    eprint!("{}", first.render_timings());
    let second = run_suite(&opts);
    let identical = first.render() == second.render();
    println!("{} determinism: two suite runs render byte-identical summaries", if identical { "PASS" } else { "FAIL" });
    if first.passed() && second.passed() && identical {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
