//! Runs every acceptance check and prints one line per check.
//!
//! `cargo test --test acceptance -- AC03 AC08` runs a subset by id.

use std::process::ExitCode;

use qpake::acceptance::CHECKS;

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<_> = CHECKS
        .iter()
        .filter(|c| filters.is_empty() || filters.iter().any(|f| *f == format!("AC{:02}", c.id) || f == c.name))
        .collect();
    let mut failed = 0;
    for check in &selected {
        let outcome = check.run();
        println!("{outcome}");
        if !outcome.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", selected.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
