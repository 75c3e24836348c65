//! Runs every acceptance criterion and prints one line per criterion.

use std::process::ExitCode;

use fshift_core::acceptance::run_all;

const SEED: u64 = 20_240_601;

fn main() -> ExitCode {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get().min(4));
    let report = run_all(SEED, threads);
    for c in &report.criteria {
        println!("[{}] criterion {:>2}: {}  {}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.name, c.detail);
    }
    let failed: Vec<u32> = report.criteria.iter().filter(|c| !c.pass).map(|c| c.id).collect();
    if report.criteria.len() == 11 && failed.is_empty() {
        println!("acceptance: all {} criteria pass", report.criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
