//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

use growlab::acceptance::{format_line, run_criterion, COUNT};

fn main() {
    let seed = std::env::var("GROWLAB_ACCEPTANCE_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(20_241_019);
    let mut failed = Vec::new();
    for id in 1..=COUNT {
        let r = run_criterion(id, seed);
        println!("{}", format_line(&r));
        if !r.passed {
            failed.push(id);
        }
    }
    println!("acceptance: {} of {COUNT} criteria passed", COUNT - failed.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
