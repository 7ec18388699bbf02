//! Run one verification suite and print its deterministic JSON report.

use convex_transport::scenario::run_verification_suite;

fn main() -> convex_transport::Result<()> {
    let suite = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    let report = run_verification_suite(&suite, 2024)?;
    println!("{}", report.deterministic_json());
    if !report.all_pass() {
        std::process::exit(1);
    }
    Ok(())
}
