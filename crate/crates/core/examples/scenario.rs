//! Run a JSON scenario through the library API, as the `run` subcommand does.
//!
//! `cargo run --example scenario -- crates/core/scenarios/attenuation_ball.json [out-dir]`

use std::path::PathBuf;

use convex_transport::scenario::{run_scenario, RunOptions};

fn main() -> convex_transport::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/attenuation_ball.json")));
    let opts = RunOptions {
        out: args.next().map(PathBuf::from),
        seed: None,
    };
    let out = run_scenario(&config, &opts)?;
    print!("{}", out.report.to_text());
    Ok(())
}
