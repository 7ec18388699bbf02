use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use convex_transport::scenario::{run_scenario, run_verification_suite, write_outputs, RunOptions, RunOutput};

/// Characteristic transport solver and verification harness.
///
/// Every flag can also be set through an environment variable with the
/// prefix `CONVEX_TRANSPORT_` (e.g. `CONVEX_TRANSPORT_SEED=7`).
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Directory for report.json, report.txt and psi_slice.csv.
    #[arg(long, global = true, env = "CONVEX_TRANSPORT_OUT")]
    out: Option<PathBuf>,
    /// Seed for randomized checks; overrides the scenario's `seed`.
    #[arg(long, global = true, env = "CONVEX_TRANSPORT_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CONVEX_TRANSPORT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON scenario.
    Run { config: PathBuf },
    /// Run a verification suite: geometry, attenuation, scattering, csda, norms or all.
    Verify { suite: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let opts = RunOptions {
        out: cli.out.clone(),
        seed: cli.seed,
    };
    let result = match &cli.command {
        Command::Run { config } => run_scenario(config, &opts),
        Command::Verify { suite } => run_verification_suite(suite, cli.seed.unwrap_or(0))
            .map(|report| RunOutput { report, psi: None })
            .and_then(|out| {
                if let Some(dir) = &cli.out {
                    write_outputs(&out, dir)?;
                }
                Ok(out)
            }),
    };
    match result {
        Ok(out) => {
            print!("{}", out.report.to_text());
            if out.report.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
