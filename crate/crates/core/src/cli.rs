//! `drng-sim`: run a scenario file and write per-round records plus a summary.
//!
//! Exit codes: 0 on success, 1 on a configuration problem (unreadable or
//! invalid scenario, bad flags, unwritable output directory), 2 when a run
//! violates an internal invariant such as fund conservation.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::contract::VerificationMode;
use crate::simulator::{run_batch, BatchResult, ScenarioConfig, SimError};

pub const RECORDS_FILE: &str = "rounds.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Eager,
    Lazy,
}

#[derive(Debug, Parser)]
#[command(
    name = "drng-sim",
    about = "Simulate threshold-encrypted random beacon rounds"
)]
struct Args {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Number of rounds, overriding the scenario file.
    #[arg(long)]
    rounds: Option<usize>,
    /// Master seed, overriding the scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// Verification mode, overriding the scenario file.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory for rounds.jsonl and summary.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

enum Failure {
    Config(String),
    Internal(String),
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(args: Args) -> Result<BatchResult, Failure> {
    let mut scenario = load_scenario(&args.config).map_err(Failure::Config)?;
    if let Some(r) = args.rounds {
        scenario.rounds = r;
    }
    if let Some(s) = args.seed {
        scenario.master_seed = s;
    }
    if let Some(m) = args.mode {
        scenario.verification_mode = match m {
            ModeArg::Eager => VerificationMode::Eager,
            ModeArg::Lazy => VerificationMode::Lazy,
        };
    }

    let batch = run_batch(&scenario).map_err(|e| match e {
        SimError::Config(m) => Failure::Config(m),
        SimError::Invariant(m) => Failure::Internal(m),
    })?;
    if !batch.metrics.funds_conserved {
        return Err(Failure::Internal("fund conservation violated".into()));
    }
    if (batch.metrics.finalize_rate + batch.metrics.abort_rate - 1.0).abs() > 1e-12 {
        return Err(Failure::Internal(
            "finalize and abort rates do not sum to 1".into(),
        ));
    }

    let io = |e: std::io::Error| Failure::Config(format!("{}: {e}", args.out.display()));
    fs::create_dir_all(&args.out).map_err(io)?;
    fs::write(args.out.join(RECORDS_FILE), batch.records_jsonl()).map_err(io)?;
    let summary = serde_json::to_string_pretty(&batch.metrics).expect("metrics serialize");
    fs::write(args.out.join(SUMMARY_FILE), format!("{summary}\n")).map_err(io)?;
    if !args.quiet {
        println!("{summary}");
    }
    Ok(batch)
}

pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(args) {
        Ok(_) => 0,
        Err(Failure::Config(m)) => {
            eprintln!("drng-sim: config error: {m}");
            1
        }
        Err(Failure::Internal(m)) => {
            eprintln!("drng-sim: internal error: {m}");
            2
        }
    }
}
