use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cloudpay::harness::{self, HarnessError, SCENARIOS};
use cloudpay::store::{verify_transcript, ScenarioConfig};

/// Simulate and verify cloud-wallet NFC payments.
#[derive(Debug, Parser)]
#[command(name = "cloudpay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its transcript and final state.
    Run {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a saved transcript against the config it was made with.
    Verify {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// List the shipped scenarios.
    ListScenarios,
}

const PASS: u8 = 0;
const FAIL: u8 = 1;
const USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            scenario,
            config,
            seed,
            out,
        } => run(scenario, &config, seed, &out),
        Command::Verify { transcript, config } => verify(&transcript, &config),
        Command::ListScenarios => {
            let width = SCENARIOS.iter().map(|s| s.name.len()).max().unwrap_or(0);
            for s in SCENARIOS {
                println!("{:width$}  {}", s.name, s.description);
            }
            PASS
        }
    };
    ExitCode::from(code)
}

fn load(path: &Path) -> Result<ScenarioConfig, u8> {
    ScenarioConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        USAGE
    })
}

fn run(scenario: Option<String>, config_path: &Path, seed: Option<u64>, out: &Path) -> u8 {
    let config = match load(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let Some(name) = scenario.or_else(|| config.scenario.clone()) else {
        eprintln!("error: no scenario given and none named in the config");
        return USAGE;
    };
    let seed = seed.or(config.seed).unwrap_or(0);
    let run = match harness::run_scenario(&name, &config, seed) {
        Ok(run) => run,
        Err(e @ (HarnessError::UnknownScenario(_) | HarnessError::Config(_))) => {
            eprintln!("error: {e}");
            return USAGE;
        }
        Err(e) => {
            eprintln!("error: scenario could not run: {e}");
            return FAIL;
        }
    };

    let written = fs::create_dir_all(out)
        .and_then(|()| fs::write(out.join("transcript.jsonl"), run.transcript.to_jsonl()))
        .and_then(|()| {
            let state = serde_json::to_string_pretty(&run.outcome).expect("outcome serializes");
            fs::write(out.join("final_state.json"), state + "\n")
        });
    if let Err(e) = written {
        eprintln!("error: cannot write to {}: {e}", out.display());
        return USAGE;
    }

    let outcome = &run.outcome;
    println!("scenario {} seed {}", outcome.scenario, outcome.seed);
    for s in &outcome.sessions {
        println!("  {:<28} {}", s.label, s.verdict);
    }
    for a in &outcome.assertions {
        let mark = if a.passed { "ok  " } else { "FAIL" };
        println!("  {mark} {}: {}", a.name, a.detail);
    }
    println!("wrote {}", out.display());
    if outcome.passed() {
        PASS
    } else {
        FAIL
    }
}

fn verify(transcript: &Path, config_path: &Path) -> u8 {
    let config = match load(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let text = match fs::read_to_string(transcript) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", transcript.display());
            return USAGE;
        }
    };
    match verify_transcript(&text, &config) {
        Ok(r) => {
            println!(
                "ok: {} records, {} messages, {} signatures, {} MACs, {} ledger entries",
                r.records, r.messages, r.signatures, r.macs, r.ledger_entries
            );
            PASS
        }
        Err(e) => {
            println!("FAIL {e}");
            FAIL
        }
    }
}
