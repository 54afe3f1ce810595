use std::fmt::Write as _;
use std::io::{self, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use combo::harness::{bound_report, run_experiment};
use combo::scenario::{list_scenarios, load_config};
use combo::{Error, ErrorCategory};

#[derive(Parser)]
#[command(
    name = "combo",
    version,
    about = "Contextual online matching bandit simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all replications of a config and write regret.csv and diagnostics.json.
    Run {
        config: PathBuf,
        /// Master seed, replacing the config's.
        #[arg(long)]
        seed: Option<u64>,
        /// Replication count, replacing the config's.
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// List the built-in scenario presets.
    Scenarios {
        /// Emit JSON instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Print the exploration plan and closed-form bounds of a config.
    Diagnose { config: PathBuf },
}

fn exit_code(err: &Error) -> u8 {
    match err.category() {
        ErrorCategory::Validation => 2,
        ErrorCategory::Runtime => 3,
        ErrorCategory::Io => 4,
    }
}

fn category_name(c: ErrorCategory) -> &'static str {
    match c {
        ErrorCategory::Validation => "validation",
        ErrorCategory::Runtime => "runtime",
        ErrorCategory::Io => "io",
    }
}

fn run(cli: Cli) -> Result<String, Error> {
    let mut out = String::new();
    match cli.command {
        Command::Run {
            config,
            seed,
            reps,
            out_dir,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(reps) = reps {
                if reps == 0 {
                    return Err(Error::Constraint {
                        field: "reps".into(),
                        message: "must be positive".into(),
                    });
                }
                cfg.replications = reps;
            }
            let result = run_experiment(&cfg, Some(&out_dir))?;
            let d = &result.diagnostics;
            let _ = writeln!(
                out,
                "{}: {} replications, seed {}, exploration {} rounds",
                d.scenario, d.replications, d.seed, d.exploration.rounds
            );
            if let Some(rate) = d.exploitation_match_rate {
                let _ = writeln!(out, "exploitation match rate {rate:.4}");
            }
            for a in &d.agents {
                let _ = writeln!(
                    out,
                    "p{}: mean final regret {:.4} (min {:.4}, max {:.4})",
                    a.agent, a.mean_final_regret, a.min_final_regret, a.max_final_regret
                );
            }
            let _ = writeln!(out, "wrote {}", out_dir.join("regret.csv").display());
            let _ = writeln!(out, "wrote {}", out_dir.join("diagnostics.json").display());
        }
        Command::Scenarios { json } => {
            let all = list_scenarios();
            if json {
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&all)?);
            } else {
                for s in &all {
                    out.push_str(&s.table());
                }
            }
        }
        Command::Diagnose { config } => {
            let cfg = load_config(&config)?;
            let report = bound_report(&cfg)?;
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(text) => match io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
                eprintln!("error [io]: {e}");
                ExitCode::from(4)
            }
            _ => ExitCode::SUCCESS,
        },
        Err(err) => {
            eprintln!("error [{}]: {err}", category_name(err.category()));
            ExitCode::from(exit_code(&err))
        }
    }
}
