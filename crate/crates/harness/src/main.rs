use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rate_harness::{
    emit_plot_data, list, load, load_record, run_with_threads, validate_file, HarnessError, DEFAULT_OUTPUT_ROOT,
    EXIT_CRITERION_FAILED, EXIT_ERROR, EXIT_PASS, OUTPUT_ROOT_ENV,
};

#[derive(Parser)]
#[command(version, about = "Run rate experiments from TOML configs")]
struct Cli {
    /// Directory holding run directories.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = DEFAULT_OUTPUT_ROOT)]
    root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and run a config; exits 1 if any acceptance verdict fails.
    Run {
        config: PathBuf,
        /// Worker threads (defaults to the number of CPUs).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config against the schema without running it.
    Validate { config: PathBuf },
    /// Write bound-curve CSVs for a completed run.
    Plot { run_id: String },
    /// List completed runs.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Run { config, threads } => {
            let config = load(&config)?;
            let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let record = run_with_threads(&config, &cli.root, threads)?;
            for v in &record.verdicts {
                println!("{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.criterion, v.detail);
            }
            println!("run {} written to {}", record.run_id, record.directory.display());
            Ok(if record.passed() { EXIT_PASS } else { EXIT_CRITERION_FAILED })
        }
        Command::Validate { config } => {
            let report = validate_file(&config)?;
            if report.is_empty() {
                println!("{}: ok", config.display());
                Ok(EXIT_PASS)
            } else {
                eprintln!("{}:\n{report}", config.display());
                Ok(EXIT_ERROR)
            }
        }
        Command::Plot { run_id } => {
            let record = load_record(&cli.root, &run_id)?;
            for path in emit_plot_data(&record)? {
                println!("{}", path.display());
            }
            Ok(EXIT_PASS)
        }
        Command::List => {
            for r in list(&cli.root)? {
                println!(
                    "{}\t{}\t{}\t{}",
                    r.run_id,
                    r.kind,
                    if r.passed() { "pass" } else { "fail" },
                    r.finished_at.to_rfc3339()
                );
            }
            Ok(EXIT_PASS)
        }
    }
}
