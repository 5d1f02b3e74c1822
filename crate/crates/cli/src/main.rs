use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use condind_cli::config::ExperimentConfig;
use condind_cli::runner::{run_experiment, write_atomic};
use condind_cli::verify::{run_suite, SeedBank, Suite};
use condind_cli::{compare, svg, CliError};
use condind_core::{generate, FactorSpec};

#[derive(Parser)]
#[command(
    name = "condind",
    version,
    about = "Correlated-posterior disentanglement experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every sigma × seed cell of a TOML experiment config.
    Run {
        config: PathBuf,
        /// Worker threads; defaults to the hardware thread count.
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a property suite: chain_rule, theorem1, lemma2, kl_offset,
    /// infogan_decomp, mi_divergence or all.
    Verify {
        suite: String,
        /// JSON array of seeds replacing the built-in bank.
        #[arg(long)]
        seed_bank: Option<PathBuf>,
        /// Directory for `verify_report.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize an aggregate CSV per sigma.
    Compare {
        csv: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Directory for `compare_report.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a dataset from a TOML factor spec into a directory.
    GenData { spec: PathBuf, out: PathBuf },
}

fn write_report(dir: Option<&Path>, name: &str, json: &str) -> Result<(), CliError> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join(name), json.as_bytes())?;
    }
    Ok(())
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, jobs, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            if jobs == 0 {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            let summary = run_experiment(&cfg, &out, jobs)?;
            println!(
                "{} runs: {} executed, {} skipped; aggregate at {}",
                summary.records.len(),
                summary.executed,
                summary.skipped,
                summary.aggregate.display()
            );
            Ok(())
        }
        Command::Verify { suite, seed_bank, out } => {
            let suite: Suite = suite.parse()?;
            let bank = match seed_bank {
                Some(path) => SeedBank::load(&path)?,
                None => SeedBank::default(),
            };
            let report = run_suite(suite, &bank)?;
            let json = serde_json::to_string_pretty(&report)?;
            println!("{json}");
            write_report(out.as_deref(), "verify_report.json", &json)?;
            if report.passed {
                Ok(())
            } else {
                let failed: Vec<&str> = report.suites.iter().filter(|s| !s.passed).map(|s| s.suite).collect();
                Err(CliError::PropertyFailed(failed.join(", ")))
            }
        }
        Command::Compare {
            csv,
            svg: svg_path,
            out,
        } => {
            let report = compare::compare_file(&csv)?;
            let json = serde_json::to_string_pretty(&report)?;
            println!("{json}");
            write_report(out.as_deref(), "compare_report.json", &json)?;
            if let Some(path) = svg_path {
                write_atomic(&path, svg::render(&report).as_bytes())?;
            }
            Ok(())
        }
        Command::GenData { spec, out } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", spec.display())))?;
            let spec: FactorSpec = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
            let data = generate(&spec)?;
            data.save(&out)?;
            println!("{} images written to {}", data.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
