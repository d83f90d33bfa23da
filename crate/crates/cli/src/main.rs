use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mrdmoc_cli::config::RunConfig;
use mrdmoc_cli::{run, CliError, RunOptions};

/// Multirate variational simulation and optimal control studies.
#[derive(Parser)]
#[command(name = "mrdmoc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the studies requested in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `[output] dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for sweep points.
        #[arg(long)]
        jobs: Option<usize>,
        /// Seed recorded in the manifest.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    RunConfig::load(path).map_err(|e| match e {
        CliError::Io { path, source } => CliError::Config {
            line: None,
            field: path.display().to_string(),
            message: source.to_string(),
        },
        other => other,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => load(&config).map(|cfg| {
            println!("ok: {} ({} studies)", config.display(), cfg.study.kinds.len());
        }),
        Command::Run {
            config,
            out,
            jobs,
            seed,
        } => load(&config).and_then(|cfg| {
            let summary = run(&cfg, &RunOptions { out, jobs, seed })?;
            println!(
                "wrote {} rows and {} files to {}",
                summary.rows.len(),
                summary.files.len(),
                summary.out_dir.display()
            );
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
