use clap::{Parser, Subcommand};
use shellphase::cli;
use std::path::PathBuf;
use std::process::ExitCode;

/// Phase separation coupled to thin-shell mechanics on spline surfaces.
#[derive(Parser)]
#[command(name = "shellphase", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a configuration file.
    Run {
        config: PathBuf,
        /// Override configuration keys, e.g. --set time.t_end=10
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (default: ./out)
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the initial-condition seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a checkpoint file.
        #[arg(long)]
        restore: Option<PathBuf>,
        /// Suppress progress output.
        #[arg(long)]
        quiet: bool,
    },
    /// Parse and validate a configuration file without running.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Load, validate and summarize an extraction mesh file.
    InspectMesh { file: PathBuf },
}

fn main() -> ExitCode {
    // bit-reproducible runs: keep the linear algebra sequential
    faer::set_global_parallelism(faer::Par::Seq);
    let args = Args::parse();
    let result = match args.command {
        Command::Run {
            config,
            set,
            out,
            seed,
            restore,
            quiet,
        } => cli::run(&config, &set, &out, seed, restore.as_deref(), quiet),
        Command::Validate { config, set } => cli::validate(&config, &set),
        Command::InspectMesh { file } => cli::inspect_mesh(&file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
