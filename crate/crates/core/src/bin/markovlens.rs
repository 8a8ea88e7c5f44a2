use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use markovlens::io::config::{AnalysisConfig, Task};
use markovlens::io::report::summarize_dir;
use markovlens::io::run::{run_tasks, RunError};

#[derive(Debug, Parser)]
#[command(
    name = "markovlens",
    version,
    about = "Divisibility, CP-divisibility and backflow analysis of quantum dynamical maps"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `witness.seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the tasks listed in the config.
    Analyze(RunArgs),
    /// Randomized witness search only.
    WitnessScan(RunArgs),
    /// CP extension of the limit projectors only.
    Extend(RunArgs),
    /// Summarize the artifacts in an output directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), RunError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Config(format!("--threads: {e}")))?;
    }
    let (args, only) = match cli.command {
        Command::Report { input } => {
            print!("{}", summarize_dir(&input)?);
            return Ok(());
        }
        Command::Analyze(a) => (a, None),
        Command::WitnessScan(a) => (a, Some(Task::WitnessScan)),
        Command::Extend(a) => (a, Some(Task::Extend)),
    };
    let mut config = AnalysisConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.witness.seed = seed;
    }
    if let Some(out) = args.out {
        config.output = out;
    }
    let prepared = config.prepare()?;
    let tasks = only.map_or_else(|| prepared.config.tasks.clone(), |t| vec![t]);
    let out_dir = prepared.config.output.clone();
    for path in run_tasks(&prepared, &tasks, &out_dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MARKOVLENS_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("markovlens: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
