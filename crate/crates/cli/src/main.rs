use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use exal_cli::{BenchArgs, CliError, ExportArgs, RunGameArgs};

#[derive(Parser)]
#[command(name = "exal", version, about = "Swarm-searched image perturbations and adversarial retraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, attack and retrain for every configured label pair.
    RunGame {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed (and EXAL_SEED).
        #[arg(long, env = "EXAL_SEED")]
        seed: Option<u64>,
        /// Comma-separated `positive:negative` pairs.
        #[arg(long)]
        pairs: Option<String>,
        #[arg(long)]
        scale: Option<f64>,
        /// Output directory; defaults to `output.dir` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence of pso, mpso and empso on a test function, as CSV.
    Bench {
        /// sphere, rastrigin or rosenbrock.
        #[arg(long = "fn")]
        function: String,
        #[arg(long, default_value_t = 2)]
        dims: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        particles: usize,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Original / perturbation / perturbed PGM panels for a saved perturbation.
    ExportImages {
        #[arg(long)]
        perturbation: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        per_class: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::RunGame {
            config,
            seed,
            pairs,
            scale,
            out,
        } => {
            let manifest = exal_cli::run_game(&RunGameArgs {
                config,
                seed,
                pairs,
                scale,
                out,
            })?;
            println!("{}", manifest.artifacts.results.display());
            Ok(())
        }
        Command::Bench {
            function,
            dims,
            seed,
            particles,
            iterations,
            out,
        } => {
            let args = BenchArgs {
                function,
                dims,
                seed,
                particles,
                iterations,
            };
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path)
                        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
                    exal_cli::bench(&args, io::BufWriter::new(file))
                }
                None => exal_cli::bench(&args, io::stdout().lock()),
            }
        }
        Command::ExportImages {
            perturbation,
            config,
            scale,
            out,
            per_class,
        } => {
            exal_cli::export_images(&ExportArgs {
                perturbation,
                config,
                scale,
                out,
                per_class,
            })?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("exal: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
