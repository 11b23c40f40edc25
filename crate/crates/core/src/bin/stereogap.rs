use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stereogap::experiment::{list_experiments, load_config, run, ExperimentError};

#[derive(Parser)]
#[command(name = "stereogap", version, about = "Run split-loss experiments from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for parallel sections (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the available experiment kinds.
    ListExperiments,
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn report(err: &ExperimentError) -> ExitCode {
    match err {
        ExperimentError::Config(diags) => {
            for d in diags {
                eprintln!("config error: {d}");
            }
            ExitCode::from(EXIT_CONFIG)
        }
        ExperimentError::Runtime(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::ListExperiments => {
            for (name, description) in list_experiments() {
                println!("{name:<16} {description}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!("{}: ok ({})", config.display(), cfg.kind);
                ExitCode::SUCCESS
            }
            Err(e) => report(&e),
        },
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => {
            if let Some(n) = threads {
                if n == 0 {
                    eprintln!("config error: --threads must be at least 1");
                    return ExitCode::from(EXIT_CONFIG);
                }
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            }
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return report(&e),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let Some(dir) = out.or_else(|| cfg.output_dir.clone()) else {
                eprintln!("config error: output_dir: give --out or set output_dir in the config");
                return ExitCode::from(EXIT_CONFIG);
            };
            match run(&cfg, &dir) {
                Ok(m) => {
                    println!(
                        "{} finished: {} file(s) in {}",
                        m.experiment,
                        m.files.len(),
                        dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => report(&e),
            }
        }
    }
}
