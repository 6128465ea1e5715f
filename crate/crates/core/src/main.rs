use std::path::PathBuf;
use std::process::ExitCode;

use bernfield::cli::{report, run, ExperimentConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bernfield", version, about = "Normal approximation experiments for Bernoulli random fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments of a JSON config.
    Run {
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's `output`, else `out/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Summarize a run directory.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, seed, out, threads } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
                    eprintln!("thread pool: {e}");
                    return ExitCode::from(1);
                }
            }
            let dir = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
            match run(&cfg, &dir) {
                Ok(s) => {
                    println!(
                        "{}: {} pass, {} marginal, {} fail, {} experiment errors -> {}",
                        cfg.name,
                        s.pass,
                        s.marginal,
                        s.fail,
                        s.errors.len(),
                        dir.display()
                    );
                    for (exp, msg) in &s.errors {
                        eprintln!("{}: {msg}", exp.as_str());
                    }
                    if !s.errors.is_empty() {
                        ExitCode::from(1)
                    } else if s.fail > 0 {
                        ExitCode::from(3)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(bernfield::Error::Config(msg)) => {
                    eprintln!("{}: {msg}", config.display());
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Report { dir } => match report(&dir) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(1)
            }
        },
    }
}
