use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vrsgt_cli::commands::{self, DataKind, GenDataArgs, SweepParam};
use vrsgt_cli::{CliError, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "vrsgt", version, about = "Decentralized optimization with orthogonality constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; writes trace.csv and summary.toml.
    Run {
        #[command(flatten)]
        common: Common,
        /// Pause after this many iterations and write a checkpoint.
        #[arg(long, requires = "checkpoint_dir")]
        stop_after: Option<u64>,
        /// Directory for the optimizer checkpoint.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// Continue from a checkpoint, appending to the trace in --out-dir.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run the same config for several values of beta or eta.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// Write a synthetic data matrix.
    GenData {
        #[arg(long, value_enum)]
        kind: DataKind,
        #[arg(long)]
        n: usize,
        /// Number of samples (columns).
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.9)]
        xi: f64,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        outlier_ratio: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; `.csv` selects text, anything else the binary format.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides output.dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let out = self.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
        if self.threads == Some(0) {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        Ok((cfg, out))
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            common,
            stop_after,
            checkpoint_dir,
            resume,
        } => {
            let (cfg, out) = common.load()?;
            let opts = RunOptions {
                threads: common.threads,
                stop_after,
                checkpoint_dir,
                resume,
            };
            let s = commands::run(&cfg, &out, &opts)?;
            println!(
                "{}: stagap {:e} after {} iterations, {} rounds, {} samples",
                s.status, s.final_stagap, s.iterations, s.rounds, s.samples
            );
            Ok(())
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let (cfg, out) = common.load()?;
            let opts = RunOptions {
                threads: common.threads,
                ..RunOptions::default()
            };
            let legs = commands::sweep(&cfg, param, &values, &out, &opts)?;
            for leg in &legs {
                match &leg.outcome {
                    Ok(s) => println!("{param} = {}: {} stagap {:e}", leg.value, s.status, s.final_stagap),
                    Err(e) => println!("{param} = {}: failed: {e}", leg.value),
                }
            }
            match legs.iter().find(|l| l.exit_code != 0) {
                Some(l) => Err(match l.exit_code {
                    4 => CliError::Divergence(format!("sweep leg {param} = {} diverged", l.value)),
                    3 => CliError::Data(format!("sweep leg {param} = {} failed", l.value)),
                    _ => CliError::Config(format!("sweep leg {param} = {} failed", l.value)),
                }),
                None => Ok(()),
            }
        }
        Command::GenData {
            kind,
            n,
            m,
            xi,
            p,
            outlier_ratio,
            noise_sigma,
            seed,
            out,
            truth_out,
        } => commands::gen_data(&GenDataArgs {
            kind,
            n,
            m,
            xi,
            p,
            outlier_ratio,
            noise_sigma,
            seed,
            out,
            truth_out,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
