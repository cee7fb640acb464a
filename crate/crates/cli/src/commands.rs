//! Subcommand bodies, kept out of `main` so tests can drive them directly.

use std::fmt;
use std::path::{Path, PathBuf};

use vrsgt_core::problems::io::{write_csv, write_matrix};
use vrsgt_core::problems::{gen_dpcp_data, gen_pca_data};
use vrsgt_core::Mat;

use crate::experiment::{run_to_dir, Experiment, RunOptions, Summary};
use crate::{CliError, ExperimentConfig};

pub fn run(config: &ExperimentConfig, out_dir: &Path, opts: &RunOptions) -> Result<Summary, CliError> {
    let exp = Experiment::build(config)?;
    log::info!(
        "running {:?} on {} agents, lambda = {:.4}",
        config.algorithm.name,
        config.network.agents,
        exp.mixing.lambda()
    );
    run_to_dir(&exp, out_dir, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Beta,
    Eta,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Beta => "beta",
            SweepParam::Eta => "eta",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepLeg {
    pub value: f64,
    pub dir: PathBuf,
    pub outcome: Result<Summary, String>,
    pub exit_code: i32,
}

/// Run the base config once per value, each leg in `<out_dir>/<param>_<value>`.
/// Failed legs are recorded and the sweep continues; `sweep_summary.csv`
/// lists every leg.
pub fn sweep(
    base: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<Vec<SweepLeg>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let mut legs = Vec::new();
    for &value in values {
        let mut cfg = base.clone();
        match param {
            SweepParam::Beta => cfg.algorithm.beta = value,
            SweepParam::Eta => {
                cfg.algorithm.eta = value;
                cfg.algorithm.eta0 = value;
            }
        }
        let dir = out_dir.join(format!("{param}_{value}"));
        let result = run(&cfg, &dir, opts);
        if let Err(e) = &result {
            log::warn!("{param} = {value}: {e}");
        }
        legs.push(SweepLeg {
            value,
            dir,
            exit_code: result.as_ref().map_or_else(|e| e.exit_code(), |_| 0),
            outcome: result.map_err(|e| e.to_string()),
        });
    }
    write_sweep_summary(&out_dir.join("sweep_summary.csv"), param, &legs)?;
    Ok(legs)
}

fn write_sweep_summary(path: &Path, param: SweepParam, legs: &[SweepLeg]) -> Result<(), CliError> {
    let data_err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(data_err)?;
    w.write_record(["param", "value", "status", "final_stagap", "rounds", "samples", "recovery", "error"])
        .map_err(data_err)?;
    for leg in legs {
        let value = leg.value.to_string();
        let row = match &leg.outcome {
            Ok(s) => [
                param.to_string(),
                value,
                s.status.clone(),
                format!("{:e}", s.final_stagap),
                s.rounds.to_string(),
                s.samples.to_string(),
                s.recovery.map(|r| format!("{r:e}")).unwrap_or_default(),
                String::new(),
            ],
            Err(msg) => {
                let status = if leg.exit_code == 4 { "diverged" } else { "failed" };
                [param.to_string(), value, status.into(), String::new(), String::new(), String::new(), String::new(), msg.clone()]
            }
        };
        w.write_record(row).map_err(data_err)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DataKind {
    Pca,
    Dpcp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenDataArgs {
    pub kind: DataKind,
    pub n: usize,
    pub m: usize,
    pub xi: f64,
    /// Columns of the PCA ground truth to write.
    pub p: Option<usize>,
    pub outlier_ratio: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub out: PathBuf,
    /// PCA: top singular subspace; DPCP: hyperplane normal.
    pub truth_out: Option<PathBuf>,
}

fn save(path: &Path, m: &Mat) -> Result<(), CliError> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        write_csv(path, m)?;
    } else {
        write_matrix(path, m)?;
    }
    Ok(())
}

pub fn gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let (data, truth) = match args.kind {
        DataKind::Pca => {
            let d = gen_pca_data(args.n, args.m, args.xi, args.seed)?;
            let top = d.top_subspace(args.p.unwrap_or(args.n).min(args.n));
            (d.a, top)
        }
        DataKind::Dpcp => {
            let d = gen_dpcp_data(args.n, 1, args.m, args.outlier_ratio, args.noise_sigma, args.seed)?;
            (d.samples, d.normal)
        }
    };
    save(&args.out, &data)?;
    if let Some(t) = &args.truth_out {
        save(t, &truth)?;
    }
    Ok(())
}
