//! Build a problem, network and solver from a config and run it.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use vrsgt_core::linalg::random_orthonormal;
use vrsgt_core::network::{build_topology, metropolis_weights};
use vrsgt_core::optimizer::{
    checkpoint, Drsgd, DrsgdParams, HyperParams, Monitor, RunSummary, StopReason, TraceRecord,
};
use vrsgt_core::problems::{
    gen_dpcp_data, gen_pca_data, gen_quadratic_data, io::load_matrix_file, partition,
};
use vrsgt_core::{GroundTruth, Mat, MixingMatrix, ProblemOracle, Topology, TopologyKind, Vrsgt};

use crate::config::{AlgorithmName, ExperimentConfig, ProblemName, TopologyName};
use crate::output::{write_summary, TraceWriter};
use crate::CliError;

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.toml";

/// RNG stream for the shared initial point; optimizer streams start at 0.
const INIT_STREAM: u64 = u64::MAX;

/// Everything a run needs, materialized from a config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub oracle: ProblemOracle,
    pub mixing: MixingMatrix,
    pub x0: Mat,
    pub truth: Option<GroundTruth>,
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self, CliError> {
        config.validate()?;
        let pr = &config.problem;
        let d = config.network.agents;
        let seed = config.seed;
        let (oracle, truth) = match pr.kind {
            ProblemName::Pca => {
                let (mut a, truth) = match &pr.data_file {
                    Some(f) => (load_matrix_file(f)?, None),
                    None => {
                        let data = gen_pca_data(pr.n, d * pr.l, pr.xi, seed)?;
                        let truth = GroundTruth::Subspace(data.top_subspace(pr.p));
                        (data.a, Some(truth))
                    }
                };
                check_rows(&a, pr.n)?;
                if pr.normalize_covariance {
                    a *= (a.ncols() as f64).sqrt();
                }
                (ProblemOracle::pca(local_shares(&a, d, pr.l)?, pr.p)?, truth)
            }
            ProblemName::Dpcp => {
                let (b, truth) = match &pr.data_file {
                    Some(f) => (load_matrix_file(f)?, None),
                    None => {
                        let data = gen_dpcp_data(pr.n, d, pr.l, pr.outlier_ratio, pr.noise_sigma, seed)?;
                        (data.samples, Some(GroundTruth::Normal(data.normal)))
                    }
                };
                check_rows(&b, pr.n)?;
                (ProblemOracle::dpcp(local_shares(&b, d, pr.l)?, pr.p)?, truth)
            }
            ProblemName::Quadratic => (
                ProblemOracle::quadratic(gen_quadratic_data(pr.n, pr.p, d, pr.l, seed))?,
                None,
            ),
        };
        let mixing = build_mixing(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INIT_STREAM);
        let x0 = random_orthonormal(pr.n, pr.p, &mut rng);
        Ok(Experiment {
            config: config.clone(),
            oracle,
            mixing,
            x0,
            truth,
        })
    }

    pub fn hyper_params(&self) -> HyperParams {
        let a = &self.config.algorithm;
        HyperParams {
            eta: a.eta,
            beta: a.beta,
            tau: self.config.tau(),
            q: self.config.q(),
            outer_iters: a.outer_iters,
            seed: self.config.seed,
            track_t: a.track_t,
            shared_batch: a.shared_batch,
            stop_tol: a.stop_tol,
        }
    }

    pub fn drsgd_params(&self) -> DrsgdParams {
        let a = &self.config.algorithm;
        DrsgdParams {
            eta0: a.eta0,
            tau: self.config.tau(),
            iterations: self.config.drsgd_iterations(),
            seed: self.config.seed,
            stop_tol: a.stop_tol,
        }
    }

    fn monitor(&self) -> Monitor<'_> {
        Monitor {
            cadence: self.config.metrics.cadence,
            truth: self.truth.as_ref(),
        }
    }

    /// Run in memory, returning every trace record and the run summary.
    pub fn run_collect(&self) -> Result<(Vec<TraceRecord>, RunSummary), CliError> {
        let mut rows = Vec::new();
        let summary = self.run_with_sink(&mut |r| rows.push(*r))?;
        Ok((rows, summary))
    }

    pub fn run_with_sink(&self, sink: &mut dyn FnMut(&TraceRecord)) -> Result<RunSummary, CliError> {
        match self.config.algorithm.name {
            AlgorithmName::Vrsgt => {
                let alg = Vrsgt::new(&self.oracle, &self.mixing, self.hyper_params())?;
                let mut state = alg.init(&self.x0)?;
                Ok(alg.run(&mut state, &self.monitor(), sink)?)
            }
            AlgorithmName::Drsgd => {
                let alg = Drsgd::new(&self.oracle, &self.mixing, self.drsgd_params())?;
                let mut state = alg.init(&self.x0)?;
                Ok(alg.run(&mut state, &self.monitor(), sink)?)
            }
        }
    }
}

fn check_rows(m: &Mat, n: usize) -> Result<(), CliError> {
    if m.nrows() != n {
        return Err(CliError::Data(format!(
            "data has {} rows but problem.n = {n}",
            m.nrows()
        )));
    }
    Ok(())
}

/// First `d * l` columns, split evenly across agents.
fn local_shares(data: &Mat, d: usize, l: usize) -> Result<Vec<vrsgt_core::LocalDataset>, CliError> {
    let needed = d * l;
    if data.ncols() < needed {
        return Err(CliError::Data(format!(
            "data has {} samples, need d * l = {needed}",
            data.ncols()
        )));
    }
    Ok(partition(&data.columns(0, needed).into_owned(), d)?)
}

fn build_mixing(config: &ExperimentConfig) -> Result<MixingMatrix, CliError> {
    let net = &config.network;
    let topology = match net.topology {
        _ if net.agents == 1 && net.topology != TopologyName::File => return Ok(MixingMatrix::trivial()),
        TopologyName::File => {
            let path = net.edge_file.as_ref().expect("validated");
            let t = Topology::read(path)?;
            if t.agents() != net.agents {
                return Err(CliError::Data(format!(
                    "edge file {} has {} agents, network.agents = {}",
                    path.display(),
                    t.agents(),
                    net.agents
                )));
            }
            t
        }
        kind => {
            let kind = match kind {
                TopologyName::Ring => TopologyKind::Ring,
                TopologyName::Star => TopologyKind::Star,
                TopologyName::Complete => TopologyKind::Complete,
                TopologyName::ErdosRenyi => TopologyKind::ErdosRenyi { prob: net.prob },
                TopologyName::File => unreachable!(),
            };
            build_topology(kind, net.agents, config.seed.wrapping_add(1))?
        }
    };
    Ok(metropolis_weights(&topology)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub algorithm: String,
    pub status: String,
    pub seed: u64,
    pub iterations: u64,
    pub rounds: u64,
    pub samples: u64,
    pub final_stagap: f64,
    pub grad_norm_sq: f64,
    pub consensus_err: f64,
    pub feasibility_sq: f64,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery: Option<f64>,
    /// Second-largest eigenvalue magnitude of the mixing matrix.
    pub lambda: f64,
}

impl Summary {
    fn from_run(exp: &Experiment, run: &RunSummary) -> Result<Self, CliError> {
        let last = run
            .last
            .ok_or_else(|| CliError::Data("run produced no measurements".into()))?;
        let status = match run.reason {
            StopReason::Converged => "converged",
            StopReason::Budget => "budget",
            StopReason::Paused => "paused",
        };
        let algorithm = match exp.config.algorithm.name {
            AlgorithmName::Vrsgt => "vrsgt",
            AlgorithmName::Drsgd => "drsgd",
        };
        Ok(Summary {
            algorithm: algorithm.into(),
            status: status.into(),
            seed: exp.config.seed,
            iterations: last.iteration,
            rounds: last.round,
            samples: last.samples,
            final_stagap: last.metrics.stagap,
            grad_norm_sq: last.metrics.grad_norm_sq,
            consensus_err: last.metrics.consensus_err,
            feasibility_sq: last.metrics.feasibility_sq,
            loss: last.metrics.loss,
            recovery: last.metrics.recovery,
            lambda: exp.mixing.lambda(),
        })
    }
}

/// Run-time knobs that do not change results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for per-agent computations; `None` uses all cores.
    pub threads: Option<usize>,
    /// Pause after this many iterations of this invocation.
    pub stop_after: Option<u64>,
    /// Where to write the state when the run pauses or ends.
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from a checkpoint, appending to the existing trace.
    pub resume: Option<PathBuf>,
}

/// Run `exp`, writing `trace.csv` and `summary.toml` under `out_dir`.
pub fn run_to_dir(exp: &Experiment, out_dir: &Path, opts: &RunOptions) -> Result<Summary, CliError> {
    match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?
            .install(|| run_to_dir_inner(exp, out_dir, opts)),
        None => run_to_dir_inner(exp, out_dir, opts),
    }
}

fn run_to_dir_inner(exp: &Experiment, out_dir: &Path, opts: &RunOptions) -> Result<Summary, CliError> {
    let stateful = opts.stop_after.is_some() || opts.checkpoint_dir.is_some() || opts.resume.is_some();
    if stateful && exp.config.algorithm.name != AlgorithmName::Vrsgt {
        return Err(CliError::Config("checkpointing is supported for vrsgt only".into()));
    }
    if opts.stop_after.is_some() && opts.checkpoint_dir.is_none() {
        return Err(CliError::Config("--stop-after requires --checkpoint-dir".into()));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let trace_path = out_dir.join(TRACE_FILE);
    let mut writer = match &opts.resume {
        Some(_) => TraceWriter::append(&trace_path)?,
        None => TraceWriter::create(&trace_path)?,
    };
    let mut sink = |r: &TraceRecord| writer.write(r);

    let run = if stateful {
        let alg = Vrsgt::new(&exp.oracle, &exp.mixing, exp.hyper_params())?;
        let mut state = match &opts.resume {
            Some(dir) => {
                let (state, seed) = checkpoint::load(dir)?;
                if seed != exp.config.seed
                    || state.agents() != exp.oracle.agents()
                    || state.x.block_shape() != exp.oracle.var_shape()
                {
                    return Err(CliError::Config(format!(
                        "checkpoint {} does not match the config (seed or dimensions)",
                        dir.display()
                    )));
                }
                state
            }
            None => alg.init(&exp.x0)?,
        };
        let run = alg.run_limited(&mut state, opts.stop_after, &exp.monitor(), &mut sink);
        if let (Ok(_), Some(dir)) = (&run, &opts.checkpoint_dir) {
            checkpoint::save(dir, &state, exp.config.seed)?;
        }
        run?
    } else {
        exp.run_with_sink(&mut sink)?
    };
    writer.finish()?;
    let summary = Summary::from_run(exp, &run)?;
    write_summary(&out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}
