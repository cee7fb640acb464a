//! Experiment configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; data, topology, initial point and sampling derive from it.
    pub seed: u64,
    pub problem: ProblemConfig,
    pub network: NetworkConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemName {
    Pca,
    Dpcp,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemName,
    pub n: usize,
    pub p: usize,
    /// Samples per agent.
    pub l: usize,
    /// PCA spectrum decay: singular values `xi^(i/2)`.
    #[serde(default = "default_xi")]
    pub xi: f64,
    /// Scale PCA samples by `sqrt(m)` so the sample covariance has
    /// eigenvalues `xi^i` instead of `xi^i / m`.
    #[serde(default = "default_true")]
    pub normalize_covariance: bool,
    /// Load samples (n x m, `.vrmx` or `.csv`) instead of generating them.
    pub data_file: Option<PathBuf>,
    #[serde(default)]
    pub outlier_ratio: f64,
    #[serde(default)]
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyName {
    Ring,
    Star,
    ErdosRenyi,
    Complete,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub topology: TopologyName,
    pub agents: usize,
    #[serde(default = "default_prob")]
    pub prob: f64,
    pub edge_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    Vrsgt,
    Drsgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: AlgorithmName,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Defaults to `round(sqrt(l))`.
    pub tau: Option<usize>,
    /// Defaults to `round(sqrt(l))`.
    pub q: Option<usize>,
    #[serde(default = "default_outer")]
    pub outer_iters: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default)]
    pub track_t: bool,
    #[serde(default)]
    pub shared_batch: bool,
    /// Baseline initial stepsize.
    #[serde(default = "default_eta")]
    pub eta0: f64,
    /// Baseline iterations; defaults to the round budget of the tracking
    /// method, `2 * outer_iters * (q + 1)`.
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_cadence")]
    pub cadence: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            cadence: default_cadence(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
        }
    }
}

fn default_xi() -> f64 {
    0.9
}
fn default_true() -> bool {
    true
}
fn default_prob() -> f64 {
    0.5
}
fn default_eta() -> f64 {
    0.01
}
fn default_beta() -> f64 {
    1.0
}
fn default_outer() -> usize {
    100
}
fn default_stop_tol() -> f64 {
    vrsgt_core::optimizer::DEFAULT_STOP_TOL
}
fn default_cadence() -> u64 {
    1
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parse and validate; relative file paths are resolved against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(base) = base {
            for path in [&mut cfg.problem.data_file, &mut cfg.network.edge_file]
                .into_iter()
                .flatten()
            {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn tau(&self) -> usize {
        self.algorithm.tau.unwrap_or_else(|| sqrt_default(self.problem.l))
    }

    pub fn q(&self) -> usize {
        self.algorithm.q.unwrap_or_else(|| sqrt_default(self.problem.l))
    }

    pub fn drsgd_iterations(&self) -> usize {
        self.algorithm
            .iterations
            .unwrap_or(2 * self.algorithm.outer_iters * (self.q() + 1))
    }

    /// Dimension and file checks performed before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let pr = &self.problem;
        if pr.n == 0 || pr.p == 0 || pr.p > pr.n {
            return bad(format!("need 1 <= p <= n, got n={}, p={}", pr.n, pr.p));
        }
        if pr.l == 0 {
            return bad("l must be positive".into());
        }
        if self.network.agents == 0 {
            return bad("network.agents must be positive".into());
        }
        if pr.kind == ProblemName::Pca && pr.data_file.is_none() && pr.n > pr.l * self.network.agents {
            return bad(format!(
                "PCA generator needs n <= d*l, got n={}, d*l={}",
                pr.n,
                pr.l * self.network.agents
            ));
        }
        if pr.kind == ProblemName::Quadratic && pr.data_file.is_some() {
            return bad("quadratic problems are generated only; remove data_file".into());
        }
        if !(0.0..=1.0).contains(&pr.outlier_ratio) {
            return bad(format!("outlier_ratio must lie in [0, 1], got {}", pr.outlier_ratio));
        }
        for (name, file) in [("data_file", &pr.data_file), ("edge_file", &self.network.edge_file)] {
            if let Some(f) = file {
                if !f.exists() {
                    return bad(format!("{name} {} does not exist", f.display()));
                }
            }
        }
        if self.network.topology == TopologyName::File && self.network.edge_file.is_none() {
            return bad("topology = \"file\" requires network.edge_file".into());
        }
        let tau = self.tau();
        if tau == 0 || tau > pr.l {
            return bad(format!("tau must lie in [1, {}], got {tau}", pr.l));
        }
        if self.q() == 0 {
            return bad("q must be at least 1".into());
        }
        if self.metrics.cadence == 0 {
            return bad("metrics.cadence must be at least 1".into());
        }
        Ok(())
    }
}

fn sqrt_default(l: usize) -> usize {
    ((l as f64).sqrt().round() as usize).clamp(1, l.max(1))
}
