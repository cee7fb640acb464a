//! Decentralized optimization under orthogonality constraints.
//!
//! `d` agents on a connected graph jointly minimize
//! `f(X) = (1/d) sum_i f_i(X)` subject to `X^T X = I_p`, each holding a
//! private finite sum `f_i`. The solver ([`optimizer::Vrsgt`]) never
//! retracts onto the manifold: it descends along a penalty-corrected
//! direction `H = G + beta E` (see [`directions`]), reduces sampling noise
//! with SVRG-style corrections, and tracks the network-average direction
//! with two neighbor exchanges per iteration.
//!
//! Module map:
//!
//! * [`linalg`]: matrix aliases, stacked per-agent variables, small kernels.
//! * [`problems`]: PCA / DPCP / quadratic oracles, generators, matrix files.
//! * [`directions`]: `E`, `G`, `H` and exact surrogate oracles.
//! * [`network`]: topologies, Metropolis weights, mixing.
//! * [`optimizer`]: the tracking method, a retraction baseline, checkpoints.
//! * [`metrics`]: stationarity gap and recovery errors.

// `!(x > tol)` is used throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod directions;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod optimizer;
pub mod problems;

pub use error::{Error, Result};
pub use linalg::{Mat, StackedVariable};
pub use metrics::{GroundTruth, MetricsRow};
pub use network::{MixingMatrix, Topology, TopologyKind};
pub use optimizer::{HyperParams, Monitor, OptimizerState, TraceRecord, Vrsgt};
pub use problems::{LocalDataset, ProblemKind, ProblemOracle};
