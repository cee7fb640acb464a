//! Decentralized solvers over a simulated bulk-synchronous network.
//!
//! [`Vrsgt`] is the variance-reduced gradient tracking method: every outer
//! iteration refreshes each agent's direction estimate `S_i` with a full
//! local batch, then `q` inner iterations correct it with SVRG-style
//! mini-batch differences, while `D_i` tracks the network average of `S`.
//! [`Drsgd`] is a retraction-based stochastic baseline with diminishing
//! stepsizes.

pub mod checkpoint;
mod drsgd;
mod vrsgt;

pub use drsgd::{Drsgd, DrsgdParams, DrsgdState};
pub use vrsgt::{OptimizerState, Vrsgt};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{GroundTruth, MetricsRow};

/// Default early-stopping threshold on the stationarity gap.
pub const DEFAULT_STOP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub eta: f64,
    pub beta: f64,
    /// Mini-batch size of the inner iterations, `1 <= tau <= l`.
    pub tau: usize,
    /// Inner iterations per outer iteration.
    pub q: usize,
    /// Outer iteration budget `K`.
    pub outer_iters: usize,
    pub seed: u64,
    /// Maintain the auxiliary sequence `T` (the `G`-only analogue of `S`).
    pub track_t: bool,
    /// Draw one batch per inner iteration shared by all agents instead of
    /// one independent batch per agent.
    pub shared_batch: bool,
    pub stop_tol: f64,
}

impl HyperParams {
    /// Defaults for `l` samples per agent: `tau = q = round(sqrt(l))`, `beta = 1`.
    pub fn for_samples(l: usize, eta: f64) -> Self {
        let root = ((l as f64).sqrt().round() as usize).clamp(1, l.max(1));
        HyperParams {
            eta,
            beta: 1.0,
            tau: root,
            q: root,
            outer_iters: 100,
            seed: 0,
            track_t: false,
            shared_batch: false,
            stop_tol: DEFAULT_STOP_TOL,
        }
    }

    pub fn validate(&self, l: usize) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", format!("must be positive, got {}", self.eta)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if self.tau == 0 || self.tau > l {
            return Err(Error::invalid("tau", format!("must lie in [1, {l}], got {}", self.tau)));
        }
        if self.q == 0 {
            return Err(Error::invalid("q", "must be at least 1"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::invalid("stop_tol", "must be nonnegative"));
        }
        Ok(())
    }
}

/// One row of a run trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub t: usize,
    /// Iterations executed so far (inner and outer).
    pub iteration: u64,
    /// Cumulative communication rounds.
    pub round: u64,
    /// Cumulative per-sample gradient evaluations.
    pub samples: u64,
    pub metrics: MetricsRow,
}

/// What a run measures and how often.
#[derive(Debug, Clone, Copy)]
pub struct Monitor<'a> {
    /// Measure every `cadence` iterations; the final iterate is always measured.
    pub cadence: u64,
    pub truth: Option<&'a GroundTruth>,
}

impl Default for Monitor<'_> {
    fn default() -> Self {
        Monitor {
            cadence: 1,
            truth: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Stationarity gap fell below the stopping tolerance.
    Converged,
    /// Iteration budget exhausted.
    Budget,
    /// Paused by the caller's iteration limit; the state can be resumed.
    Paused,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub reason: StopReason,
    pub iterations: u64,
    pub last: Option<TraceRecord>,
    pub best_stagap: f64,
}

fn agent_rngs(seed: u64, d: usize) -> Vec<ChaCha8Rng> {
    (0..d).map(|i| stream_rng(seed, i as u64 + 1)).collect()
}

/// Stream 0 is the shared stream; agent `i` uses stream `i + 1`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_batch(rng: &mut ChaCha8Rng, l: usize, tau: usize) -> Vec<usize> {
    use rand::Rng;
    (0..tau).map(|_| rng.random_range(0..l)).collect()
}
