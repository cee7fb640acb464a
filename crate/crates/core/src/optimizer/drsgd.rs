use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{agent_rngs, draw_batch, Monitor, RunSummary, StopReason, TraceRecord};
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, sym_unchecked, Mat, StackedVariable};
use crate::metrics::measure;
use crate::network::{mix, CommLedger, MixingMatrix};
use crate::problems::ProblemOracle;

/// Baseline: neighbor averaging plus a stochastic Riemannian gradient step,
/// retracted back to the manifold by QR, with stepsize `eta0 / sqrt(k + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrsgdParams {
    pub eta0: f64,
    pub tau: usize,
    pub iterations: usize,
    pub seed: u64,
    pub stop_tol: f64,
}

#[derive(Debug, Clone)]
pub struct DrsgdState {
    pub x: StackedVariable,
    pub k: usize,
    pub comm: CommLedger,
    pub samples: u64,
    rngs: Vec<ChaCha8Rng>,
}

#[derive(Debug, Clone)]
pub struct Drsgd<'a> {
    oracle: &'a ProblemOracle,
    mixing: &'a MixingMatrix,
    params: DrsgdParams,
}

impl<'a> Drsgd<'a> {
    pub fn new(oracle: &'a ProblemOracle, mixing: &'a MixingMatrix, params: DrsgdParams) -> Result<Self> {
        let l = oracle.samples_per_agent();
        if !(params.eta0 >= 0.0 && params.eta0.is_finite()) {
            return Err(Error::invalid("eta0", "must be finite and nonnegative"));
        }
        if params.tau == 0 || params.tau > l {
            return Err(Error::invalid("tau", format!("must lie in [1, {l}]")));
        }
        if mixing.agents() != oracle.agents() {
            return Err(Error::ShapeMismatch {
                context: "mixing matrix vs. agent count",
                expected: (oracle.agents(), oracle.agents()),
                got: (mixing.agents(), mixing.agents()),
            });
        }
        Ok(Drsgd {
            oracle,
            mixing,
            params,
        })
    }

    pub fn params(&self) -> &DrsgdParams {
        &self.params
    }

    pub fn init(&self, x_init: &Mat) -> Result<DrsgdState> {
        self.init_stacked(StackedVariable::replicate(x_init, self.oracle.agents()))
    }

    /// Start from per-agent points, each retracted onto the manifold.
    pub fn init_stacked(&self, x: StackedVariable) -> Result<DrsgdState> {
        let (n, p) = self.oracle.var_shape();
        if x.agents() != self.oracle.agents() || x.block_shape() != (n, p) {
            return Err(Error::ShapeMismatch {
                context: "initial point",
                expected: (n, p),
                got: x.block_shape(),
            });
        }
        let blocks = x.blocks().iter().map(orthonormalize).collect::<Result<Vec<_>>>()?;
        Ok(DrsgdState {
            x: StackedVariable::new(blocks)?,
            k: 0,
            comm: CommLedger::new(self.oracle.agents(), n, p),
            samples: 0,
            rngs: agent_rngs(self.params.seed, self.oracle.agents()),
        })
    }

    pub fn stepsize(&self, k: usize) -> f64 {
        self.params.eta0 / ((k + 1) as f64).sqrt()
    }

    pub fn step(&self, state: &mut DrsgdState) -> Result<()> {
        let l = self.oracle.samples_per_agent();
        let tau = self.params.tau;
        let eta = self.stepsize(state.k);
        let mixed = mix(self.mixing, &state.x)?;
        let batches: Vec<Vec<usize>> = state.rngs.iter_mut().map(|r| draw_batch(r, l, tau)).collect();
        let k = state.k;
        let blocks: Vec<Result<Mat>> = (0..state.x.agents())
            .into_par_iter()
            .map(|i| {
                let xi = state.x.block(i);
                let g = self.oracle.batch_gradient_unchecked(i, Some(&batches[i]), xi);
                let rgrad = &g - xi * sym_unchecked(&xi.tr_mul(&g));
                orthonormalize(&(mixed.block(i) - rgrad * eta))
                    .map_err(|_| Error::Divergence { k, t: 0, agent: i })
            })
            .collect();
        state.x = StackedVariable::new(blocks.into_iter().collect::<Result<Vec<_>>>()?)?;
        state.k += 1;
        state.comm.record(CommLedger::ROUNDS_PER_DRSGD_ITER);
        state.samples += (batches.len() * tau) as u64;
        Ok(())
    }

    pub fn run(
        &self,
        state: &mut DrsgdState,
        monitor: &Monitor<'_>,
        sink: &mut dyn FnMut(&TraceRecord),
    ) -> Result<RunSummary> {
        let cadence = monitor.cadence.max(1);
        let record = |state: &DrsgdState| -> Result<TraceRecord> {
            Ok(TraceRecord {
                k: state.k,
                t: 0,
                iteration: state.k as u64,
                round: state.comm.rounds,
                samples: state.samples,
                metrics: measure(self.oracle, &state.x, monitor.truth)?,
            })
        };
        let mut last = None;
        let mut best = f64::INFINITY;
        if state.k == 0 {
            let rec = record(state)?;
            sink(&rec);
            best = rec.metrics.stagap;
            last = Some(rec);
        }
        while state.k < self.params.iterations {
            self.step(state)?;
            if (state.k as u64).is_multiple_of(cadence) || state.k == self.params.iterations {
                let rec = record(state)?;
                sink(&rec);
                best = best.min(rec.metrics.stagap);
                last = Some(rec);
                if rec.metrics.stagap <= self.params.stop_tol {
                    return Ok(RunSummary {
                        reason: StopReason::Converged,
                        iterations: state.k as u64,
                        last,
                        best_stagap: best,
                    });
                }
            }
        }
        Ok(RunSummary {
            reason: StopReason::Budget,
            iterations: state.k as u64,
            last,
            best_stagap: best,
        })
    }
}
