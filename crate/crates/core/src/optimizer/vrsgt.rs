use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{agent_rngs, draw_batch, stream_rng, HyperParams, Monitor, RunSummary, StopReason, TraceRecord};
use crate::directions::{g_unchecked, h_unchecked, REGION_RADIUS};
use crate::error::{Error, Result};
use crate::linalg::{orth_violation, Mat, StackedVariable};
use crate::metrics::measure;
use crate::network::{mix, CommLedger, MixingMatrix};
use crate::problems::ProblemOracle;

/// Iterate, direction estimates and bookkeeping of a [`Vrsgt`] run.
///
/// `(k, t)` follow the outer/inner labels of the method: after the outer
/// step of epoch `k` the state is at `(k, 1)`, each inner step advances `t`,
/// and once `t` reaches `q + 1` the epoch closes and `t` is reset to `0`.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub x: StackedVariable,
    /// Local direction estimates.
    pub s: StackedVariable,
    /// Tracked network-average directions.
    pub d: StackedVariable,
    /// Auxiliary `G`-only sequence; satisfies `S_i = T_i + beta E(X_i)`.
    pub t_aux: Option<StackedVariable>,
    pub k: usize,
    pub t: usize,
    pub iterations: u64,
    pub comm: CommLedger,
    /// Per-sample gradient evaluations since initialization.
    pub samples: u64,
    pub(crate) rngs: Vec<ChaCha8Rng>,
    pub(crate) shared_rng: ChaCha8Rng,
}

impl OptimizerState {
    pub fn agents(&self) -> usize {
        self.x.agents()
    }

    pub fn rounds(&self) -> u64 {
        self.comm.rounds
    }
}

/// Variance-reduced stochastic gradient tracking.
#[derive(Debug, Clone)]
pub struct Vrsgt<'a> {
    oracle: &'a ProblemOracle,
    mixing: &'a MixingMatrix,
    params: HyperParams,
}

impl<'a> Vrsgt<'a> {
    pub fn new(oracle: &'a ProblemOracle, mixing: &'a MixingMatrix, params: HyperParams) -> Result<Self> {
        params.validate(oracle.samples_per_agent())?;
        if mixing.agents() != oracle.agents() {
            return Err(Error::ShapeMismatch {
                context: "mixing matrix vs. agent count",
                expected: (oracle.agents(), oracle.agents()),
                got: (mixing.agents(), mixing.agents()),
            });
        }
        Ok(Vrsgt {
            oracle,
            mixing,
            params,
        })
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    pub fn oracle(&self) -> &ProblemOracle {
        self.oracle
    }

    /// Every agent starts from `x_init`; `S = D = H(X)` with full local batches.
    pub fn init(&self, x_init: &Mat) -> Result<OptimizerState> {
        let (n, p) = self.oracle.var_shape();
        if x_init.shape() != (n, p) {
            return Err(Error::ShapeMismatch {
                context: "initial point",
                expected: (n, p),
                got: x_init.shape(),
            });
        }
        let violation = orth_violation(x_init);
        if !(violation <= REGION_RADIUS) {
            return Err(Error::OutsideRegion { violation });
        }
        let d = self.oracle.agents();
        let x = StackedVariable::replicate(x_init, d);
        let (s, t_aux) = self.full_directions(&x);
        let state = OptimizerState {
            d: s.clone(),
            s,
            t_aux,
            x,
            k: 0,
            t: 0,
            iterations: 0,
            comm: CommLedger::new(d, n, p),
            samples: 0,
            rngs: agent_rngs(self.params.seed, d),
            shared_rng: stream_rng(self.params.seed, 0),
        };
        self.check_finite(&state)?;
        Ok(state)
    }

    /// `H_i(X_i)` for every agent, plus `G_i(X_i)` when tracking `T`.
    fn full_directions(&self, x: &StackedVariable) -> (StackedVariable, Option<StackedVariable>) {
        let beta = self.params.beta;
        let track = self.params.track_t;
        let pairs: Vec<(Mat, Option<Mat>)> = (0..x.agents())
            .into_par_iter()
            .map(|i| {
                let xi = x.block(i);
                let grad = self.oracle.batch_gradient_unchecked(i, None, xi);
                let g = g_unchecked(xi, &grad);
                let h = &g + crate::directions::e_term(xi) * beta;
                (h, track.then_some(g))
            })
            .collect();
        split_pairs(pairs)
    }

    /// `X <- W (X - eta D)`.
    fn descend_and_mix(&self, state: &OptimizerState) -> Result<StackedVariable> {
        mix(self.mixing, &state.x.axpy(-self.params.eta, &state.d))
    }

    /// `D <- W D + S_new - S_old`.
    fn track(&self, state: &OptimizerState, s_new: &StackedVariable) -> Result<StackedVariable> {
        let wd = mix(self.mixing, &state.d)?;
        let blocks = (0..wd.agents())
            .map(|i| wd.block(i) + s_new.block(i) - state.s.block(i))
            .collect();
        StackedVariable::new(blocks)
    }

    /// Outer iteration: descend, refresh `S` with full local batches, track.
    pub fn outer_step(&self, state: &mut OptimizerState) -> Result<()> {
        if state.t != 0 {
            return Err(Error::invalid(
                "state",
                format!("outer step requested at inner index t={}", state.t),
            ));
        }
        let x_new = self.descend_and_mix(state)?;
        let (s_new, t_new) = self.full_directions(&x_new);
        let d_new = self.track(state, &s_new)?;
        state.x = x_new;
        state.s = s_new;
        state.d = d_new;
        state.t_aux = t_new;
        state.k += 1;
        state.t = 1;
        state.iterations += 1;
        state.comm.record(CommLedger::ROUNDS_PER_TRACKING_ITER);
        state.samples += (self.oracle.agents() * self.oracle.samples_per_agent()) as u64;
        self.check_finite(state)
    }

    /// Inner iteration with freshly drawn batches.
    pub fn inner_step(&self, state: &mut OptimizerState) -> Result<()> {
        let l = self.oracle.samples_per_agent();
        let tau = self.params.tau;
        let batches: Vec<Vec<usize>> = if self.params.shared_batch {
            let b = draw_batch(&mut state.shared_rng, l, tau);
            vec![b; state.agents()]
        } else {
            state.rngs.iter_mut().map(|r| draw_batch(r, l, tau)).collect()
        };
        self.inner_step_with_batches(state, &batches)
    }

    /// Inner iteration with caller-supplied per-agent batches.
    pub fn inner_step_with_batches(&self, state: &mut OptimizerState, batches: &[Vec<usize>]) -> Result<()> {
        let q = self.params.q;
        if state.t == 0 || state.t > q {
            return Err(Error::invalid(
                "state",
                format!("inner step requested at t={} (need 1..={q})", state.t),
            ));
        }
        let d = state.agents();
        let l = self.oracle.samples_per_agent();
        if batches.len() != d {
            return Err(Error::invalid("batches", format!("need {d} batches, got {}", batches.len())));
        }
        for b in batches {
            if b.is_empty() {
                return Err(Error::invalid("batches", "empty batch"));
            }
            if let Some(&j) = b.iter().find(|&&j| j >= l) {
                return Err(Error::IndexOutOfRange {
                    what: "sample",
                    index: j,
                    bound: l,
                });
            }
        }

        let x_new = self.descend_and_mix(state)?;
        let beta = self.params.beta;
        let track = self.params.track_t;
        let updates: Vec<(Mat, Option<Mat>)> = (0..d)
            .into_par_iter()
            .map(|i| {
                let (xo, xn) = (state.x.block(i), x_new.block(i));
                let g_old = self.oracle.batch_gradient_unchecked(i, Some(&batches[i]), xo);
                let g_new = self.oracle.batch_gradient_unchecked(i, Some(&batches[i]), xn);
                let delta = h_unchecked(xn, &g_new, beta) - h_unchecked(xo, &g_old, beta);
                let s = state.s.block(i) + delta;
                let t = track.then(|| {
                    let t_old = state.t_aux.as_ref().expect("tracked state carries T").block(i);
                    t_old + g_unchecked(xn, &g_new) - g_unchecked(xo, &g_old)
                });
                (s, t)
            })
            .collect();
        let (s_new, t_new) = split_pairs(updates);
        let d_new = self.track(state, &s_new)?;

        state.x = x_new;
        state.s = s_new;
        state.d = d_new;
        state.t_aux = t_new;
        state.iterations += 1;
        state.comm.record(CommLedger::ROUNDS_PER_TRACKING_ITER);
        state.samples += batches.iter().map(|b| b.len() as u64).sum::<u64>();
        state.t += 1;
        let result = self.check_finite(state);
        if state.t == q + 1 {
            state.t = 0;
        }
        result
    }

    /// The next iteration in the outer/inner schedule.
    pub fn step(&self, state: &mut OptimizerState) -> Result<()> {
        if state.t == 0 {
            self.outer_step(state)
        } else {
            self.inner_step(state)
        }
    }

    fn check_finite(&self, state: &OptimizerState) -> Result<()> {
        for v in [&state.x, &state.s, &state.d] {
            if let Some(agent) = v.first_non_finite() {
                return Err(Error::Divergence {
                    k: state.k,
                    t: state.t,
                    agent,
                });
            }
        }
        Ok(())
    }

    fn finished(&self, state: &OptimizerState) -> bool {
        state.t == 0 && state.k >= self.params.outer_iters
    }

    fn record(&self, state: &OptimizerState, monitor: &Monitor<'_>) -> Result<TraceRecord> {
        let metrics = measure(self.oracle, &state.x, monitor.truth)?;
        // label the closing inner iterate (k, q + 1) rather than (k, 0)
        let t = if state.t == 0 && state.k > 0 { self.params.q + 1 } else { state.t };
        Ok(TraceRecord {
            k: state.k,
            t,
            iteration: state.iterations,
            round: state.comm.rounds,
            samples: state.samples,
            metrics,
        })
    }

    /// Run until the outer budget is spent or the stationarity gap drops to
    /// `stop_tol`. A fresh state also emits a record for the initial point.
    pub fn run(
        &self,
        state: &mut OptimizerState,
        monitor: &Monitor<'_>,
        sink: &mut dyn FnMut(&TraceRecord),
    ) -> Result<RunSummary> {
        self.run_limited(state, None, monitor, sink)
    }

    /// Like [`run`](Self::run), pausing after `max_iterations` iterations.
    pub fn run_limited(
        &self,
        state: &mut OptimizerState,
        max_iterations: Option<u64>,
        monitor: &Monitor<'_>,
        sink: &mut dyn FnMut(&TraceRecord),
    ) -> Result<RunSummary> {
        let cadence = monitor.cadence.max(1);
        let mut best = f64::INFINITY;
        let mut last = None;
        if state.iterations == 0 {
            let rec = self.record(state, monitor)?;
            sink(&rec);
            best = rec.metrics.stagap;
            last = Some(rec);
        }
        let mut done = 0u64;
        loop {
            if self.finished(state) {
                return Ok(RunSummary {
                    reason: StopReason::Budget,
                    iterations: state.iterations,
                    last,
                    best_stagap: best,
                });
            }
            if max_iterations.is_some_and(|m| done >= m) {
                return Ok(RunSummary {
                    reason: StopReason::Paused,
                    iterations: state.iterations,
                    last,
                    best_stagap: best,
                });
            }
            self.step(state)?;
            done += 1;
            if state.iterations.is_multiple_of(cadence) || self.finished(state) {
                let rec = self.record(state, monitor)?;
                if !rec.metrics.stagap.is_finite() {
                    return Err(Error::Divergence {
                        k: state.k,
                        t: rec.t,
                        agent: 0,
                    });
                }
                sink(&rec);
                best = best.min(rec.metrics.stagap);
                last = Some(rec);
                if rec.metrics.stagap <= self.params.stop_tol {
                    return Ok(RunSummary {
                        reason: StopReason::Converged,
                        iterations: state.iterations,
                        last,
                        best_stagap: best,
                    });
                }
            }
        }
    }
}

fn split_pairs(pairs: Vec<(Mat, Option<Mat>)>) -> (StackedVariable, Option<StackedVariable>) {
    let tracked = pairs.first().is_some_and(|(_, t)| t.is_some());
    let (h, t): (Vec<Mat>, Vec<Option<Mat>>) = pairs.into_iter().unzip();
    let h = StackedVariable::new(h).expect("blocks share the variable shape");
    let t = tracked.then(|| {
        StackedVariable::new(t.into_iter().map(|m| m.expect("tracked everywhere")).collect())
            .expect("blocks share the variable shape")
    });
    (h, t)
}
