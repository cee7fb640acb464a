//! Communication graphs, Metropolis mixing matrices and the synchronous
//! neighbor-averaging operator.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Mat, StackedVariable};

/// Resampling budget for connected Erdos-Renyi graphs.
pub const ER_MAX_ATTEMPTS: usize = 100;

const MIXING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TopologyKind {
    Ring,
    /// Agent 0 is the hub.
    Star,
    ErdosRenyi { prob: f64 },
    Complete,
    Custom,
}

/// Undirected connected graph on agents `0..d` (edges stored as `(i, j)`, `i < j`).
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    d: usize,
    edges: BTreeSet<(usize, usize)>,
    kind: TopologyKind,
}

impl Topology {
    /// Validates edges and connectivity.
    pub fn from_edges(d: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::with_kind(d, edges, TopologyKind::Custom)
    }

    fn with_kind(
        d: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        kind: TopologyKind,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "agent count must be positive"));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::invalid("edges", format!("self-loop at agent {a}")));
            }
            if a >= d || b >= d {
                return Err(Error::IndexOutOfRange {
                    what: "edge endpoint",
                    index: a.max(b),
                    bound: d,
                });
            }
            set.insert((a.min(b), a.max(b)));
        }
        let topo = Topology { d, edges: set, kind };
        if !topo.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(topo)
    }

    pub fn agents(&self) -> usize {
        self.d
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn kind(&self) -> &TopologyKind {
        &self.kind
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.d];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| match (a == i, b == i) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect()
    }

    fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.d];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.d];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// `d=<count>` header, then one 1-indexed `i j` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("d={}\n", self.d);
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "{} {}", a + 1, b + 1);
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut offset = 0u64;
        let mut d = None;
        let mut edges = Vec::new();
        for line in text.split_inclusive('\n') {
            let start = offset;
            offset += line.len() as u64;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |reason: String| Error::Parse { offset: start, reason };
            match d {
                None => {
                    let count = line
                        .strip_prefix("d=")
                        .and_then(|v| v.trim().parse::<usize>().ok())
                        .ok_or_else(|| parse_err("expected header `d=<count>`".into()))?;
                    d = Some(count);
                }
                Some(count) => {
                    let mut it = line.split_whitespace().map(str::parse::<usize>);
                    let (a, b) = match (it.next(), it.next(), it.next()) {
                        (Some(Ok(a)), Some(Ok(b)), None) => (a, b),
                        _ => return Err(parse_err(format!("bad edge line `{line}`"))),
                    };
                    if a == 0 || b == 0 || a > count || b > count {
                        return Err(parse_err(format!("endpoint out of 1..={count}")));
                    }
                    edges.push((a - 1, b - 1));
                }
            }
        }
        let d = d.ok_or(Error::Parse {
            offset: 0,
            reason: "missing `d=<count>` header".into(),
        })?;
        Self::from_edges(d, edges)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_edge_list(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }
}

/// Build a named topology. `seed` only matters for Erdos-Renyi graphs, which
/// are resampled with sub-seeds `seed, seed + 1, ...` until connected.
pub fn build_topology(kind: TopologyKind, d: usize, seed: u64) -> Result<Topology> {
    if d < 2 {
        return Err(Error::invalid("d", format!("need at least two agents, got {d}")));
    }
    match kind {
        TopologyKind::Ring => {
            let edges = (0..d).map(|i| (i, (i + 1) % d));
            Topology::with_kind(d, edges, TopologyKind::Ring)
        }
        TopologyKind::Star => Topology::with_kind(d, (1..d).map(|i| (0, i)), TopologyKind::Star),
        TopologyKind::Complete => {
            let edges = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j)));
            Topology::with_kind(d, edges, TopologyKind::Complete)
        }
        TopologyKind::ErdosRenyi { prob } => {
            if !(prob > 0.0 && prob <= 1.0) {
                return Err(Error::invalid("prob", format!("must lie in (0, 1], got {prob}")));
            }
            for attempt in 0..ER_MAX_ATTEMPTS {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
                let mut edges = Vec::new();
                for i in 0..d {
                    for j in i + 1..d {
                        if rng.random::<f64>() < prob {
                            edges.push((i, j));
                        }
                    }
                }
                match Topology::with_kind(d, edges, TopologyKind::ErdosRenyi { prob }) {
                    Ok(t) => return Ok(t),
                    Err(Error::Disconnected) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::RetryBudgetExhausted {
                attempts: ER_MAX_ATTEMPTS,
            })
        }
        TopologyKind::Custom => Err(Error::invalid(
            "kind",
            "custom topologies are built with Topology::from_edges",
        )),
    }
}

/// Symmetric, nonnegative, doubly stochastic `W` supported on a graph.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    w: Mat,
    lambda: f64,
}

impl MixingMatrix {
    /// Validates every invariant against `topology` and computes `lambda`.
    pub fn new(w: Mat, topology: &Topology) -> Result<Self> {
        let d = topology.agents();
        if w.shape() != (d, d) {
            return Err(Error::ShapeMismatch {
                context: "mixing matrix",
                expected: (d, d),
                got: w.shape(),
            });
        }
        for i in 0..d {
            for j in 0..d {
                if i != j && !topology.has_edge(i, j) && w[(i, j)] != 0.0 {
                    return Err(Error::MixingInvariant(format!(
                        "sparsity: W({i},{j}) = {} on a non-edge",
                        w[(i, j)]
                    )));
                }
            }
        }
        let lambda = second_eigenvalue(&w)?;
        Ok(MixingMatrix { w, lambda })
    }

    pub fn weights(&self) -> &Mat {
        &self.w
    }

    /// Second largest eigenvalue magnitude.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn agents(&self) -> usize {
        self.w.nrows()
    }

    /// `[1]`, for single-agent runs.
    pub fn trivial() -> Self {
        MixingMatrix {
            w: Mat::identity(1, 1),
            lambda: 0.0,
        }
    }
}

/// `W(i,j) = 1 / (1 + max(deg_i, deg_j))` on edges, diagonal fills rows to one.
pub fn metropolis_weights(topology: &Topology) -> Result<MixingMatrix> {
    let d = topology.agents();
    let deg = topology.degrees();
    let mut w = Mat::zeros(d, d);
    for &(a, b) in topology.edges() {
        let v = 1.0 / (1.0 + deg[a].max(deg[b]) as f64);
        w[(a, b)] = v;
        w[(b, a)] = v;
    }
    for i in 0..d {
        let off: f64 = (0..d).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::new(w, topology)
}

/// Check the mixing-matrix invariants and return `max(|lambda_2|, |lambda_d|)`.
pub fn second_eigenvalue(w: &Mat) -> Result<f64> {
    if !w.is_square() {
        return Err(Error::NotSquare {
            rows: w.nrows(),
            cols: w.ncols(),
        });
    }
    let d = w.nrows();
    for i in 0..d {
        let row: f64 = w.row(i).iter().sum();
        if (row - 1.0).abs() > MIXING_TOL {
            return Err(Error::MixingInvariant(format!("row {i} sums to {row}")));
        }
        for j in 0..d {
            if w[(i, j)] < 0.0 {
                return Err(Error::MixingInvariant(format!("negative entry W({i},{j})")));
            }
            if (w[(i, j)] - w[(j, i)]).abs() > MIXING_TOL {
                return Err(Error::MixingInvariant(format!("asymmetry at ({i},{j})")));
            }
        }
    }
    if d == 1 {
        return Ok(0.0);
    }
    let eig = SymmetricEigen::new(w.clone());
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let lambda = values[1].abs().max(values[d - 1].abs());
    if lambda >= 1.0 - MIXING_TOL {
        return Err(Error::MixingInvariant(format!(
            "spectral gap: lambda = {lambda} is not below 1"
        )));
    }
    Ok(lambda)
}

/// One synchronous round: block `i` of the result is `sum_r W(i,r) V_r`.
///
/// Only nonzero weights (self and graph neighbors) are read, summed in
/// increasing `r`, so the result does not depend on the thread count.
pub fn mix(w: &MixingMatrix, v: &StackedVariable) -> Result<StackedVariable> {
    let d = w.agents();
    if v.agents() != d {
        return Err(Error::ShapeMismatch {
            context: "mix: agent count",
            expected: (d, 1),
            got: (v.agents(), 1),
        });
    }
    let (n, p) = v.block_shape();
    let weights = &w.w;
    let blocks: Vec<Mat> = (0..d)
        .into_par_iter()
        .map(|i| {
            let mut acc = Mat::zeros(n, p);
            for r in 0..d {
                let wir = weights[(i, r)];
                if wir != 0.0 {
                    acc += v.block(r) * wir;
                }
            }
            acc
        })
        .collect();
    StackedVariable::new(blocks)
}

/// Communication accounting: one round is one broadcast of an `n x p`
/// block by every agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CommLedger {
    pub rounds: u64,
    bytes_per_round: u64,
}

impl CommLedger {
    pub fn new(d: usize, n: usize, p: usize) -> Self {
        CommLedger {
            rounds: 0,
            bytes_per_round: (d * n * p * 8) as u64,
        }
    }

    /// Two rounds: the `X` and `D` broadcasts of one tracking iteration.
    pub const ROUNDS_PER_TRACKING_ITER: u64 = 2;
    /// One round: the `X` broadcast of one DRSGD iteration.
    pub const ROUNDS_PER_DRSGD_ITER: u64 = 1;

    pub fn record(&mut self, rounds: u64) {
        self.rounds += rounds;
    }

    pub fn bytes(&self) -> u64 {
        self.rounds * self.bytes_per_round
    }

    pub(crate) fn with_rounds(mut self, rounds: u64) -> Self {
        self.rounds = rounds;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian;
    use approx::assert_abs_diff_eq;

    fn set(edges: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
        edges.iter().copied().collect()
    }

    #[test]
    fn topology_examples() {
        let ring = build_topology(TopologyKind::Ring, 3, 0).unwrap();
        assert_eq!(ring.edges(), &set(&[(0, 1), (1, 2), (0, 2)]));
        let star = build_topology(TopologyKind::Star, 4, 0).unwrap();
        assert_eq!(star.edges(), &set(&[(0, 1), (0, 2), (0, 3)]));
        let er = build_topology(TopologyKind::ErdosRenyi { prob: 1.0 }, 5, 9).unwrap();
        let full = build_topology(TopologyKind::Complete, 5, 0).unwrap();
        assert_eq!(er.edges(), full.edges());
        assert_eq!(full.edges().len(), 10);
    }

    #[test]
    fn topology_errors() {
        assert!(matches!(
            Topology::from_edges(4, [(0, 1), (2, 3)]),
            Err(Error::Disconnected)
        ));
        assert!(Topology::from_edges(3, [(1, 1)]).is_err());
        assert!(build_topology(TopologyKind::Ring, 1, 0).is_err());
        assert!(matches!(
            build_topology(TopologyKind::ErdosRenyi { prob: 1e-9 }, 30, 0),
            Err(Error::RetryBudgetExhausted { attempts: ER_MAX_ATTEMPTS })
        ));
    }

    #[test]
    fn erdos_renyi_is_deterministic() {
        let a = build_topology(TopologyKind::ErdosRenyi { prob: 0.5 }, 12, 42).unwrap();
        let b = build_topology(TopologyKind::ErdosRenyi { prob: 0.5 }, 12, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn edge_list_round_trip() {
        let t = build_topology(TopologyKind::ErdosRenyi { prob: 0.4 }, 9, 3).unwrap();
        let back = Topology::from_edge_list(&t.to_edge_list()).unwrap();
        assert_eq!(back.edges(), t.edges());
        assert_eq!(Topology::from_edge_list("d=2\n1 2\n").unwrap().edges(), &set(&[(0, 1)]));
        assert!(matches!(
            Topology::from_edge_list("d=3\n1 2\n2 x\n"),
            Err(Error::Parse { offset: 8, .. })
        ));
        assert!(Topology::from_edge_list("1 2\n").is_err());
        assert!(Topology::from_edge_list("d=3\n1 4\n").is_err());
    }

    #[test]
    fn metropolis_examples() {
        let k3 = metropolis_weights(&build_topology(TopologyKind::Ring, 3, 0).unwrap()).unwrap();
        assert_abs_diff_eq!(k3.weights(), &Mat::from_element(3, 3, 1.0 / 3.0), epsilon = 1e-15);
        assert!(k3.lambda() < 1e-12);

        let star = metropolis_weights(&build_topology(TopologyKind::Star, 3, 0).unwrap()).unwrap();
        let w = star.weights();
        assert_abs_diff_eq!(w[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(0, 2)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(1, 1)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(2, 2)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(w[(1, 2)], 0.0);

        let path = metropolis_weights(&Topology::from_edges(2, [(0, 1)]).unwrap()).unwrap();
        assert_abs_diff_eq!(path.weights(), &Mat::from_element(2, 2, 0.5), epsilon = 1e-15);
        assert!(path.lambda() < 1e-12);
    }

    #[test]
    fn ring4_lambda_matches_circulant_spectrum() {
        // degrees are all 2: W = circulant(1/3, 1/3, 0, 1/3), eigenvalues
        // 1/3 + (2/3) cos(2 pi k / 4) = {1, 1/3, -1/3, 1/3}
        let w = metropolis_weights(&build_topology(TopologyKind::Ring, 4, 0).unwrap()).unwrap();
        assert_abs_diff_eq!(w.lambda(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn invariant_violations_rejected() {
        let t = Topology::from_edges(2, [(0, 1)]).unwrap();
        let bad_rows = Mat::from_row_slice(2, 2, &[0.6, 0.5, 0.5, 0.5]);
        assert!(MixingMatrix::new(bad_rows, &t).is_err());
        let negative = Mat::from_row_slice(2, 2, &[1.5, -0.5, -0.5, 1.5]);
        assert!(MixingMatrix::new(negative, &t).is_err());
        let identity = Mat::identity(2, 2);
        assert!(matches!(MixingMatrix::new(identity, &t), Err(Error::MixingInvariant(_))));
        let path3 = Topology::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let off_graph = Mat::from_element(3, 3, 1.0 / 3.0);
        assert!(MixingMatrix::new(off_graph, &path3).is_err());
    }

    #[test]
    fn mix_examples() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k3 = metropolis_weights(&build_topology(TopologyKind::Ring, 3, 0).unwrap()).unwrap();
        let blocks: Vec<Mat> = (0..3).map(|_| gaussian(4, 2, &mut rng)).collect();
        let v = StackedVariable::new(blocks.clone()).unwrap();
        let avg = (&blocks[0] + &blocks[1] + &blocks[2]) / 3.0;
        let out = mix(&k3, &v).unwrap();
        for b in out.blocks() {
            assert_abs_diff_eq!(b, &avg, epsilon = 1e-14);
        }

        let ring = metropolis_weights(&build_topology(TopologyKind::Ring, 6, 0).unwrap()).unwrap();
        let c = StackedVariable::replicate(&blocks[0], 6);
        assert_abs_diff_eq!(mix(&ring, &c).unwrap().to_stacked(), c.to_stacked(), epsilon = 1e-15);

        let v6 = StackedVariable::new((0..6).map(|_| gaussian(4, 2, &mut rng)).collect()).unwrap();
        assert_abs_diff_eq!(mix(&ring, &v6).unwrap().mean(), v6.mean(), epsilon = 1e-12);
        assert!(mix(&ring, &v).is_err());
    }

    #[test]
    fn mix_is_local() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let topo = build_topology(TopologyKind::Ring, 6, 0).unwrap();
        let w = metropolis_weights(&topo).unwrap();
        let base = StackedVariable::new((0..6).map(|_| gaussian(3, 1, &mut rng)).collect()).unwrap();
        // perturbing agent 3 leaves non-neighbors of 3 untouched
        let mut bumped = base.clone();
        *bumped.block_mut(3) += Mat::from_element(3, 1, 1.0);
        let (a, b) = (mix(&w, &base).unwrap(), mix(&w, &bumped).unwrap());
        for i in 0..6 {
            let affected = i == 3 || topo.has_edge(i, 3);
            assert_eq!(a.block(i) != b.block(i), affected, "agent {i}");
        }
    }

    #[test]
    fn comm_ledger_counts() {
        let mut ledger = CommLedger::new(4, 10, 3);
        assert_eq!(ledger.bytes(), 0);
        for _ in 0..5 {
            ledger.record(CommLedger::ROUNDS_PER_TRACKING_ITER);
        }
        assert_eq!(ledger.rounds, 10);
        assert_eq!(ledger.bytes(), 10 * 4 * 10 * 3 * 8);
        let mut drsgd = CommLedger::new(4, 10, 3);
        for _ in 0..5 {
            drsgd.record(CommLedger::ROUNDS_PER_DRSGD_ITER);
        }
        assert_eq!(drsgd.rounds, 5);
    }
}
