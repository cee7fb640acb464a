//! Finite-sum objectives: every agent `i` owns `l` samples and
//! `f_i(X) = (1/l) sum_j f_i^[j](X)`.
//!
//! Three sample losses are supported:
//!
//! * PCA: `f^[j](X) = -1/2 ||a^T X||^2`, gradient `-a (a^T X)`.
//! * DPCP: `f^[j](X) = -1/3 sum_k |y_k|^3` with `y = X^T b`, gradient
//!   `-b (sign(y) * y^2)^T`. Samples are normalized to unit length.
//! * Quadratic: `f^[j](X) = 1/2 ||X - C_j||_F^2`, a smooth sanity problem.

mod generate;
pub mod io;

pub use generate::{gen_dpcp_data, gen_pca_data, gen_quadratic_data, partition, DpcpData, PcaData};

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Pca,
    Dpcp,
    Quadratic,
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProblemKind::Pca => "pca",
            ProblemKind::Dpcp => "dpcp",
            ProblemKind::Quadratic => "quadratic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum LocalData {
    /// `n x l`, one sample per column.
    Vectors(Mat),
    /// One `n x p` target per sample.
    Targets(Vec<Mat>),
}

/// The samples held by one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    pub agent_id: usize,
    data: LocalData,
}

impl LocalDataset {
    /// Samples are the columns of `samples`.
    pub fn from_columns(agent_id: usize, samples: Mat) -> Self {
        LocalDataset {
            agent_id,
            data: LocalData::Vectors(samples),
        }
    }

    pub fn from_targets(agent_id: usize, targets: Vec<Mat>) -> Self {
        LocalDataset {
            agent_id,
            data: LocalData::Targets(targets),
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            LocalData::Vectors(a) => a.ncols(),
            LocalData::Targets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `n x l` sample matrix, for vector-valued datasets.
    pub fn columns(&self) -> Option<&Mat> {
        match &self.data {
            LocalData::Vectors(a) => Some(a),
            LocalData::Targets(_) => None,
        }
    }
}

/// Per-sample loss and Euclidean gradient access for `d` agents.
#[derive(Debug, Clone)]
pub struct ProblemOracle {
    kind: ProblemKind,
    datasets: Vec<LocalDataset>,
    n: usize,
    p: usize,
    l: usize,
}

impl ProblemOracle {
    pub fn pca(datasets: Vec<LocalDataset>, p: usize) -> Result<Self> {
        Self::from_vectors(ProblemKind::Pca, datasets, p)
    }

    /// Each sample is rescaled to unit `l2` norm.
    pub fn dpcp(mut datasets: Vec<LocalDataset>, p: usize) -> Result<Self> {
        for ds in &mut datasets {
            if let LocalData::Vectors(a) = &mut ds.data {
                for (j, mut col) in a.column_iter_mut().enumerate() {
                    let norm = col.norm();
                    if !(norm > 0.0) {
                        return Err(Error::invalid(
                            "datasets",
                            format!("DPCP sample {j} of agent {} has zero norm", ds.agent_id),
                        ));
                    }
                    col /= norm;
                }
            }
        }
        Self::from_vectors(ProblemKind::Dpcp, datasets, p)
    }

    pub fn quadratic(datasets: Vec<LocalDataset>) -> Result<Self> {
        let first = datasets
            .first()
            .ok_or_else(|| Error::invalid("datasets", "need at least one agent"))?;
        let (n, p) = match &first.data {
            LocalData::Targets(t) if !t.is_empty() => t[0].shape(),
            _ => return Err(Error::invalid("datasets", "quadratic problem needs targets")),
        };
        let l = first.len();
        for ds in &datasets {
            match &ds.data {
                LocalData::Targets(t) if t.len() == l => {
                    if let Some(bad) = t.iter().find(|c| c.shape() != (n, p)) {
                        return Err(Error::ShapeMismatch {
                            context: "quadratic target",
                            expected: (n, p),
                            got: bad.shape(),
                        });
                    }
                }
                _ => {
                    return Err(Error::invalid(
                        "datasets",
                        "every agent must hold the same number of targets",
                    ))
                }
            }
        }
        Ok(ProblemOracle {
            kind: ProblemKind::Quadratic,
            datasets,
            n,
            p,
            l,
        })
    }

    fn from_vectors(kind: ProblemKind, datasets: Vec<LocalDataset>, p: usize) -> Result<Self> {
        let first = datasets
            .first()
            .ok_or_else(|| Error::invalid("datasets", "need at least one agent"))?;
        let (n, l) = match &first.data {
            LocalData::Vectors(a) => a.shape(),
            LocalData::Targets(_) => {
                return Err(Error::invalid("datasets", "expected vector samples"))
            }
        };
        if l == 0 || n == 0 {
            return Err(Error::invalid("datasets", "empty local dataset"));
        }
        if p == 0 || p > n {
            return Err(Error::invalid("p", format!("need 1 <= p <= n = {n}, got {p}")));
        }
        for ds in &datasets {
            match &ds.data {
                LocalData::Vectors(a) if a.shape() == (n, l) => {}
                LocalData::Vectors(a) => {
                    return Err(Error::ShapeMismatch {
                        context: "local dataset (every agent owns l samples of dimension n)",
                        expected: (n, l),
                        got: a.shape(),
                    })
                }
                LocalData::Targets(_) => {
                    return Err(Error::invalid("datasets", "mixed sample kinds"))
                }
            }
        }
        Ok(ProblemOracle {
            kind,
            datasets,
            n,
            p,
            l,
        })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn agents(&self) -> usize {
        self.datasets.len()
    }

    /// `(n, p)`, the shape of the decision variable.
    pub fn var_shape(&self) -> (usize, usize) {
        (self.n, self.p)
    }

    pub fn samples_per_agent(&self) -> usize {
        self.l
    }

    pub fn datasets(&self) -> &[LocalDataset] {
        &self.datasets
    }

    fn check_agent(&self, i: usize) -> Result<()> {
        if i >= self.datasets.len() {
            return Err(Error::IndexOutOfRange {
                what: "agent",
                index: i,
                bound: self.datasets.len(),
            });
        }
        Ok(())
    }

    fn check_sample(&self, j: usize) -> Result<()> {
        if j >= self.l {
            return Err(Error::IndexOutOfRange {
                what: "sample",
                index: j,
                bound: self.l,
            });
        }
        Ok(())
    }

    fn check_var(&self, x: &Mat) -> Result<()> {
        if x.shape() != (self.n, self.p) {
            return Err(Error::ShapeMismatch {
                context: "decision variable",
                expected: (self.n, self.p),
                got: x.shape(),
            });
        }
        Ok(())
    }

    fn check_batch(&self, i: usize, batch: &[usize], x: &Mat) -> Result<()> {
        self.check_agent(i)?;
        self.check_var(x)?;
        if batch.is_empty() {
            return Err(Error::invalid("batch", "empty sample batch"));
        }
        batch.iter().try_for_each(|&j| self.check_sample(j))
    }

    /// `grad f_i^[j](X)`.
    pub fn sample_grad(&self, i: usize, j: usize, x: &Mat) -> Result<Mat> {
        self.batch_gradient(i, &[j], x)
    }

    /// `f_i^[j](X)`.
    pub fn sample_loss(&self, i: usize, j: usize, x: &Mat) -> Result<f64> {
        self.check_batch(i, &[j], x)?;
        Ok(self.batch_loss_unchecked(i, Some(&[j]), x))
    }

    /// Mean of the sample gradients over `batch` (duplicates allowed).
    pub fn batch_gradient(&self, i: usize, batch: &[usize], x: &Mat) -> Result<Mat> {
        self.check_batch(i, batch, x)?;
        Ok(self.batch_gradient_unchecked(i, Some(batch), x))
    }

    /// `grad f_i(X) = (1/l) sum_j grad f_i^[j](X)`.
    pub fn local_full_gradient(&self, i: usize, x: &Mat) -> Result<Mat> {
        self.check_agent(i)?;
        self.check_var(x)?;
        Ok(self.batch_gradient_unchecked(i, None, x))
    }

    /// `f_i(X)`.
    pub fn local_loss(&self, i: usize, x: &Mat) -> Result<f64> {
        self.check_agent(i)?;
        self.check_var(x)?;
        Ok(self.batch_loss_unchecked(i, None, x))
    }

    /// `grad f(X) = (1/d) sum_i grad f_i(X)`, summed in agent order.
    pub fn global_gradient(&self, x: &Mat) -> Result<Mat> {
        self.check_var(x)?;
        let mut acc = Mat::zeros(self.n, self.p);
        for i in 0..self.agents() {
            acc += self.batch_gradient_unchecked(i, None, x);
        }
        Ok(acc / self.agents() as f64)
    }

    /// `f(X) = (1/d) sum_i f_i(X)`.
    pub fn global_loss(&self, x: &Mat) -> Result<f64> {
        self.check_var(x)?;
        let total: f64 = (0..self.agents())
            .map(|i| self.batch_loss_unchecked(i, None, x))
            .sum();
        Ok(total / self.agents() as f64)
    }

    /// `None` selects every local sample.
    pub(crate) fn batch_gradient_unchecked(&self, i: usize, batch: Option<&[usize]>, x: &Mat) -> Mat {
        match &self.datasets[i].data {
            LocalData::Vectors(a) => {
                let selected;
                let a = match batch {
                    Some(b) => {
                        selected = a.select_columns(b);
                        &selected
                    }
                    None => a,
                };
                let count = a.ncols() as f64;
                let mut y = a.tr_mul(x);
                if self.kind == ProblemKind::Dpcp {
                    y.apply(|v| *v *= v.abs());
                }
                -(a * y) / count
            }
            LocalData::Targets(targets) => {
                let mut acc = Mat::zeros(self.n, self.p);
                let count = match batch {
                    Some(b) => {
                        for &j in b {
                            acc += x - &targets[j];
                        }
                        b.len()
                    }
                    None => {
                        for c in targets {
                            acc += x - c;
                        }
                        targets.len()
                    }
                };
                acc / count as f64
            }
        }
    }

    fn batch_loss_unchecked(&self, i: usize, batch: Option<&[usize]>, x: &Mat) -> f64 {
        match &self.datasets[i].data {
            LocalData::Vectors(a) => {
                let selected;
                let a = match batch {
                    Some(b) => {
                        selected = a.select_columns(b);
                        &selected
                    }
                    None => a,
                };
                let count = a.ncols() as f64;
                let y = a.tr_mul(x);
                let sum = match self.kind {
                    ProblemKind::Dpcp => -y.iter().map(|v| v.abs().powi(3)).sum::<f64>() / 3.0,
                    _ => -0.5 * y.norm_squared(),
                };
                sum / count
            }
            LocalData::Targets(targets) => {
                let (sum, count) = match batch {
                    Some(b) => (
                        b.iter().map(|&j| 0.5 * (x - &targets[j]).norm_squared()).sum::<f64>(),
                        b.len(),
                    ),
                    None => (
                        targets.iter().map(|c| 0.5 * (x - c).norm_squared()).sum::<f64>(),
                        targets.len(),
                    ),
                };
                sum / count as f64
            }
        }
    }
}
