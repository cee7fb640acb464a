//! Dense matrix types and the small algebraic kernels shared by every module.
//!
//! All matrices are `nalgebra::DMatrix<f64>`. A decentralized variable is a
//! [`StackedVariable`]: one `n x p` block per agent, every block of the same
//! shape. Contracts elsewhere in the crate are expressed block-wise, so the
//! physical layout of the stacked `dn x p` matrix never leaks out.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Absolute Frobenius tolerance for "has orthonormal columns".
pub const ORTHONORMAL_TOL: f64 = 1e-12;

/// Symmetric part `(B + B^T) / 2` of a square matrix.
pub fn sym(b: &Mat) -> Result<Mat> {
    if !b.is_square() {
        return Err(Error::NotSquare {
            rows: b.nrows(),
            cols: b.ncols(),
        });
    }
    Ok(sym_unchecked(b))
}

pub(crate) fn sym_unchecked(b: &Mat) -> Mat {
    (b + b.transpose()) * 0.5
}

/// `X^T X - I_p`.
pub fn gram_defect(x: &Mat) -> Mat {
    let mut g = x.tr_mul(x);
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    g
}

/// `||X^T X - I_p||_F`; zero iff the columns of `X` are orthonormal.
pub fn orth_violation(x: &Mat) -> f64 {
    gram_defect(x).norm()
}

/// Largest singular value, taken as the square root of the top eigenvalue of
/// the `p x p` Gram matrix.
pub fn spectral_norm(x: &Mat) -> f64 {
    if x.ncols() == 0 || x.nrows() == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(x.tr_mul(x));
    eig.eigenvalues.max().max(0.0).sqrt()
}

/// Orthonormal basis of the column span of `m` (`n >= p`, full column rank).
///
/// Householder QR with the sign of each column fixed so that `diag(R) > 0`,
/// which makes the map idempotent on matrices that are already orthonormal.
pub fn orthonormalize(m: &Mat) -> Result<Mat> {
    let (n, p) = m.shape();
    if n < p {
        return Err(Error::ShapeMismatch {
            context: "orthonormalize (need rows >= cols)",
            expected: (p, p),
            got: (n, p),
        });
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("m", "non-finite entry"));
    }
    let qr = m.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..p).map(|i| r[(i, i)]).collect();
    let max = diag.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if !(ratio > 1e-10) {
        return Err(Error::RankDeficient { ratio });
    }
    let mut q = qr.q();
    for (j, d) in diag.iter().enumerate() {
        if *d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// `(1 - sigma) X + sigma X X^T X`, the point reached by moving `X` a step
/// `sigma` along `X X^T X - X`. Fixed on matrices with orthonormal columns.
pub fn map_a(x: &Mat, sigma: f64) -> Mat {
    let xxtx = x * x.tr_mul(x);
    x * (1.0 - sigma) + xxtx * sigma
}

/// `rows x cols` matrix of independent standard normal draws.
pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Uniformly random point of the Stiefel manifold.
pub fn random_orthonormal<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Mat {
    loop {
        // Gaussian matrices are full rank with probability one.
        if let Ok(q) = orthonormalize(&gaussian(n, p, rng)) {
            return q;
        }
    }
}

/// One `n x p` block per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedVariable {
    n: usize,
    p: usize,
    blocks: Vec<Mat>,
}

impl StackedVariable {
    pub fn new(blocks: Vec<Mat>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::invalid("blocks", "need at least one agent"))?;
        let (n, p) = first.shape();
        for b in &blocks {
            if b.shape() != (n, p) {
                return Err(Error::ShapeMismatch {
                    context: "stacked variable block",
                    expected: (n, p),
                    got: b.shape(),
                });
            }
        }
        Ok(StackedVariable { n, p, blocks })
    }

    /// `d` identical copies of `x`.
    pub fn replicate(x: &Mat, d: usize) -> Self {
        assert!(d >= 1, "agent count must be positive");
        StackedVariable {
            n: x.nrows(),
            p: x.ncols(),
            blocks: vec![x.clone(); d],
        }
    }

    pub fn zeros(d: usize, n: usize, p: usize) -> Self {
        Self::replicate(&Mat::zeros(n, p), d)
    }

    pub fn agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_shape(&self) -> (usize, usize) {
        (self.n, self.p)
    }

    pub fn block(&self, i: usize) -> &Mat {
        &self.blocks[i]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut Mat {
        &mut self.blocks[i]
    }

    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Mat> {
        self.blocks
    }

    /// Block average, summed in agent order.
    /// Block mean, accumulated as offsets from the first block so that
    /// identical copies average to themselves bit-exactly.
    pub fn mean(&self) -> Mat {
        let first = &self.blocks[0];
        let mut acc = Mat::zeros(self.n, self.p);
        for b in &self.blocks[1..] {
            acc += b - first;
        }
        first + acc / self.blocks.len() as f64
    }

    /// Element-wise `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &StackedVariable) -> StackedVariable {
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a + b * alpha)
            .collect();
        StackedVariable {
            n: self.n,
            p: self.p,
            blocks,
        }
    }

    /// Index of the first agent whose block holds a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.blocks
            .iter()
            .position(|b| !b.iter().all(|v| v.is_finite()))
    }

    /// The `dn x p` matrix `[X_1; ...; X_d]`.
    pub fn to_stacked(&self) -> Mat {
        let d = self.blocks.len();
        let mut out = Mat::zeros(d * self.n, self.p);
        for (i, b) in self.blocks.iter().enumerate() {
            out.view_mut((i * self.n, 0), (self.n, self.p)).copy_from(b);
        }
        out
    }

    /// Inverse of [`to_stacked`](Self::to_stacked).
    pub fn from_stacked(m: &Mat, d: usize) -> Result<Self> {
        if d == 0 || !m.nrows().is_multiple_of(d) {
            return Err(Error::ShapeMismatch {
                context: "stacked matrix rows must be a multiple of the agent count",
                expected: (d.max(1) * (m.nrows() / d.max(1)), m.ncols()),
                got: m.shape(),
            });
        }
        let n = m.nrows() / d;
        let blocks = (0..d)
            .map(|i| m.view((i * n, 0), (n, m.ncols())).into_owned())
            .collect();
        Self::new(blocks)
    }
}
