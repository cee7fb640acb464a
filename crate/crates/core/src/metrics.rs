//! Stationarity gap and task-level recovery errors.

use nalgebra::{SymmetricEigen, SVD};
use rayon::prelude::*;

use crate::directions::g_unchecked;
use crate::error::{Error, Result};
use crate::linalg::{gram_defect, Mat, StackedVariable};
use crate::problems::ProblemOracle;

/// One measurement of a stacked iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    /// `grad_norm_sq + consensus_err + feasibility_sq`.
    pub stagap: f64,
    /// `||(1/d) sum_i G_i(X_bar)||_F^2`.
    pub grad_norm_sq: f64,
    /// `(1/d) sum_i ||X_i - X_bar||_F^2`.
    pub consensus_err: f64,
    /// `||X_bar^T X_bar - I||_F^2`.
    pub feasibility_sq: f64,
    /// `f(X_bar)`.
    pub loss: f64,
    pub recovery: Option<f64>,
}

/// Known solution used for the recovery column.
#[derive(Debug, Clone)]
pub enum GroundTruth {
    /// Orthonormal `n x p` basis of the target subspace.
    Subspace(Mat),
    /// `n x 1` hyperplane normal.
    Normal(Mat),
}

pub fn consensus_error(x: &StackedVariable) -> f64 {
    let mean = x.mean();
    let total: f64 = x.blocks().iter().map(|b| (b - &mean).norm_squared()).sum();
    total / x.agents() as f64
}

pub fn feasibility_sq(x_bar: &Mat) -> f64 {
    gram_defect(x_bar).norm_squared()
}

pub fn global_loss(oracle: &ProblemOracle, x_bar: &Mat) -> Result<f64> {
    oracle.global_loss(x_bar)
}

/// Stationarity gap with exact full local gradients at the block mean.
pub fn stagap(oracle: &ProblemOracle, x: &StackedVariable) -> Result<MetricsRow> {
    measure(oracle, x, None)
}

/// [`stagap`] plus the recovery error against `truth`, when given.
pub fn measure(
    oracle: &ProblemOracle,
    x: &StackedVariable,
    truth: Option<&GroundTruth>,
) -> Result<MetricsRow> {
    if x.agents() != oracle.agents() {
        return Err(Error::ShapeMismatch {
            context: "iterate agent count",
            expected: (oracle.agents(), 1),
            got: (x.agents(), 1),
        });
    }
    let x_bar = x.mean();
    let (n, p) = oracle.var_shape();
    if x_bar.shape() != (n, p) {
        return Err(Error::ShapeMismatch {
            context: "iterate block",
            expected: (n, p),
            got: x_bar.shape(),
        });
    }
    let per_agent: Vec<(Mat, f64)> = (0..oracle.agents())
        .into_par_iter()
        .map(|i| {
            (
                oracle.batch_gradient_unchecked(i, None, &x_bar),
                oracle.local_loss(i, &x_bar).unwrap_or(f64::NAN),
            )
        })
        .collect();
    let d = oracle.agents() as f64;
    let mut grad = Mat::zeros(n, p);
    let mut loss = 0.0;
    for (g, f) in &per_agent {
        grad += g;
        loss += f;
    }
    grad /= d;
    loss /= d;

    let grad_norm_sq = g_unchecked(&x_bar, &grad).norm_squared();
    let consensus_err = consensus_error(x);
    let feasibility_sq = feasibility_sq(&x_bar);
    let recovery = match truth {
        None => None,
        Some(GroundTruth::Subspace(u)) => Some(pca_subspace_error(&x_bar, u)?),
        Some(GroundTruth::Normal(w)) => Some(dpcp_recovery_error(&recovered_normal(&x_bar)?, w)?),
    };
    Ok(MetricsRow {
        stagap: grad_norm_sq + consensus_err + feasibility_sq,
        grad_norm_sq,
        consensus_err,
        feasibility_sq,
        loss,
        recovery,
    })
}

/// `sqrt(1 - <w_bar, w_star>^2)` after normalizing both vectors.
pub fn dpcp_recovery_error(w_bar: &Mat, w_star: &Mat) -> Result<f64> {
    if w_bar.shape() != w_star.shape() || w_bar.ncols() != 1 {
        return Err(Error::ShapeMismatch {
            context: "recovery error needs two column vectors of equal length",
            expected: w_star.shape(),
            got: w_bar.shape(),
        });
    }
    let (na, nb) = (w_bar.norm(), w_star.norm());
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::invalid("w", "zero vector"));
    }
    let c = w_bar.dot(w_star) / (na * nb);
    Ok((1.0 - c * c).max(0.0).sqrt())
}

/// Normal vector read off a DPCP iterate.
///
/// With `p = 1` the iterate itself; with `p > 1` the direction least covered
/// by `span(X_bar)`, i.e. the orthogonal complement when `p = n - 1`.
pub fn recovered_normal(x_bar: &Mat) -> Result<Mat> {
    if x_bar.ncols() == 1 {
        return Ok(x_bar.clone());
    }
    let n = x_bar.nrows();
    if x_bar.ncols() >= n {
        return Err(Error::invalid("x_bar", "no complement direction when p >= n"));
    }
    let eig = SymmetricEigen::new(x_bar * x_bar.transpose());
    let k = eig.eigenvalues.imin();
    Ok(eig.eigenvectors.columns(k, 1).into_owned())
}

/// `||P_X - U_p U_p^T||_F` where `P_X = X X^+` is the orthogonal projector
/// onto `span(X_bar)`.
pub fn pca_subspace_error(x_bar: &Mat, u_p: &Mat) -> Result<f64> {
    if x_bar.shape() != u_p.shape() {
        return Err(Error::ShapeMismatch {
            context: "subspace error",
            expected: u_p.shape(),
            got: x_bar.shape(),
        });
    }
    let p = x_bar.ncols();
    let svd = SVD::new(x_bar.clone(), true, false);
    let s = &svd.singular_values;
    let (max, min) = (s.max(), s.min());
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if !(ratio > 1e-8) {
        return Err(Error::RankDeficient { ratio });
    }
    let u = svd.u.expect("left singular vectors requested");
    let basis = u.columns(0, p);
    let proj = basis * basis.transpose();
    Ok((proj - u_p * u_p.transpose()).norm())
}
