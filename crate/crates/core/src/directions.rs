//! Constraint-free descent directions for orthogonality-constrained problems.
//!
//! The orthogonality multiplier at a stationary point is
//! `Lambda = sym(X^T grad f(X))`, and the multiplier term of the augmented
//! Lagrangian equals the directional derivative
//! `<grad f(X), X X^T X - X>`. Replacing that derivative by a difference
//! quotient with step `sigma` along `A(X) = (1 - sigma) X + sigma X X^T X`
//! gives the surrogate
//!
//! ```text
//! h_i(X) = (1 + 1/(2 sigma)) f_i(X) - 1/(2 sigma) f_i(A(X)) + beta/4 ||X^T X - I||_F^2
//! ```
//!
//! whose gradient ([`grad_h_exact`]) needs `grad f_i` at both `X` and `A(X)`:
//!
//! ```text
//! grad h_i = (1 + 1/(2s)) g(X) - g(A(X)) ((1-s)/(2s) I + 1/2 X^T X)
//!            - X sym(X^T g(A(X))) + beta X (X^T X - I)
//! ```
//!
//! Substituting `g(A(X)) ~ g(X)` collapses the two `1/(2s)` terms:
//! `(1 + 1/(2s)) I - (1-s)/(2s) I - 1/2 X^T X = 3/2 I - 1/2 X^T X`. The
//! resulting direction
//!
//! ```text
//! G(X) = g(X) (3/2 I - 1/2 X^T X) - X sym(X^T g(X)),   H(X) = G(X) + beta E(X)
//! ```
//!
//! is free of `sigma`, so `sigma` only appears in the verification oracles
//! here. On the manifold `A(X) = X` and `H` equals `grad h_i` exactly.

use crate::error::{Error, Result};
use crate::linalg::{gram_defect, map_a, sym_unchecked, Mat};
use crate::problems::ProblemOracle;

/// Default perturbation for the surrogate value/gradient oracles.
pub const DEFAULT_SIGMA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionParams {
    pub beta: f64,
    /// Only read by [`ale_value`] and [`grad_h_exact`].
    pub sigma: f64,
}

impl DirectionParams {
    pub fn new(beta: f64) -> Result<Self> {
        Self::with_sigma(beta, DEFAULT_SIGMA)
    }

    pub fn with_sigma(beta: f64, sigma: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid("beta", format!("must be positive, got {beta}")));
        }
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(Error::invalid("sigma", format!("must lie in (0, 1), got {sigma}")));
        }
        Ok(DirectionParams { beta, sigma })
    }
}

/// `E(X) = X (X^T X - I_p)`, the gradient of `1/4 ||X^T X - I_p||_F^2`.
pub fn e_term(x: &Mat) -> Mat {
    x * gram_defect(x)
}

/// `1/4 ||X^T X - I_p||_F^2`.
pub fn orth_penalty(x: &Mat) -> f64 {
    0.25 * gram_defect(x).norm_squared()
}

fn check_same_shape(x: &Mat, grad: &Mat) -> Result<()> {
    if x.shape() != grad.shape() {
        return Err(Error::ShapeMismatch {
            context: "gradient must match the variable",
            expected: x.shape(),
            got: grad.shape(),
        });
    }
    Ok(())
}

/// `grad (3/2 I - 1/2 X^T X) - X sym(X^T grad)`.
pub fn g_from_grad(x: &Mat, grad: &Mat) -> Result<Mat> {
    check_same_shape(x, grad)?;
    Ok(g_unchecked(x, grad))
}

pub(crate) fn g_unchecked(x: &Mat, grad: &Mat) -> Mat {
    let p = x.ncols();
    let factor = Mat::identity(p, p) * 1.5 - x.tr_mul(x) * 0.5;
    grad * factor - x * sym_unchecked(&x.tr_mul(grad))
}

/// `G(X) + beta E(X)`.
pub fn h_from_grad(x: &Mat, grad: &Mat, params: &DirectionParams) -> Result<Mat> {
    check_same_shape(x, grad)?;
    Ok(h_unchecked(x, grad, params.beta))
}

pub(crate) fn h_unchecked(x: &Mat, grad: &Mat, beta: f64) -> Mat {
    g_unchecked(x, grad) + e_term(x) * beta
}

/// `H_i^[j](X)`.
pub fn h_sample(
    oracle: &ProblemOracle,
    i: usize,
    j: usize,
    x: &Mat,
    params: &DirectionParams,
) -> Result<Mat> {
    let grad = oracle.sample_grad(i, j, x)?;
    Ok(h_unchecked(x, &grad, params.beta))
}

/// `H_i(X) = (1/l) sum_j H_i^[j](X)`, evaluated through the full local
/// gradient since `H` is affine in the gradient argument.
pub fn h_local_full(
    oracle: &ProblemOracle,
    i: usize,
    x: &Mat,
    params: &DirectionParams,
) -> Result<Mat> {
    let grad = oracle.local_full_gradient(i, x)?;
    Ok(h_unchecked(x, &grad, params.beta))
}

/// Mean of `H_i^[j](X)` over `batch`.
pub fn h_batch(
    oracle: &ProblemOracle,
    i: usize,
    batch: &[usize],
    x: &Mat,
    params: &DirectionParams,
) -> Result<Mat> {
    let grad = oracle.batch_gradient(i, batch, x)?;
    Ok(h_unchecked(x, &grad, params.beta))
}

/// `(1/tau) sum_{j in batch} (H_i^[j](X_new) - H_i^[j](X_old))`.
pub fn svrg_delta(
    oracle: &ProblemOracle,
    i: usize,
    batch: &[usize],
    x_new: &Mat,
    x_old: &Mat,
    params: &DirectionParams,
) -> Result<Mat> {
    Ok(h_batch(oracle, i, batch, x_new, params)? - h_batch(oracle, i, batch, x_old, params)?)
}

/// Value of the surrogate `h_i(X)`.
pub fn ale_value(oracle: &ProblemOracle, i: usize, x: &Mat, params: &DirectionParams) -> Result<f64> {
    let sigma = checked_sigma(params)?;
    let c = 1.0 / (2.0 * sigma);
    let fx = oracle.local_loss(i, x)?;
    let fa = oracle.local_loss(i, &map_a(x, sigma))?;
    Ok((1.0 + c) * fx - c * fa + params.beta * orth_penalty(x))
}

/// Exact `grad h_i(X)`, evaluating `grad f_i` at `X` and at `A(X)`.
pub fn grad_h_exact(
    oracle: &ProblemOracle,
    i: usize,
    x: &Mat,
    params: &DirectionParams,
) -> Result<Mat> {
    let sigma = checked_sigma(params)?;
    let p = x.ncols();
    let c = 1.0 / (2.0 * sigma);
    let g_x = oracle.local_full_gradient(i, x)?;
    let g_a = oracle.local_full_gradient(i, &map_a(x, sigma))?;
    let factor = Mat::identity(p, p) * ((1.0 - sigma) * c) + x.tr_mul(x) * 0.5;
    Ok(g_x * (1.0 + c) - &g_a * factor - x * sym_unchecked(&x.tr_mul(&g_a))
        + e_term(x) * params.beta)
}

fn checked_sigma(params: &DirectionParams) -> Result<f64> {
    if params.sigma == 0.0 || !params.sigma.is_finite() {
        return Err(Error::invalid("sigma", "must be a nonzero finite number"));
    }
    Ok(params.sigma)
}

/// Radius of the region `||X^T X - I||_F <= 1/6` on which `||H||` controls
/// both `||G||` and the feasibility violation.
pub const REGION_RADIUS: f64 = 1.0 / 6.0;

/// Smallest penalty for which the norm-domination inequality is guaranteed,
/// given `m_bound >= sup ||grad f||_F` over the region.
pub fn domination_beta_threshold(m_bound: f64) -> f64 {
    (6.0 + 21.0 * m_bound) / 5.0
}

/// Whether `||H(X)||^2 >= ||G(X)||^2 + beta ||X^T X - I||^2` holds at `x`.
///
/// `grad_fn` returns the Euclidean gradient of the objective. Under
/// `beta >= domination_beta_threshold(m_bound)` the answer is always `true`;
/// below the threshold it may fail. `m_bound` is accepted to keep the
/// caller's bound next to the check even though only `beta` enters it.
pub fn lemma1_check<F>(grad_fn: F, x: &Mat, beta: f64, m_bound: f64) -> Result<bool>
where
    F: Fn(&Mat) -> Mat,
{
    let defect = gram_defect(x);
    let violation = defect.norm();
    if violation > REGION_RADIUS {
        return Err(Error::OutsideRegion { violation });
    }
    if !(m_bound >= 0.0) {
        return Err(Error::invalid("m_bound", "must be nonnegative"));
    }
    let grad = grad_fn(x);
    check_same_shape(x, &grad)?;
    let g = g_unchecked(x, &grad);
    let h = &g + e_term(x) * beta;
    let lhs = h.norm_squared();
    let rhs = g.norm_squared() + beta * defect.norm_squared();
    // rounding slack for the on-manifold case where both sides coincide
    let slack = 1e-13 * (lhs + rhs);
    Ok(lhs + slack >= rhs)
}
