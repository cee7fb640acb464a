use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LocalDataset;
use crate::error::{Error, Result};
use crate::linalg::{gaussian, orthonormalize, Mat};

/// Synthetic PCA data `A = U diag(xi^{i/2}) V^T`.
#[derive(Debug, Clone)]
pub struct PcaData {
    /// `n x m` global data matrix.
    pub a: Mat,
    /// `n x n` left singular vectors, ordered by decreasing singular value.
    pub u: Mat,
    pub singular_values: Vec<f64>,
}

impl PcaData {
    /// Orthonormal basis of the dominant `p`-dimensional eigenspace of `A A^T`.
    pub fn top_subspace(&self, p: usize) -> Mat {
        self.u.columns(0, p).into_owned()
    }
}

pub fn gen_pca_data(n: usize, m: usize, xi: f64, seed: u64) -> Result<PcaData> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::invalid("xi", format!("must lie in (0, 1), got {xi}")));
    }
    if n == 0 || n > m {
        return Err(Error::invalid("n", format!("need 1 <= n <= m, got n={n}, m={m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = orthonormalize(&gaussian(n, n, &mut rng))?;
    let v = orthonormalize(&gaussian(m, n, &mut rng))?;
    let singular_values: Vec<f64> = (1..=n).map(|i| xi.powf(i as f64 / 2.0)).collect();
    let mut us = u.clone();
    for (j, s) in singular_values.iter().enumerate() {
        us.column_mut(j).scale_mut(*s);
    }
    let a = us * v.transpose();
    Ok(PcaData {
        a,
        u,
        singular_values,
    })
}

/// Synthetic DPCP data: inliers near the hyperplane `normal^T x = 0`,
/// outliers uniform on the sphere, every column of unit length.
#[derive(Debug, Clone)]
pub struct DpcpData {
    /// `n x (d l)`, columns already shuffled across agents.
    pub samples: Mat,
    /// `n x 1` unit normal of the inlier hyperplane.
    pub normal: Mat,
    /// `outliers[c]` marks column `c` of `samples`.
    pub outliers: Vec<bool>,
}

#[allow(clippy::needless_range_loop)]
pub fn gen_dpcp_data(
    n: usize,
    d: usize,
    l: usize,
    outlier_ratio: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<DpcpData> {
    if n < 2 || d == 0 || l == 0 {
        return Err(Error::invalid(
            "dimensions",
            format!("need n >= 2, d >= 1, l >= 1, got n={n}, d={d}, l={l}"),
        ));
    }
    if !(0.0..1.0).contains(&outlier_ratio) {
        return Err(Error::invalid("outlier_ratio", "must lie in [0, 1)"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid("noise_sigma", "must be finite and nonnegative"));
    }
    let total = d * l;
    let outlier_count = (outlier_ratio * total as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut normal = gaussian(n, 1, &mut rng);
    normal /= normal.norm();

    let mut samples = Mat::zeros(n, total);
    let mut outliers = vec![false; total];
    for c in 0..total {
        let is_outlier = c < outlier_count;
        let mut v = gaussian(n, 1, &mut rng);
        if !is_outlier {
            let along = normal.dot(&v);
            v -= &normal * along;
            if noise_sigma > 0.0 {
                v /= v.norm();
                v += gaussian(n, 1, &mut rng) * noise_sigma;
            }
        }
        let norm = v.norm();
        samples.set_column(c, &(v / norm).column(0));
        outliers[c] = is_outlier;
    }

    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let samples = samples.select_columns(&order);
    let outliers = order.iter().map(|&c| outliers[c]).collect();
    Ok(DpcpData {
        samples,
        normal,
        outliers,
    })
}

/// Random targets `C_j ~ N(0, I)` for the quadratic sanity problem.
pub fn gen_quadratic_data(n: usize, p: usize, d: usize, l: usize, seed: u64) -> Vec<LocalDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d)
        .map(|i| {
            let targets = (0..l).map(|_| gaussian(n, p, &mut rng)).collect();
            LocalDataset::from_targets(i, targets)
        })
        .collect()
}

/// Split the columns of `global` into `d` consecutive equal chunks.
///
/// Trailing columns that do not fill a whole share are dropped with a warning.
pub fn partition(global: &Mat, d: usize) -> Result<Vec<LocalDataset>> {
    if d == 0 {
        return Err(Error::invalid("d", "agent count must be positive"));
    }
    let m = global.ncols();
    let l = m / d;
    if l == 0 {
        return Err(Error::invalid(
            "d",
            format!("{m} samples cannot be split across {d} agents"),
        ));
    }
    if l * d != m {
        warn!(
            "{m} samples are not divisible by {d} agents; dropping the last {} columns",
            m - l * d
        );
    }
    Ok((0..d)
        .map(|i| LocalDataset::from_columns(i, global.columns(i * l, l).into_owned()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::SymmetricEigen;

    fn singular_values(a: &Mat) -> Vec<f64> {
        let eig = SymmetricEigen::new(a * a.transpose());
        let mut s: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
        s.sort_by(|x, y| y.partial_cmp(x).unwrap());
        s
    }

    #[test]
    fn pca_singular_values_follow_decay() {
        let data = gen_pca_data(5, 12, 0.81, 1).unwrap();
        let expected = [0.9, 0.81, 0.729, 0.6561, 0.59049];
        for (s, e) in singular_values(&data.a).iter().zip(expected) {
            assert_abs_diff_eq!(*s, e, epsilon = 1e-10);
        }
    }

    #[test]
    fn pca_is_deterministic() {
        let a = gen_pca_data(4, 9, 0.5, 77).unwrap();
        let b = gen_pca_data(4, 9, 0.5, 77).unwrap();
        assert_eq!(a.a, b.a);
    }

    #[test]
    fn pca_top_subspace_is_dominant_eigenspace() {
        let data = gen_pca_data(6, 20, 0.7, 2).unwrap();
        let up = data.top_subspace(2);
        let aat = &data.a * data.a.transpose();
        // A A^T U_p = U_p diag(xi, xi^2)
        let lhs = &aat * &up;
        let rhs = &up * Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.7, 0.49]));
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn pca_rejects_bad_parameters() {
        assert!(gen_pca_data(5, 10, 1.0, 0).is_err());
        assert!(gen_pca_data(5, 10, 0.0, 0).is_err());
        assert!(gen_pca_data(11, 10, 0.5, 0).is_err());
    }

    #[test]
    fn dpcp_inliers_exact_without_noise() {
        let data = gen_dpcp_data(4, 3, 10, 0.0, 0.0, 5).unwrap();
        assert_abs_diff_eq!(data.normal.norm(), 1.0, epsilon = 1e-15);
        for c in data.samples.column_iter() {
            assert_abs_diff_eq!(c.norm(), 1.0, epsilon = 1e-14);
            assert!(data.normal.column(0).dot(&c).abs() <= 1e-12);
        }
    }

    #[test]
    fn dpcp_outlier_count_and_determinism() {
        let data = gen_dpcp_data(4, 3, 11, 0.5, 1e-3, 6).unwrap();
        assert_eq!(data.outliers.iter().filter(|o| **o).count(), 16);
        let again = gen_dpcp_data(4, 3, 11, 0.5, 1e-3, 6).unwrap();
        assert_eq!(data.samples, again.samples);
        assert_eq!(data.outliers, again.outliers);
        assert!(gen_dpcp_data(4, 3, 11, 1.0, 0.0, 6).is_err());
        assert!(gen_dpcp_data(1, 3, 11, 0.1, 0.0, 6).is_err());
    }

    #[test]
    fn partition_examples() {
        let g = Mat::from_fn(2, 4, |r, c| (10 * r + c) as f64);
        let parts = partition(&g, 2).unwrap();
        assert_eq!(parts[0].columns().unwrap(), &g.columns(0, 2).into_owned());
        assert_eq!(parts[1].columns().unwrap(), &g.columns(2, 2).into_owned());

        let g5 = Mat::from_fn(2, 5, |r, c| (r + c) as f64);
        let parts = partition(&g5, 2).unwrap();
        assert!(parts.iter().all(|p| p.len() == 2));
        assert_eq!(parts[1].columns().unwrap(), &g5.columns(2, 2).into_owned());

        let parts = partition(&g, 1).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].columns().unwrap(), &g);

        assert!(partition(&g, 5).is_err());
    }
}
