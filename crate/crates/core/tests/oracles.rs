use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vrsgt_core::directions::{
    ale_value, e_term, g_from_grad, grad_h_exact, h_local_full, orth_penalty, DirectionParams,
};
use vrsgt_core::linalg::{gaussian, random_orthonormal, sym, Mat};
use vrsgt_core::problems::{
    gen_dpcp_data, gen_pca_data, gen_quadratic_data, partition, ProblemKind, ProblemOracle,
};

const STEP: f64 = 1e-6;

fn central_difference(f: impl Fn(&Mat) -> f64, x: &Mat, h: f64) -> Mat {
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[(r, c)] += h;
            minus[(r, c)] -= h;
            out[(r, c)] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    out
}

fn rel_err(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

fn oracle(kind: ProblemKind, seed: u64) -> ProblemOracle {
    match kind {
        ProblemKind::Pca => {
            let data = gen_pca_data(8, 48, 0.8, seed).unwrap();
            ProblemOracle::pca(partition(&(data.a * 48f64.sqrt()), 3).unwrap(), 3).unwrap()
        }
        ProblemKind::Dpcp => {
            let data = gen_dpcp_data(5, 3, 16, 0.3, 1e-2, seed).unwrap();
            ProblemOracle::dpcp(partition(&data.samples, 3).unwrap(), 2).unwrap()
        }
        ProblemKind::Quadratic => {
            ProblemOracle::quadratic(gen_quadratic_data(6, 2, 3, 10, seed)).unwrap()
        }
    }
}

/// Near-feasible points; for DPCP every projection stays away from the
/// kink of `|y|^3` so the central difference is accurate.
fn test_points(o: &ProblemOracle, count: usize, spread: f64, seed: u64) -> Vec<Mat> {
    let (n, p) = o.var_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    while points.len() < count {
        let x = random_orthonormal(n, p, &mut rng) + gaussian(n, p, &mut rng) * spread;
        if o.kind() == ProblemKind::Dpcp {
            let clear = o.datasets().iter().all(|ds| {
                let y = ds.columns().unwrap().tr_mul(&x);
                y.iter().all(|v| v.abs() > 1e-3)
            });
            if !clear {
                continue;
            }
        }
        points.push(x);
    }
    points
}

const KINDS: [ProblemKind; 3] = [ProblemKind::Pca, ProblemKind::Dpcp, ProblemKind::Quadratic];

#[test]
fn local_gradients_match_finite_differences() {
    for (s, kind) in KINDS.into_iter().enumerate() {
        let o = oracle(kind, 10 + s as u64);
        for x in test_points(&o, 10, 0.05, s as u64) {
            for i in 0..o.agents() {
                let fd = central_difference(|y| o.local_loss(i, y).unwrap(), &x, STEP);
                let g = o.local_full_gradient(i, &x).unwrap();
                assert!(rel_err(&g, &fd) <= 1e-5, "{kind} agent {i}: {}", rel_err(&g, &fd));
            }
        }
    }
}

#[test]
fn global_gradient_matches_finite_differences() {
    for (s, kind) in KINDS.into_iter().enumerate() {
        let o = oracle(kind, 20 + s as u64);
        for x in test_points(&o, 5, 0.05, 100 + s as u64) {
            let fd = central_difference(|y| o.global_loss(y).unwrap(), &x, STEP);
            let g = o.global_gradient(&x).unwrap();
            assert!(rel_err(&g, &fd) <= 1e-5, "{kind}: {}", rel_err(&g, &fd));
        }
    }
}

#[test]
fn sample_gradients_average_to_local_gradient() {
    let o = oracle(ProblemKind::Dpcp, 3);
    let x = &test_points(&o, 1, 0.05, 4)[0];
    let l = o.samples_per_agent();
    let mut acc = Mat::zeros(x.nrows(), x.ncols());
    for j in 0..l {
        acc += o.sample_grad(1, j, x).unwrap();
    }
    let full = o.local_full_gradient(1, x).unwrap();
    assert!((acc / l as f64 - full).norm() <= 1e-13);
}

#[test]
fn penalty_gradient_is_e() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let x = random_orthonormal(7, 3, &mut rng) + gaussian(7, 3, &mut rng) * 0.1;
        let fd = central_difference(orth_penalty, &x, STEP);
        assert!(rel_err(&e_term(&x), &fd) <= 1e-6);
    }
}

#[test]
fn ale_gradient_matches_finite_differences() {
    let params = DirectionParams::new(1.0).unwrap();
    for (s, kind) in KINDS.into_iter().enumerate() {
        let o = oracle(kind, 30 + s as u64);
        for x in test_points(&o, 10, 0.05, 200 + s as u64) {
            // larger step: the surrogate value carries a 1/(2 sigma) cancellation
            let fd = central_difference(|y| ale_value(&o, 0, y, &params).unwrap(), &x, 1e-5);
            let g = grad_h_exact(&o, 0, &x, &params).unwrap();
            assert!(rel_err(&g, &fd) <= 1e-5, "{kind}: {}", rel_err(&g, &fd));
        }
    }
}

#[test]
fn on_manifold_h_equals_exact_ale_gradient() {
    let params = DirectionParams::new(2.0).unwrap();
    for (s, kind) in KINDS.into_iter().enumerate() {
        let o = oracle(kind, 40 + s as u64);
        for x in test_points(&o, 10, 0.0, 300 + s as u64) {
            for i in 0..o.agents() {
                let h = h_local_full(&o, i, &x, &params).unwrap();
                let exact = grad_h_exact(&o, i, &x, &params).unwrap();
                assert!((h - exact).norm() <= 1e-10);
            }
        }
    }
}

#[test]
fn on_manifold_g_is_riemannian_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let p = rng.random_range(1..=4);
        let x = random_orthonormal(9, p, &mut rng);
        let grad = gaussian(9, p, &mut rng);
        let riemannian = &grad - &x * sym(&x.tr_mul(&grad)).unwrap();
        assert!((g_from_grad(&x, &grad).unwrap() - riemannian).norm() <= 1e-12);
    }
}

#[test]
fn pca_generator_at_full_scale() {
    let data = gen_pca_data(200, 64000, 0.9, 1).unwrap();
    assert_eq!(data.a.shape(), (200, 64000));
    assert!((data.singular_values[0] - 0.9f64.sqrt()).abs() <= 1e-15);
    let gram = &data.a * data.a.transpose();
    let eig = gram.symmetric_eigen();
    let mut sv: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    for (k, s) in sv.iter().take(10).enumerate() {
        assert!((s - 0.9f64.powf((k + 1) as f64 / 2.0)).abs() <= 1e-10);
    }
}
