//! Fixtures shared by the criterion benches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vrsgt_core::linalg::random_orthonormal;
use vrsgt_core::network::{build_topology, metropolis_weights};
use vrsgt_core::problems::{gen_pca_data, partition};
use vrsgt_core::{Mat, MixingMatrix, ProblemOracle, TopologyKind};

/// PCA instance with `d` agents holding `l` samples of dimension `n`,
/// connected by an Erdos-Renyi(0.5) graph.
pub struct Fixture {
    pub oracle: ProblemOracle,
    pub mixing: MixingMatrix,
    pub x0: Mat,
}

pub fn pca_fixture(n: usize, p: usize, d: usize, l: usize) -> Fixture {
    let m = d * l;
    let data = gen_pca_data(n, m, 0.8, 1).expect("valid generator parameters");
    let oracle = ProblemOracle::pca(partition(&(data.a * (m as f64).sqrt()), d).unwrap(), p).unwrap();
    let topo = build_topology(TopologyKind::ErdosRenyi { prob: 0.5 }, d, 2).unwrap();
    let x0 = random_orthonormal(n, p, &mut ChaCha8Rng::seed_from_u64(3));
    Fixture {
        oracle,
        mixing: metropolis_weights(&topo).unwrap(),
        x0,
    }
}
