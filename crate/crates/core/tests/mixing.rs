use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vrsgt_core::linalg::{gaussian, StackedVariable};
use vrsgt_core::network::{build_topology, metropolis_weights, mix, MixingMatrix, TopologyKind};

fn disagreement(v: &StackedVariable) -> f64 {
    let mean = v.mean();
    v.blocks().iter().map(|b| (b - &mean).norm_squared()).sum::<f64>().sqrt()
}

fn kinds() -> Vec<TopologyKind> {
    vec![TopologyKind::Ring, TopologyKind::Star, TopologyKind::ErdosRenyi { prob: 0.5 }]
}

fn weights(kind: TopologyKind, d: usize, seed: u64) -> MixingMatrix {
    metropolis_weights(&build_topology(kind, d, seed).unwrap()).unwrap()
}

#[test]
fn metropolis_weights_are_doubly_stochastic() {
    for d in [4, 16] {
        for kind in kinds() {
            let m = weights(kind.clone(), d, 3);
            let w = m.weights();
            assert!((w - w.transpose()).amax() <= 1e-12);
            assert!(w.iter().all(|&v| v >= 0.0));
            for r in 0..d {
                assert!((w.row(r).sum() - 1.0).abs() <= 1e-12);
                assert!((w.column(r).sum() - 1.0).abs() <= 1e-12);
            }
            assert!(m.lambda() < 1.0, "{kind:?} d={d}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixing_contracts_disagreement(seed in any::<u64>(), d in 2usize..12, which in 0usize..3) {
        let kind = kinds()[which].clone();
        let m = weights(kind, d, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = StackedVariable::new((0..d).map(|_| gaussian(4, 2, &mut rng)).collect()).unwrap();
        let mixed = mix(&m, &v).unwrap();
        prop_assert!(disagreement(&mixed) <= m.lambda() * disagreement(&v) + 1e-12);
        prop_assert!((mixed.mean() - v.mean()).amax() <= 1e-12);
    }

    #[test]
    fn repeated_mixing_contracts_geometrically(seed in any::<u64>(), rounds in 1usize..20) {
        let m = weights(TopologyKind::Ring, 6, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = StackedVariable::new((0..6).map(|_| gaussian(3, 2, &mut rng)).collect()).unwrap();
        let mut cur = v.clone();
        for _ in 0..rounds {
            cur = mix(&m, &cur).unwrap();
        }
        let bound = m.lambda().powi(rounds as i32) * disagreement(&v);
        prop_assert!(disagreement(&cur) <= bound + 1e-12);
    }
}
