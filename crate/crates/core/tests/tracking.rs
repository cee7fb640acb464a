use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vrsgt_core::directions::e_term;
use vrsgt_core::linalg::random_orthonormal;
use vrsgt_core::network::{build_topology, metropolis_weights, MixingMatrix, TopologyKind};
use vrsgt_core::optimizer::{checkpoint, HyperParams, Monitor, StopReason, TraceRecord, Vrsgt};
use vrsgt_core::problems::{gen_pca_data, partition, ProblemOracle};
use vrsgt_core::Mat;

fn instance(d: usize, l: usize) -> (ProblemOracle, MixingMatrix, Mat) {
    let m = d * l;
    let data = gen_pca_data(20, m, 0.8, 11).unwrap();
    let oracle = ProblemOracle::pca(partition(&(data.a * (m as f64).sqrt()), d).unwrap(), 3).unwrap();
    let mixing = metropolis_weights(&build_topology(TopologyKind::Ring, d, 0).unwrap()).unwrap();
    let x0 = random_orthonormal(20, 3, &mut ChaCha8Rng::seed_from_u64(12));
    (oracle, mixing, x0)
}

fn params(outer: usize) -> HyperParams {
    HyperParams {
        eta: 0.05,
        beta: 1.0,
        tau: 4,
        q: 4,
        outer_iters: outer,
        seed: 5,
        track_t: true,
        shared_batch: false,
        stop_tol: 0.0,
    }
}

#[test]
fn tracking_and_auxiliary_identities_hold_every_iteration() {
    let (o, w, x0) = instance(4, 16);
    let hp = params(20);
    let alg = Vrsgt::new(&o, &w, hp.clone()).unwrap();
    let mut st = alg.init(&x0).unwrap();
    let mut m_g = 0.0_f64;
    let mut t_max = 0.0_f64;
    loop {
        let mean_gap = (st.d.mean() - st.s.mean()).amax();
        assert!(mean_gap <= 1e-12, "mean(D) != mean(S): {mean_gap}");
        let t_aux = st.t_aux.as_ref().unwrap();
        for i in 0..4 {
            let xi = st.x.block(i);
            let rebuilt = t_aux.block(i) + e_term(xi) * hp.beta;
            assert!((st.s.block(i) - rebuilt).amax() <= 1e-10);
            let g = vrsgt_core::directions::g_from_grad(xi, &o.local_full_gradient(i, xi).unwrap()).unwrap();
            m_g = m_g.max(g.norm());
            t_max = t_max.max(t_aux.block(i).norm());
        }
        if st.k >= hp.outer_iters && st.t == 0 {
            break;
        }
        alg.step(&mut st).unwrap();
    }
    assert!(t_max <= (2 * hp.q + 1) as f64 * m_g);
}

#[test]
fn counters_follow_the_schedule() {
    let (o, w, x0) = instance(4, 16);
    let hp = params(7);
    let alg = Vrsgt::new(&o, &w, hp.clone()).unwrap();
    let mut st = alg.init(&x0).unwrap();
    let summary = alg.run(&mut st, &Monitor { cadence: 1000, truth: None }, &mut |_| {}).unwrap();
    assert_eq!(summary.reason, StopReason::Budget);
    let (k, q, d, l, tau) = (7u64, 4u64, 4u64, 16u64, 4u64);
    assert_eq!(st.samples, k * d * l + k * q * d * tau);
    assert_eq!(st.comm.rounds, 2 * k * (q + 1));
    assert_eq!(summary.iterations, k * (q + 1));
}

fn trace(alg: &Vrsgt<'_>, x0: &Mat) -> Vec<TraceRecord> {
    let mut st = alg.init(x0).unwrap();
    let mut rows = Vec::new();
    alg.run(&mut st, &Monitor::default(), &mut |r| rows.push(*r)).unwrap();
    rows
}

#[test]
fn traces_do_not_depend_on_thread_count() {
    let (o, w, x0) = instance(8, 16);
    let alg = Vrsgt::new(&o, &w, params(5)).unwrap();
    let run_with = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| trace(&alg, &x0))
    };
    let one = run_with(1);
    let many = run_with(8);
    assert_eq!(one.len(), many.len());
    for (a, b) in one.iter().zip(&many) {
        assert_eq!(a.metrics.stagap.to_bits(), b.metrics.stagap.to_bits());
        assert_eq!(a, b);
    }
}

#[test]
fn checkpoint_resume_reproduces_trace_bitwise() {
    let (o, w, x0) = instance(4, 16);
    let hp = params(6);
    let alg = Vrsgt::new(&o, &w, hp.clone()).unwrap();
    let full = trace(&alg, &x0);

    let dir = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    let mut st = alg.init(&x0).unwrap();
    // pause mid-epoch so both inner counters and RNG positions matter
    let paused = alg.run_limited(&mut st, Some(13), &Monitor::default(), &mut |r| rows.push(*r)).unwrap();
    assert_eq!(paused.reason, StopReason::Paused);
    checkpoint::save(dir.path(), &st, hp.seed).unwrap();
    drop(st);

    let (mut resumed, seed) = checkpoint::load(dir.path()).unwrap();
    assert_eq!(seed, hp.seed);
    alg.run(&mut resumed, &Monitor::default(), &mut |r| rows.push(*r)).unwrap();
    assert_eq!(rows, full);
}

#[test]
fn corrupt_manifest_is_rejected() {
    let (o, w, x0) = instance(4, 16);
    let alg = Vrsgt::new(&o, &w, params(1)).unwrap();
    let st = alg.init(&x0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    checkpoint::save(dir.path(), &st, 5).unwrap();
    let manifest = dir.path().join("manifest.txt");
    let text = std::fs::read_to_string(&manifest).unwrap();
    std::fs::write(&manifest, text.replace("agents = 4", "agents = 3")).unwrap();
    assert!(checkpoint::load(dir.path()).is_err());
    std::fs::write(&manifest, "garbage").unwrap();
    assert!(checkpoint::load(dir.path()).is_err());
}
