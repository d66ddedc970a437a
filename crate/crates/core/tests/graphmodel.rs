mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use semiblind::graphmodel::*;
use semiblind::rng::seeded;
use semiblind::Error;

#[test]
fn benchmark_expansion_is_81_nodes() {
    let p = kronecker_expand(&KroneckerSpec::benchmark(4));
    assert_eq!(p.shape(), (81, 81));
    assert!((p[(0, 0)] - 0.1296).abs() < 1e-15);
    assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
}

#[test]
fn seed_outside_unit_interval_is_rejected() {
    let seed = DMatrix::from_row_slice(2, 2, &[0.5, 1.2, 0.0, 0.1]);
    assert!(matches!(KroneckerSpec::new(seed, 2), Err(Error::InvalidSpec(_))));
}

#[test]
fn degenerate_probabilities() {
    let zero = sample_adjacency(&DMatrix::zeros(4, 4), &mut seeded(1)).unwrap();
    assert_eq!(zero.entries(), &DMatrix::zeros(4, 4));
    let ones = sample_adjacency(&DMatrix::from_element(3, 3, 1.0), &mut seeded(1)).unwrap();
    let expected = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 2.0 });
    assert_eq!(ones.entries(), &expected);
}

#[test]
fn kronecker_edge_density_tracks_expectation() {
    let prob = kronecker_expand(&KroneckerSpec::benchmark(4));
    let n = prob.nrows();
    let mut off_sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                // P(A_ij + A_ji > 0)
                off_sum += 1.0 - (1.0 - prob[(i, j)]) * (1.0 - prob[(j, i)]);
            }
        }
    }
    let expected = off_sum / (n * (n - 1)) as f64;
    let mut rng = seeded(42);
    let draws = 100;
    let mut density = 0.0;
    for _ in 0..draws {
        let a = sample_adjacency(&prob, &mut rng).unwrap();
        density += a.nnz(0.0) as f64 / (n * (n - 1)) as f64;
    }
    density /= draws as f64;
    assert!((density - expected).abs() < 0.01 * expected.max(0.05), "{density} vs {expected}");
}

#[test]
fn laplacian_cases() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert_eq!(laplacian(&a), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    assert_eq!(laplacian(&DMatrix::zeros(3, 3)), DMatrix::zeros(3, 3));
}

#[test]
fn bandwidth_one_on_connected_graph_is_constant() {
    let n = 6;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, (i + 1) % n)] = 1.0;
        a[((i + 1) % n, i)] = 1.0;
    }
    let s = bandlimited_signals(&laplacian(&a), 1, 5, &mut seeded(3)).unwrap();
    for t in 0..5 {
        let c = s.column(t);
        assert!(c.iter().all(|&x| (x - c[0]).abs() < 1e-12));
    }
}

#[test]
fn bandlimited_signals_lie_in_low_eigenspace() {
    let mut rng = seeded(11);
    let adj = sample_adjacency(&kronecker_expand(&KroneckerSpec::benchmark(4)), &mut rng).unwrap();
    let lap = laplacian(adj.entries());
    let s = bandlimited_signals(&lap, 10, 20, &mut rng).unwrap();
    let u = jacobi_low_basis(&lap, 10);
    let residual = s.values() - &u * (u.transpose() * s.values());
    assert!(residual.amax() < 1e-10, "{}", residual.amax());
}

#[test]
fn bandlimited_rejects_bad_bandwidth() {
    let lap = laplacian(&DMatrix::zeros(3, 3));
    assert!(bandlimited_signals(&lap, 0, 2, &mut seeded(0)).is_err());
    assert!(bandlimited_signals(&lap, 4, 2, &mut seeded(0)).is_err());
}

#[test]
fn sem_triangular_back_substitution() {
    let mut a = DMatrix::zeros(3, 3);
    a[(0, 1)] = 0.5;
    let a = topology(a, true);
    let e = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
    let s = sem_from_noise(&a, &e).unwrap();
    assert_eq!(s.values().column(0).as_slice(), &[0.5, 1.0, 0.0]);
}

#[test]
fn sem_with_zero_adjacency_is_the_noise() {
    let noise = NoiseSpec::new(1.3, 0.0, 5).unwrap();
    let s = sem_synthesize(&TopologyMatrix::zeros(4, true), &noise, 7).unwrap();
    assert_eq!(s.values(), &draw_process_noise(&noise, 4, 7));
}

#[test]
fn sem_residual_against_dense_solve() {
    let mut rng = rng(8);
    let a = topology(random_contraction(&mut rng, 10, 0.8, true), true);
    let noise = NoiseSpec::new(1.0, 0.0, 21).unwrap();
    let s = sem_synthesize(&a, &noise, 15).unwrap();
    let e = draw_process_noise(&noise, 10, 15);
    let r = s.values() - a.entries() * s.values() - &e;
    assert!(r.amax() < 1e-12);
    let inv = (DMatrix::identity(10, 10) - a.entries()).try_inverse().unwrap();
    assert!((inv * e - s.values()).amax() < 1e-12);
}

#[test]
fn singular_sem_is_rejected() {
    let a = topology(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), true);
    let err = sem_synthesize(&a, &NoiseSpec::new(1.0, 0.0, 0).unwrap(), 3).unwrap_err();
    assert!(matches!(err, Error::SingularModel { .. }));
}

#[test]
fn rescaling_makes_sem_invertible() {
    let a = topology(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), true);
    let fixed = rescale_to_stable(&a);
    assert!(spectral_radius(fixed.entries()) < 1.0);
    sem_synthesize(&fixed, &NoiseSpec::new(1.0, 0.0, 0).unwrap(), 3).unwrap();
}

#[test]
fn svarm_degenerate_cases() {
    let z0 = DVector::from_column_slice(&[1.0, -1.0, 2.0]);
    let noise = NoiseSpec::new(0.7, 0.0, 4).unwrap();
    let s = svarm_synthesize(&TopologyMatrix::zeros(3, true), &TopologyMatrix::zeros(3, false), &z0, &noise, 5).unwrap();
    let e = draw_process_noise(&noise, 3, 6);
    for t in 1..=5 {
        assert_eq!(s.column(t), e.column(t));
    }

    let quiet = NoiseSpec::new(0.0, 0.0, 4).unwrap();
    let ident = topology(DMatrix::identity(3, 3), false);
    let s = svarm_synthesize(&TopologyMatrix::zeros(3, true), &ident, &z0, &quiet, 5).unwrap();
    for t in 0..=5 {
        assert_eq!(s.column(t), z0.column(0));
    }
    assert_eq!(s.initial_state(), Some(&z0));
}

#[test]
fn svarm_recursion_residual() {
    let mut rng = rng(9);
    let a0 = topology(random_contraction(&mut rng, 6, 0.4, true), true);
    let a1 = topology(random_contraction(&mut rng, 6, 0.5, false), false);
    let z0 = gauss_vector(&mut rng, 6);
    let noise = NoiseSpec::new(0.5, 0.0, 33).unwrap();
    let s = svarm_synthesize(&a0, &a1, &z0, &noise, 50).unwrap();
    let e = draw_process_noise(&noise, 6, 51);
    assert!((s.column(0) - &z0 - e.column(0)).amax() < 1e-12);
    for t in 1..=50 {
        let r = s.column(t) - a0.entries() * s.column(t) - a1.entries() * s.column(t - 1) - e.column(t);
        assert!(r.amax() < 1e-12);
    }
}

#[test]
fn observation_cases() {
    let mut rng = rng(2);
    let s = semiblind::SignalMatrix::new(gauss_matrix(&mut rng, 4, 3)).unwrap();
    let quiet = NoiseSpec::new(0.0, 0.0, 0).unwrap();
    let full = sample_observations(&s, &SamplingSchedule::full(4, 3), &quiet, &mut seeded(0)).unwrap();
    assert_eq!(full.scatter_all(), *s.values());

    let sched = SamplingSchedule::new(4, vec![vec![], vec![1, 3], vec![0]]).unwrap();
    let obs = sample_observations(&s, &sched, &quiet, &mut seeded(0)).unwrap();
    assert_eq!(obs.values(0).len(), 0);
    assert_eq!(obs.values(1).as_slice(), &[s.values()[(1, 1)], s.values()[(3, 1)]]);
    assert_eq!(obs.values(2).as_slice(), &[s.values()[(0, 2)]]);

    let short = SamplingSchedule::full(4, 2);
    assert!(matches!(sample_observations(&s, &short, &quiet, &mut seeded(0)), Err(Error::Shape(_))));
}

#[test]
fn schedule_cases() {
    let full = random_schedule(5, 5, 3, &mut seeded(1)).unwrap();
    assert!(full.slots().iter().all(|s| s == &vec![0, 1, 2, 3, 4]));
    let none = random_schedule(5, 0, 3, &mut seeded(1)).unwrap();
    assert!(none.slots().iter().all(Vec::is_empty));
    assert!(random_schedule(5, 6, 3, &mut seeded(1)).is_err());
}

#[test]
fn uniform_schedule_frequencies() {
    let s = random_schedule(81, 40, 100, &mut seeded(17)).unwrap();
    let mask = s.mask();
    for i in 0..81 {
        let hits = mask.row(i).iter().filter(|&&m| m).count();
        assert!(hits > 0);
        assert!((hits as f64 / 100.0 - 40.0 / 81.0).abs() <= 0.1, "node {i}: {hits}");
    }
}

#[test]
fn schedule_and_noise_json() {
    let s = SamplingSchedule::new(3, vec![vec![0, 2], vec![]]).unwrap();
    let text = serde_json::to_string(&s).unwrap();
    assert_eq!(text, r#"{"n":3,"slots":[[1,3],[]]}"#);
    assert_eq!(serde_json::from_str::<SamplingSchedule>(&text).unwrap(), s);
    assert!(serde_json::from_str::<SamplingSchedule>(r#"{"n":3,"slots":[[0]]}"#).is_err());
    assert!(serde_json::from_str::<SamplingSchedule>(r#"{"n":3,"slots":[[2,1]]}"#).is_err());

    let noise = NoiseSpec::new(1.0, 0.5, 9).unwrap();
    let text = serde_json::to_string(&noise).unwrap();
    assert_eq!(text, r#"{"process_sigma":1.0,"obs_sigma":0.5,"seed":9}"#);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sampled_adjacency_is_symmetric_with_zero_diagonal(seed in any::<u64>(), n in 1usize..12) {
        let mut r = seeded(seed);
        let prob = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 10) as f64 / 10.0);
        let a = sample_adjacency(&prob, &mut r).unwrap();
        prop_assert_eq!(a.entries(), &a.entries().transpose());
        prop_assert!(a.entries().diagonal().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn generators_are_deterministic(seed in any::<u64>()) {
        let prob = kronecker_expand(&KroneckerSpec::benchmark(2));
        let a = sample_adjacency(&prob, &mut seeded(seed)).unwrap();
        let b = sample_adjacency(&prob, &mut seeded(seed)).unwrap();
        prop_assert_eq!(a.entries(), b.entries());
        let lap = laplacian(a.entries());
        let s1 = bandlimited_signals(&lap, 3, 4, &mut seeded(seed)).unwrap();
        let s2 = bandlimited_signals(&lap, 3, 4, &mut seeded(seed)).unwrap();
        prop_assert_eq!(s1.values(), s2.values());
        let noise = NoiseSpec::new(1.0, 0.3, seed).unwrap();
        let x1 = sem_synthesize(&TopologyMatrix::zeros(3, true), &noise, 4).unwrap();
        let x2 = sem_synthesize(&TopologyMatrix::zeros(3, true), &noise, 4).unwrap();
        prop_assert_eq!(x1.values(), x2.values());
        let sch1 = random_schedule(9, 4, 5, &mut seeded(seed)).unwrap();
        let sch2 = random_schedule(9, 4, 5, &mut seeded(seed)).unwrap();
        prop_assert_eq!(&sch1, &sch2);
        let o1 = sample_observations(&s1.columns(0, 4).unwrap(), &random_schedule(9, 4, 4, &mut seeded(1)).unwrap(), &noise, &mut seeded(seed)).unwrap();
        let o2 = sample_observations(&s2.columns(0, 4).unwrap(), &random_schedule(9, 4, 4, &mut seeded(1)).unwrap(), &noise, &mut seeded(seed)).unwrap();
        prop_assert_eq!(o1, o2);
    }

    #[test]
    fn full_noiseless_sampling_is_identity(seed in any::<u64>(), n in 1usize..8, slots in 0usize..6) {
        let mut r = rng(seed);
        let s = semiblind::SignalMatrix::new(gauss_matrix(&mut r, n, slots)).unwrap();
        let obs = sample_observations(&s, &SamplingSchedule::full(n, slots), &NoiseSpec::new(0.0, 0.0, 0).unwrap(), &mut seeded(seed)).unwrap();
        prop_assert_eq!(&obs.scatter_all(), s.values());
    }

    #[test]
    fn sem_output_satisfies_the_model(seed in any::<u64>(), n in 2usize..9) {
        let mut r = rng(seed);
        let a = topology(random_contraction(&mut r, n, 0.9, true), true);
        let noise = NoiseSpec::new(1.0, 0.0, seed).unwrap();
        let s = sem_synthesize(&a, &noise, 6).unwrap();
        let e = draw_process_noise(&noise, n, 6);
        let res = s.values() - a.entries() * s.values() - e;
        prop_assert!(res.amax() < 1e-12);
    }
}
