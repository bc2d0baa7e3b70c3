use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ctdopt::reduce::{als_sweep, norm_of_difference, reduce, s_norm, NormKind, ReductionAlgorithm, ReductionConfig};
use ctdopt::{random_ctd, Ctd};

fn dense_error(u: &Ctd, v: &Ctd) -> f64 {
    let (du, dv) = (u.to_dense().unwrap(), v.to_dense().unwrap());
    let diff: f64 = du.data.iter().zip(&dv.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    diff / du.norm()
}

fn matrix(u: &Ctd) -> DMatrix<f64> {
    let d = u.to_dense().unwrap();
    DMatrix::from_fn(u.modes()[0], u.modes()[1], |i, k| d.get(&[i, k]))
}

/// A random signed core whose terms are repeated with random positive
/// weights and, optionally, a little noise on the copies.
fn redundant(modes: &[usize], base: usize, copies: usize, noise: f64, seed: u64) -> Ctd {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core = Ctd::random(modes, base, -1.0, 1.0, &mut rng).unwrap();
    let mut out = core.clone();
    for _ in 1..copies {
        let factors: Vec<DMatrix<f64>> =
            core.factors().iter().map(|f| f.map(|x| x + noise * rng.random_range(-1.0..1.0))).collect();
        let s: Vec<f64> = core.svalues().iter().map(|s| s * rng.random_range(0.1..2.0)).collect();
        out = out.add(&Ctd::from_parts(modes.to_vec(), s, factors).unwrap()).unwrap();
    }
    out
}

fn instance() -> impl Strategy<Value = Ctd> {
    (prop::collection::vec(2usize..=6, 2..=4), 1usize..=3, 1usize..=4, prop::sample::select(vec![0.0, 1e-9, 1e-3]), any::<u64>())
        .prop_map(|(modes, base, copies, noise, seed)| redundant(&modes, base, copies, noise, seed))
}

fn algorithm() -> impl Strategy<Value = ReductionAlgorithm> {
    prop::sample::select(vec![ReductionAlgorithm::Interpolative, ReductionAlgorithm::Als])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, rng_seed: RngSeed::Fixed(7), failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn never_increases_rank_nor_violates_bound(u in instance(), alg in algorithm(), eps in prop::sample::select(vec![1e-2, 1e-4, 1e-6])) {
        let r = reduce(&u, &ReductionConfig::new(eps, NormKind::Frobenius, alg)).unwrap();
        prop_assert!(r.ctd.rank() <= u.rank());
        prop_assert!(r.meta.tolerance_met);
        let err = dense_error(&u, &r.ctd);
        prop_assert!(err <= eps * (1.0 + 1e-9) + 1e-13, "dense error {err:e} above {eps:e}");
        prop_assert!(r.meta.relative_error + 1e-7 >= err, "reported {:e} below dense {err:e}", r.meta.relative_error);
    }

    #[test]
    fn idempotent_in_rank(u in instance(), alg in algorithm()) {
        let cfg = ReductionConfig::new(1e-5, NormKind::Frobenius, alg);
        let once = reduce(&u, &cfg).unwrap().ctd;
        let twice = reduce(&once, &cfg).unwrap().ctd;
        prop_assert_eq!(twice.rank(), once.rank());
        prop_assert!(dense_error(&u, &twice) <= 2e-5 * (1.0 + 1e-9));
    }

    #[test]
    fn als_pass_never_increases_error(u in instance(), seed in any::<u64>(), rank in 1usize..=3) {
        let mut v = random_ctd(u.modes(), rank, -1.0, 1.0, seed).unwrap();
        let mut previous = dense_error(&u, &v);
        for _ in 0..3 {
            for j in 0..u.dims() {
                v = als_sweep(&u, &v, j, 1e-14).unwrap();
            }
            let err = dense_error(&u, &v);
            // The ridge and the Gram arithmetic allow roundoff-level increases.
            prop_assert!(err <= previous * (1.0 + 1e-9) + 1e-9, "{err:e} after {previous:e}");
            previous = err;
        }
    }

    #[test]
    fn s_norm_is_homogeneous(u in instance(), c in prop::sample::select(vec![-7.5, -1.0, 1e-3, 2.0, 1e4])) {
        let s = s_norm(&u);
        prop_assert!((s_norm(&u.scale(c)) - c.abs() * s).abs() <= 1e-10 * c.abs() * s);
    }

    #[test]
    fn s_norm_bounds(u in instance()) {
        let s = s_norm(&u);
        let d = u.to_dense().unwrap();
        let max_entry = d.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        prop_assert!(s <= u.frobenius_norm() * (1.0 + 1e-12));
        prop_assert!(s >= max_entry * (1.0 - 1e-12));
    }

    #[test]
    fn matrix_s_norm_reduction_meets_spectral_bound(seed in any::<u64>(), m in 3usize..=8, n in 3usize..=8, base in 1usize..=3) {
        let u = redundant(&[m, n], base, 3, 1e-7, seed);
        let eps = 1e-6;
        let r = reduce(&u, &ReductionConfig::new(eps, NormKind::SNorm, ReductionAlgorithm::Interpolative)).unwrap();
        let top = |a: &DMatrix<f64>| a.singular_values().max();
        let err = top(&(matrix(&u) - matrix(&r.ctd))) / top(&matrix(&u));
        prop_assert!(err <= eps * (1.0 + 1e-9), "{err:e}");
        prop_assert!(r.ctd.rank() <= u.rank());
    }
}

#[test]
fn duplicates_collapse_to_the_core() {
    for seed in 0..10 {
        let u = redundant(&[5, 4, 6], 3, 4, 0.0, seed);
        for (alg, eps) in [(ReductionAlgorithm::Interpolative, 1e-8), (ReductionAlgorithm::Als, 1e-6)] {
            let r = reduce(&u, &ReductionConfig::new(eps, NormKind::Frobenius, alg)).unwrap();
            assert_eq!(r.ctd.rank(), 3, "seed {seed}, {alg:?}");
            assert!(dense_error(&u, &r.ctd) <= eps);
        }
    }
}

#[test]
fn full_rank_input_comes_back() {
    let u = random_ctd(&[8, 8, 8], 4, -1.0, 1.0, 3).unwrap();
    let r = reduce(&u, &ReductionConfig::default()).unwrap();
    assert!(r.meta.returned_input);
    assert_eq!(r.ctd.rank(), 4);
    assert_eq!(r.meta.relative_error, 0.0);
}

#[test]
fn rank_cap_is_honoured() {
    let u = random_ctd(&[6, 6, 6], 6, -1.0, 1.0, 9).unwrap();
    for alg in [ReductionAlgorithm::Interpolative, ReductionAlgorithm::Als] {
        let cfg = ReductionConfig { max_rank: Some(2), ..ReductionConfig::new(1e-6, NormKind::Frobenius, alg) };
        let r = reduce(&u, &cfg).unwrap();
        assert!(r.ctd.rank() <= 2, "{alg:?}");
        assert!(!r.meta.tolerance_met);
        assert!(r.meta.warnings.iter().any(|w| w.contains("not met")));
        assert!((dense_error(&u, &r.ctd) - r.meta.relative_error).abs() <= 1e-6);
    }
}

#[test]
fn tiny_frobenius_tolerance_warns() {
    let u = redundant(&[4, 4], 2, 2, 0.0, 1);
    let below = |r: &ctdopt::reduce::Reduction| r.meta.warnings.iter().any(|w| w.contains("below"));
    let r = reduce(&u, &ReductionConfig::new(1e-10, NormKind::Frobenius, ReductionAlgorithm::Interpolative)).unwrap();
    assert!(below(&r));
    let r = reduce(&u, &ReductionConfig::new(1e-10, NormKind::SNorm, ReductionAlgorithm::Interpolative)).unwrap();
    assert!(!below(&r));
    assert_eq!(r.ctd.rank(), 2);
}

#[test]
fn invalid_configs_are_rejected() {
    let u = random_ctd(&[3, 3], 2, 0.0, 1.0, 0).unwrap();
    for cfg in [
        ReductionConfig { epsilon: 0.0, ..Default::default() },
        ReductionConfig { epsilon: f64::NAN, ..Default::default() },
        ReductionConfig { max_rank: Some(0), ..Default::default() },
        ReductionConfig { als_max_sweeps: 0, ..Default::default() },
    ] {
        assert!(reduce(&u, &cfg).is_err());
    }
}

#[test]
fn zero_input() {
    let z = Ctd::zero(&[3, 4]).unwrap();
    let r = reduce(&z, &ReductionConfig::default()).unwrap();
    assert_eq!(r.ctd.rank(), 0);
    assert!(r.meta.tolerance_met);
}

#[test]
fn deterministic() {
    let u = redundant(&[6, 5, 4], 3, 3, 1e-4, 5);
    for alg in [ReductionAlgorithm::Interpolative, ReductionAlgorithm::Als] {
        let cfg = ReductionConfig::new(1e-3, NormKind::Frobenius, alg);
        let a = reduce(&u, &cfg).unwrap();
        let b = reduce(&u, &cfg).unwrap();
        assert_eq!(a.ctd.svalues(), b.ctd.svalues());
        assert_eq!(a.ctd.factors(), b.ctd.factors());
        assert_eq!(a.meta, b.meta);
    }
}

#[test]
fn large_inputs_are_screened_and_blocked() {
    // 600 terms: 8 distinct directions, each repeated, plus tiny terms that
    // screening can drop.
    let modes = [6, 5, 6, 4];
    let mut u = redundant(&modes, 8, 70, 1e-9, 17);
    u = u.add(&random_ctd(&modes, 40, -1.0, 1.0, 18).unwrap().scale(1e-12)).unwrap();
    assert_eq!(u.rank(), 600);
    for eps in [1e-4, 1e-6] {
        let r = reduce(&u, &ReductionConfig::new(eps, NormKind::Frobenius, ReductionAlgorithm::Interpolative)).unwrap();
        let err = dense_error(&u, &r.ctd);
        assert!(r.meta.tolerance_met);
        assert!(err <= eps, "{err:e}");
        assert!(r.meta.relative_error + 1e-12 >= err);
        assert!(r.ctd.rank() <= 40, "rank {}", r.ctd.rank());
    }
}

#[test]
fn difference_norms() {
    let u = random_ctd(&[5, 6], 3, -1.0, 1.0, 2).unwrap();
    let v = random_ctd(&[5, 6], 2, -1.0, 1.0, 3).unwrap();
    let diff = matrix(&u) - matrix(&v);
    let f = norm_of_difference(&u, &v, NormKind::Frobenius).unwrap();
    assert!((f - diff.norm()).abs() <= 1e-12 * diff.norm());
    let s = norm_of_difference(&u, &v, NormKind::SNorm).unwrap();
    let top = diff.singular_values().max();
    assert!((s - top).abs() <= 1e-8 * top);
}
