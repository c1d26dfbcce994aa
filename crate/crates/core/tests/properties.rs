//! Structural invariants over randomly drawn forms.

use degsemi::counterexamples::{block_swap_operator, cayley_resolvent};
use degsemi::homogenization::{homogenize, PeriodicCoefficientField};
use degsemi::linalg::{c64, real, CMat, CVec, C64};
use degsemi::metrics::{resolvent_metric, wot_semigroup_metric, ResolventMode};
use degsemi::probes::{random_complex_matrix, random_complex_vector, random_hermitian_psd};
use degsemi::trace::ConvergenceTrace;
use degsemi::{assemble_form_operator, FormOperator, ProbeSet, SemigroupEvaluator, SubspaceBasis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sectorial form on a random `m`-dimensional subspace of `C^n`.
fn random_form(seed: u64, n: usize, m: usize, skew: f64) -> FormOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = random_complex_matrix(&mut rng, n, m);
    let mut k = random_hermitian_psd(&mut rng, m, 1.0);
    let s = random_complex_matrix(&mut rng, m, m);
    k += (&s - s.adjoint()) * real(skew);
    assemble_form_operator(SubspaceBasis::new(b).unwrap(), k).unwrap()
}

fn config() -> ProptestConfig {
    ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(32)
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn resolvent_identity(seed in any::<u64>(), n in 2usize..8, skew in 0.0f64..1.0, a in 0.5f64..3.0, b in -2.0f64..2.0) {
        let m = 1 + (seed as usize % n);
        let op = random_form(seed, n, m, skew);
        let ev = SemigroupEvaluator::new(op).unwrap();
        let shift = ev.bound().omega.max(0.0);
        let (l1, l2) = (c64(shift + a, b), c64(shift + 2.0 * a, -b));
        let f = random_complex_vector(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), n);
        let r1 = ev.resolvent_apply(l1, &f).unwrap();
        let r2 = ev.resolvent_apply(l2, &f).unwrap();
        let lhs = &r1 - &r2;
        let rhs = ev.resolvent_apply(l1, &r2).unwrap() * (l2 - l1);
        prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + f.norm()));
    }

    #[test]
    fn projection_algebra(seed in any::<u64>(), n in 2usize..8) {
        let m = 1 + (seed as usize % n);
        let op = random_form(seed, n, m, 0.3);
        let f = random_complex_vector(&mut ChaCha8Rng::seed_from_u64(seed ^ 2), n);
        let g = random_complex_vector(&mut ChaCha8Rng::seed_from_u64(seed ^ 3), n);
        let pf = op.orthogonal_projection(&f);
        prop_assert!((op.orthogonal_projection(&pf) - &pf).norm() <= 1e-10 * f.norm());
        let pg = op.orthogonal_projection(&g);
        let sym = pf.dotc(&g) - f.dotc(&pg);
        prop_assert!(sym.norm() <= 1e-10 * f.norm() * g.norm());
        // P f lies in the range of the basis
        let b = op.basis().columns().clone();
        let coeffs = (b.adjoint() * &b).lu().solve(&(b.adjoint() * &pf)).unwrap();
        prop_assert!((b * coeffs - &pf).norm() <= 1e-8 * f.norm());
    }

    #[test]
    fn semigroup_law_and_bound(seed in any::<u64>(), n in 2usize..7, s in 0.01f64..1.0, t in 0.01f64..1.0) {
        let m = 1 + (seed as usize % n);
        let ev = SemigroupEvaluator::new(random_form(seed, n, m, 0.5)).unwrap();
        let f = random_complex_vector(&mut ChaCha8Rng::seed_from_u64(seed ^ 4), n);
        let st = ev.apply(t, &f).unwrap();
        let composed = ev.apply(s, &st).unwrap();
        let direct = ev.apply(s + t, &f).unwrap();
        prop_assert!((composed - &direct).norm() <= 1e-9 * f.norm());
        let bound = ev.bound();
        prop_assert!(direct.norm() <= bound.constant * (bound.omega * (s + t)).exp() * f.norm() * (1.0 + 1e-9));
        let perp = &f - ev.projection(&f);
        prop_assert!(ev.apply(t, &perp).unwrap().norm() <= 1e-9 * f.norm());
    }

    #[test]
    fn metrics_vanish_on_identical_pairs(seed in any::<u64>(), n in 2usize..6) {
        let ev = SemigroupEvaluator::new(random_form(seed, n, n, 0.4)).unwrap();
        let probes = ProbeSet::standard(n, seed).unwrap();
        prop_assert_eq!(wot_semigroup_metric(&ev, &ev, 0.7, &probes).unwrap(), 0.0);
        prop_assert_eq!(resolvent_metric(&ev, &ev, c64(1.0, 1.0), &probes, ResolventMode::Sot).unwrap(), 0.0);
    }

    #[test]
    fn metrics_grow_with_probe_sets(seed in any::<u64>(), n in 3usize..7, extra in 1usize..6) {
        let a = SemigroupEvaluator::new(random_form(seed, n, n, 0.2)).unwrap();
        let b = SemigroupEvaluator::new(random_form(seed ^ 7, n, n - 1, 0.2)).unwrap();
        let small = ProbeSet::new(n, 2, 2, seed).unwrap();
        let large = ProbeSet::new(n, 2, 2 + extra, seed).unwrap();
        let lambda = c64(1.0, 0.5);
        for mode in [ResolventMode::Sot, ResolventMode::Wot] {
            let lo = resolvent_metric(&a, &b, lambda, &small, mode).unwrap();
            let hi = resolvent_metric(&a, &b, lambda, &large, mode).unwrap();
            prop_assert!(lo <= hi);
        }
        prop_assert!(wot_semigroup_metric(&a, &b, 0.5, &small).unwrap() <= wot_semigroup_metric(&a, &b, 0.5, &large).unwrap());
    }

    #[test]
    fn homogenized_between_means(seed in any::<u64>(), pieces in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..pieces).map(|_| 0.5 + 4.0 * rand::Rng::random::<f64>(&mut rng)).collect();
        let m = 16 * pieces;
        let field = PeriodicCoefficientField::from_fn_1d(m, |x| values[((x * pieces as f64) as usize).min(pieces - 1)]).unwrap();
        let c = homogenize(&field).unwrap().1.scalar();
        let harmonic = field.harmonic_mean();
        let arithmetic = field.arithmetic_mean()[0][0];
        prop_assert!((c - harmonic).abs() <= 1e-10 * harmonic);
        prop_assert!(harmonic <= arithmetic * (1.0 + 1e-12));
    }

    #[test]
    fn block_swap_closed_form(n in 1usize..12, slack in 0usize..5, seed in any::<u64>()) {
        let fam = block_swap_operator(n, 2 * n + slack).unwrap();
        let f = random_complex_vector(&mut ChaCha8Rng::seed_from_u64(seed), 2 * n + slack);
        let op = fam.form_operator().unwrap();
        let dense = op.resolvent_apply(C64::new(1.0, 0.0), &f).unwrap();
        prop_assert!((cayley_resolvent(&fam, &f) - dense).norm() <= 1e-12 * f.norm());
    }

    #[test]
    fn params_hash_is_order_independent(a in 0.0f64..10.0, b in 0usize..100) {
        let mut t1 = ConvergenceTrace::new("x", "n", vec![1.0]);
        t1.param("a", a);
        t1.param("b", b);
        let mut t2 = ConvergenceTrace::new("x", "n", vec![1.0]);
        t2.param("b", b);
        t2.param("a", a);
        prop_assert_eq!(t1.params_hash(), t2.params_hash());
        prop_assert_eq!(t1.params_hash().len(), 16);
    }
}

#[test]
fn csv_is_byte_stable() {
    let mut t = ConvergenceTrace::new("demo", "n", vec![1.0, 2.0]);
    t.param("seed", 3);
    t.insert("RESOLVENT_SOT", vec![0.5, 0.25]).unwrap();
    let csv = t.to_csv();
    assert_eq!(csv, t.clone().to_csv());
    let first = csv.lines().nth(1).unwrap();
    assert!(first.starts_with("1,RESOLVENT_SOT,5.0000000000000000e-1,"), "{first}");
    let _ = CVec::zeros(1);
    let _ = CMat::zeros(1, 1);
}
