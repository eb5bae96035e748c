mod common;

use cesdetect::detectors::{evaluate, DetectorKind, WaldScatter};
use cesdetect::estimators::MmlFit;
use cesdetect::linalg::{logdet, quad_form, solve, unvecs, vecs};
use cesdetect::{Dataset, HermitianMatrix, C64};
use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

/// Real symmetric embedding `[[Re H, −Im H], [Im H, Re H]]`; its eigenvalues
/// are those of `H`, each twice.
fn real_embedding(h: &HermitianMatrix) -> DMatrix<f64> {
    let n = h.dim();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = h.get(i % n, j % n);
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

fn random_dataset(seed: u64, n: usize, m1: usize, m0: usize) -> Dataset {
    let mut r = rng(seed);
    let steering = random_cvector(n, &mut r);
    let primary = (0..m1).map(|_| random_cvector(n, &mut r)).collect();
    let secondary = (0..m0).map(|_| random_cvector(n, &mut r)).collect();
    Dataset::new(primary, secondary, steering).unwrap()
}

fn rotate(d: &Dataset, u: &[C64]) -> Dataset {
    Dataset::new(
        d.primary.iter().map(|x| apply(u, x)).collect(),
        d.secondary.iter().map(|x| apply(u, x)).collect(),
        apply(u, &d.steering),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vecs_roundtrip_is_bit_exact(seed in any::<u64>(), n in 1usize..9) {
        let h = random_pd(n, &mut rng(seed));
        let back = unvecs(&vecs(&h)).unwrap();
        prop_assert_eq!(&back, &h);
        let mu = vecs(&h);
        prop_assert_eq!(vecs(&unvecs(&mu).unwrap()), mu);
    }

    #[test]
    fn solve_recovers_rhs(seed in any::<u64>(), n in 1usize..9) {
        let mut r = rng(seed);
        let h = random_pd(n, &mut r);
        let b = random_cvector(n, &mut r);
        let x = solve(&h, &b).unwrap();
        let hb = h.mul_vec(&x);
        let err = hb.iter().zip(b.iter()).map(|(a, c)| (a - c).norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-10 * b.norm_sqr().sqrt(), "residual {}", err);
    }

    #[test]
    fn logdet_matches_eigenvalues(seed in any::<u64>(), n in 1usize..9) {
        let h = random_pd(n, &mut rng(seed));
        let eig = SymmetricEigen::new(real_embedding(&h)).eigenvalues;
        let reference = 0.5 * eig.iter().map(|l| l.ln()).sum::<f64>();
        let got = logdet(&h).unwrap();
        prop_assert!((got - reference).abs() <= 1e-8 * reference.abs().max(1.0), "{} vs {}", got, reference);
    }

    #[test]
    fn quad_form_is_real_positive(seed in any::<u64>(), n in 1usize..9) {
        let mut r = rng(seed);
        let h = random_pd(n, &mut r);
        let a = random_cvector(n, &mut r);
        let q = quad_form(&h, &a, &a).unwrap();
        prop_assert!(q.re > 0.0);
        prop_assert!(q.im.abs() < 1e-10 * q.re);
    }

    #[test]
    fn detectors_are_scale_invariant(seed in any::<u64>(), n in 2usize..7, log_c in -3.0f64..3.0) {
        let c = 10f64.powf(log_c);
        let d = random_dataset(seed, n, 1, 2 * n + 1);
        let scaled = d.scaled(c);
        for scatter in [WaldScatter::T1AtEtaHat, WaldScatter::S0OverM0] {
            let a = evaluate(&d, &DetectorKind::ALL, scatter).unwrap();
            let b = evaluate(&scaled, &DetectorKind::ALL, scatter).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(rel_close(x.statistic, y.statistic, 1e-10) || (x.statistic < 1e-12 && y.statistic < 1e-12),
                    "{:?}: {} vs {}", x.detector, x.statistic, y.statistic);
            }
        }
    }

    #[test]
    fn detectors_are_unitary_invariant(seed in any::<u64>(), n in 2usize..7, m1 in 1usize..5) {
        let d = random_dataset(seed, n, m1, 3 * n);
        let u = random_unitary(n, &mut rng(seed ^ 0xabcdef));
        let r = rotate(&d, &u);
        let kinds: Vec<DetectorKind> = if m1 == 1 { DetectorKind::ALL.to_vec() } else { vec![DetectorKind::Mglrt, DetectorKind::Wald] };
        for scatter in [WaldScatter::T1AtEtaHat, WaldScatter::S0OverM0] {
            let a = evaluate(&d, &kinds, scatter).unwrap();
            let b = evaluate(&r, &kinds, scatter).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(rel_close(x.statistic, y.statistic, 1e-10) || (x.statistic < 1e-12 && y.statistic < 1e-12),
                    "{:?}: {} vs {}", x.detector, x.statistic, y.statistic);
            }
        }
    }

    #[test]
    fn estimators_rotate_with_the_data(seed in any::<u64>(), n in 2usize..7, m1 in 1usize..6) {
        let d = random_dataset(seed, n, m1, 2 * n);
        let u = random_unitary(n, &mut rng(!seed));
        let a = MmlFit::new(&d).unwrap();
        let b = MmlFit::new(&rotate(&d, &u)).unwrap();
        let scale = a.alpha_hat().norm().max(1.0);
        prop_assert!((a.alpha_hat() - b.alpha_hat()).norm() <= 1e-10 * scale);
        for (x, y) in [(&a.s0, &b.s0), (&a.t0, &b.t0), (&a.t1, &b.t1)] {
            let rotated = x.congruence(&u).unwrap();
            prop_assert!(rotated.max_abs_diff(y) <= 1e-10 * x.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn statistics_are_nonnegative_with_two_dof(seed in any::<u64>(), n in 2usize..6) {
        let d = random_dataset(seed, n, 1, n + 1);
        for out in evaluate(&d, &DetectorKind::ALL, WaldScatter::T1AtEtaHat).unwrap() {
            prop_assert!(out.statistic >= 0.0 && out.statistic.is_finite());
            prop_assert_eq!(out.dof, 2);
        }
    }
}

#[test]
fn steering_scale_does_not_change_statistics() {
    let d = random_dataset(7, 4, 1, 12);
    let scaled = Dataset::new(d.primary.clone(), d.secondary.clone(), d.steering.scaled(C64::new(0.0, 3.0))).unwrap();
    let a = evaluate(&d, &DetectorKind::ALL, WaldScatter::T1AtEtaHat).unwrap();
    let b = evaluate(&scaled, &DetectorKind::ALL, WaldScatter::T1AtEtaHat).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(rel_close(x.statistic, y.statistic, 1e-10), "{:?}", x.detector);
    }
}
