//! Randomized properties of the discrete flow, the cost and the gradient.

mod common;

use proptest::prelude::*;
use qspline::adjoint::cost_and_gradient;
use qspline::coherent::{veronese, SymmetricBasis};
use qspline::forward::{cost, cost_breakdown, integrate};
use qspline::lie::su_basis;

use common::{fd_gradient_oracle, random_problem, random_state, relative_error, rng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_stays_special_unitary_and_transports_the_state(seed in any::<u64>(), n in 1usize..=2) {
        let mut r = rng(seed);
        let p = random_problem(&mut r, n, 2, 30);
        let path = integrate(&p.spec, &p.m0, &p.l0).unwrap();
        for (u, psi) in path.u.iter().zip(&path.psi) {
            let (unitarity, det) = u.defects();
            prop_assert!(unitarity < 1e-10 && det < 1e-10);
            let moved = u.apply(p.spec.psi0().amplitudes());
            prop_assert!((moved - psi.amplitudes()).norm() < 1e-12);
        }
    }

    #[test]
    fn cost_is_nonnegative_and_splits(seed in any::<u64>(), n in 1usize..=2) {
        let mut r = rng(seed);
        let p = random_problem(&mut r, n, 3, 45);
        let path = integrate(&p.spec, &p.m0, &p.l0).unwrap();
        let c = cost_breakdown(&path);
        prop_assert!(c.control >= 0.0 && c.sum_sq_distance >= 0.0);
        let sigma = p.spec.sigma();
        prop_assert!((c.mismatch - c.sum_sq_distance / (2.0 * sigma * sigma)).abs() <= 1e-12 * c.mismatch.max(1.0));
        prop_assert!((c.total() - cost(&path)).abs() <= 1e-12 * c.total());
    }

    #[test]
    fn adjoint_gradient_matches_brute_force(seed in any::<u64>(), n in 1usize..=2) {
        let mut r = rng(seed);
        let p = random_problem(&mut r, n, 2, 20);
        let (_, g, _) = cost_and_gradient(&p.spec, &p.m0, &p.l0).unwrap();
        let basis = su_basis(n);
        let mut adj = g.wrt_m0.coordinates(&basis);
        adj.extend(g.wrt_l0.coordinates(&basis));
        let fd = fd_gradient_oracle(&p.spec, &p.m0, &p.l0, 1e-5);
        prop_assert!(relative_error(&adj, &fd) < 1e-6);
    }

    #[test]
    fn veronese_overlap_law(seed in any::<u64>(), d in 2usize..=4, k in 1usize..=5) {
        let mut r = rng(seed);
        let basis = SymmetricBasis::new(d, k).unwrap();
        let (a, b) = (random_state(&mut r, d), random_state(&mut r, d));
        let va = veronese(&a, &basis).unwrap();
        let vb = veronese(&b, &basis).unwrap();
        prop_assert!((va.amplitudes().norm() - 1.0).abs() < 1e-12);
        prop_assert!((va.overlap(&vb) - a.overlap(&b).powu(k as u32)).norm() < 1e-12);
    }
}
