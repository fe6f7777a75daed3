mod common;

use adatrans::solvers::{
    admm_linf_constrained, quadratic_lasso_cd, weighted_lasso_cd, AdmmSettings, CdSettings, LinfConstraint,
    QuadraticLasso, QuadraticLoss, WeightedLasso,
};
use common::{gaussian, gaussian_vec, lasso_kkt, rng};
use nalgebra::DVector;
use proptest::prelude::*;

fn tight() -> CdSettings<f64> {
    CdSettings {
        tol: 1e-12,
        max_iter: 100_000,
        active_set: true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lasso_solution_satisfies_recomputed_kkt(seed in 0u64..10_000, n in 5usize..40, p in 1usize..30, scale in 0.0f64..1.0) {
        let mut r = rng(seed);
        let x = gaussian(&mut r, n, p);
        let y = gaussian_vec(&mut r, n);
        let pw = DVector::from_fn(p, |j, _| scale * (1 + j % 3) as f64 / 3.0);
        let fit = weighted_lasso_cd(&WeightedLasso::new(&x, &y, &pw, n as f64), &CdSettings::default(), None).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(fit.kkt_residual <= 1e-6);
        prop_assert!(lasso_kkt(&x, &y, &pw, n as f64, &fit.theta) <= 1e-6);
    }

    #[test]
    fn gram_and_design_forms_agree(seed in 0u64..10_000, n in 10usize..40, p in 1usize..15, lam in 0.01f64..0.5) {
        let mut r = rng(seed);
        let x = gaussian(&mut r, n, p);
        let y = gaussian_vec(&mut r, n);
        let pw = DVector::from_element(p, lam);
        let a = weighted_lasso_cd(&WeightedLasso::new(&x, &y, &pw, n as f64), &tight(), None).unwrap();
        let loss = QuadraticLoss::least_squares(&x, &y, None, n as f64);
        let b = quadratic_lasso_cd(
            &QuadraticLasso { hessian: &loss.hessian, linear: &loss.linear, penalty_weights: &pw },
            &tight(),
            None,
        )
        .unwrap();
        prop_assert!((&a.theta - &b.theta).amax() < 1e-8);
    }

    #[test]
    fn admm_respects_the_box(seed in 0u64..10_000, shrink in 0.05f64..0.9) {
        let mut r = rng(seed);
        let (n, p) = (30, 8);
        let x = gaussian(&mut r, n, p);
        let y = gaussian_vec(&mut r, n);
        let loss = QuadraticLoss::least_squares(&x, &y, None, n as f64);
        let pw = DVector::from_element(p, 0.3);
        let map = x.transpose() * &x / n as f64;
        let offset = x.transpose() * &y / n as f64;
        let radius = shrink * offset.amax();
        let constraint = LinfConstraint { map, offset, radius, block: 0..p };
        let fit = admm_linf_constrained(&loss, &constraint, &pw, &AdmmSettings::default(), None).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(constraint.violation(&fit.theta) <= 1e-5);
        prop_assert!(fit.kkt_residual <= 1e-6);
    }
}
