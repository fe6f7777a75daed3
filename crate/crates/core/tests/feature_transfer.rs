mod common;

use adatrans::cv::lasso_cv;
use adatrans::datagen::{make_ground_truth, sample_problem, SettingSpec};
use adatrans::feature_transfer::{
    feature_lambdas, fit_f_adatrans, fit_f_adatrans_auto, fit_initial, fit_pilot, stack_design, FConfig, Pilot,
};
use adatrans::model::TransferProblem;
use adatrans::penalty::{FeatureWeights, SCAD_A};
use adatrans::solvers::{weighted_lasso_cd, CdSettings, WeightedLasso};
use common::{lasso_kkt, problem, stacked};
use nalgebra::DVector;
use proptest::prelude::*;

fn tight() -> CdSettings<f64> {
    CdSettings {
        tol: 1e-12,
        max_iter: 100_000,
        active_set: true,
    }
}

#[test]
fn fused_pilot_without_sources_is_cross_validated_lasso() {
    for seed in 0..4 {
        let pb = problem(seed, 30, 60, 1, 0);
        let config = FConfig {
            seed,
            ..FConfig::default()
        };
        let pilot = fit_pilot(&pb, &config).unwrap();
        let t = pb.target();
        let cv = lasso_cv(&t.x, &t.y, &config.grid, config.folds, config.seed, &config.cd).unwrap();
        assert_eq!(pilot.target_c, cv.c);
        assert!((&pilot.estimate.beta_hat - &cv.fit.theta).amax() < 1e-6);
        assert!(pilot.estimate.delta_hats.is_empty());
    }
}

#[test]
fn prohibitive_contrast_penalty_pools_the_samples() {
    let pb = problem(3, 20, 30, 40, 2);
    let (p, n) = (pb.p(), pb.n_total() as f64);
    let lambda0 = 0.1;
    let weights = FeatureWeights::ones(p, pb.k(), lambda0, 1e6);
    let fused = fit_f_adatrans(&pb, &weights, &tight(), None).unwrap();
    assert!(fused.delta_hats.iter().all(|d| d.iter().all(|v| *v == 0.0)));

    let mut x = nalgebra::DMatrix::zeros(pb.n_total(), p);
    let mut row = 0;
    for t in pb.tasks() {
        x.view_mut((row, 0), (t.n(), p)).copy_from(&t.x);
        row += t.n();
    }
    let y = DVector::from_iterator(pb.n_total(), pb.tasks().flat_map(|t| t.y.iter().copied()));
    let pw = DVector::from_element(p, lambda0);
    let pooled = weighted_lasso_cd(&WeightedLasso::new(&x, &y, &pw, n), &tight(), None).unwrap();
    assert!((&fused.beta_hat - &pooled.theta).amax() < 1e-8);
}

#[test]
fn data_driven_fit_is_deterministic_and_sound() {
    let pb = problem(11, 40, 40, 120, 2);
    for pilot in [Pilot::Fused, Pilot::TaskLasso] {
        let config = FConfig {
            pilot,
            seed: 5,
            ..FConfig::default()
        };
        let a = fit_f_adatrans_auto(&pb, &config).unwrap();
        let b = fit_f_adatrans_auto(&pb, &config).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert!(a.estimate.converged);
        assert!(config.grid.contains(&a.c));
        // The reported fit satisfies its own optimality conditions.
        let st = stack_design(&pb);
        let pw = st.penalty_weights(&a.weights).unwrap();
        let theta = st.pack(&a.estimate.beta_hat, &a.estimate.delta_hats);
        assert!(lasso_kkt(&st.a, &st.b, &pw, pb.n_total() as f64, &theta) < 1e-6);
    }
}

/// How often the per-task pilot lands within `aλ₁/2` of the first contrast
/// at default sizes. Printed, not asserted: it is a diagnostic of the
/// pilot, not a guarantee.
#[test]
fn task_lasso_pilot_localizability_is_reported() {
    let seeds = 4;
    let mut local = 0;
    for seed in 0..seeds {
        let spec = SettingSpec {
            seed,
            ..SettingSpec::feature_wise()
        };
        let truth = make_ground_truth::<f64>(&spec).unwrap();
        let pb = sample_problem(&spec, &truth).unwrap();
        let config = FConfig {
            seed,
            ..FConfig::default()
        };
        let init = fit_initial(&pb, &config).unwrap();
        let (_, l1) = feature_lambdas::<f64>(init.target_c, pb.p(), pb.n_total(), pb.n_s());
        let dev = (&init.estimate.delta_hats[0] - &truth.deltas[0]).amax();
        assert!(dev.is_finite());
        local += usize::from(dev < 0.5 * SCAD_A * l1);
    }
    println!("localizable on {local}/{seeds} seeds");
}

fn fused_objective(pb: &TransferProblem<f64>, w: &FeatureWeights<f64>, beta: &DVector<f64>, deltas: &[DVector<f64>]) -> f64 {
    let (a, b) = stacked(pb);
    let mut theta = beta.clone().data.as_vec().clone();
    for d in deltas {
        theta.extend(d.iter());
    }
    let theta = DVector::from_vec(theta);
    let mut pen = w.lambda0 * w.w0.zip_map(beta, |wj, bj| wj * bj.abs()).sum();
    for (wk, d) in w.wk.iter().zip(deltas) {
        pen += w.lambda1 * wk.zip_map(d, |wj, dj| wj * dj.abs()).sum();
    }
    (&b - &a * theta).norm_squared() / pb.n_total() as f64 + pen
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fused_fit_beats_perturbations(seed in 0u64..1000, c in 0.1f64..3.0, j in 0usize..12, step in -0.05f64..0.05) {
        let pb = problem(seed, 12, 20, 25, 2);
        let (l0, l1) = feature_lambdas::<f64>(c, pb.p(), pb.n_total(), pb.n_s());
        let mut w = FeatureWeights::ones(pb.p(), pb.k(), l0, l1);
        w.w0[seed as usize % 12] = 0.0;
        let est = fit_f_adatrans(&pb, &w, &tight(), None).unwrap();
        let best = fused_objective(&pb, &w, &est.beta_hat, &est.delta_hats);
        let mut beta = est.beta_hat.clone();
        beta[j] += step;
        prop_assert!(fused_objective(&pb, &w, &beta, &est.delta_hats) >= best - 1e-12);
        let mut deltas = est.delta_hats.clone();
        deltas[1][j] += step;
        prop_assert!(fused_objective(&pb, &w, &est.beta_hat, &deltas) >= best - 1e-12);
    }
}
