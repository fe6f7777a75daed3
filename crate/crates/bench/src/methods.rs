//! One fit of one method on one sampled instance.

use adatrans::cv::lasso_cv;
use adatrans::datagen::SampledProblem;
use adatrans::feature_transfer::{
    fit_f_adatrans_auto, fit_f_adatrans_oracle_cv, fit_oracle, kappa_f, FConfig, SingularPolicy,
};
use adatrans::model::{l2_error_sq, support_f1, support_of, Estimate, GroundTruth, TransferProblem};
use adatrans::sample_transfer::{
    fit_s_adatrans_auto, kappa_s_hbar, oracle_sample_weights, Dims, SConfig, SampleWeights, WeightRule,
};
use nalgebra::{DMatrix, DVector};

use crate::config::Method;

/// Metrics of a successful fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub estimate: Estimate<f64>,
    pub l2_error_sq: f64,
    /// Mean over sources of the F1 score of `supp(δ̂^(k))` against `S_k`;
    /// `None` for methods without contrasts.
    pub delta_support_f1: Option<f64>,
    /// `κ_F` for the support-oracle methods, `κ_S` for the sample-wise ones.
    pub kappa_diag: Option<f64>,
}

impl Outcome {
    pub fn converged(&self) -> bool {
        self.estimate.converged && self.estimate.is_finite()
    }
}

/// Tuning shared by every method; `seed` drives fold assignment only.
#[derive(Debug, Clone)]
pub struct MethodConfig {
    pub f: FConfig<f64>,
    pub s: SConfig<f64>,
}

impl MethodConfig {
    pub fn with_seed(seed: u64) -> Self {
        let mut f = FConfig::default();
        f.seed = seed;
        let mut s = SConfig::default();
        s.seed = seed;
        s.pilot = f.clone();
        Self { f, s }
    }
}

fn lasso_estimate(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, cfg: &FConfig<f64>) -> adatrans::Result<Estimate<f64>> {
    let cv = lasso_cv(x, y, &cfg.grid, cfg.folds, cfg.seed, &cfg.cd)?;
    let p = x.ncols();
    Ok(Estimate {
        beta_hat: cv.fit.theta,
        delta_hats: vec![DVector::zeros(p); k],
        iterations: cv.fit.iterations,
        kkt_residual: cv.fit.kkt_residual,
        objective_value: cv.fit.objective,
        converged: cv.fit.converged,
        constraint_violation: None,
        flags: Vec::new(),
    })
}

fn stacked(problem: &TransferProblem<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (n, p) = (problem.n_total(), problem.p());
    let mut x = DMatrix::zeros(n, p);
    let mut row = 0;
    for t in problem.tasks() {
        x.view_mut((row, 0), (t.n(), p)).copy_from(&t.x);
        row += t.n();
    }
    let y = DVector::from_iterator(n, problem.tasks().flat_map(|t| t.y.iter().copied()));
    (x, y)
}

fn kappa_s(w: &SampleWeights<f64>, truth: &GroundTruth<f64>, problem: &TransferProblem<f64>) -> Option<f64> {
    kappa_s_hbar(w, &truth.h_k, problem.n_t(), problem.n_s())
        .ok()
        .map(|d| d.kappa_s)
}

/// Fitted estimate plus the sample weights used, for the sample-wise methods.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub estimate: Estimate<f64>,
    pub sample_weights: Option<SampleWeights<f64>>,
}

fn missing_truth(method: Method) -> adatrans::Error {
    adatrans::Error::InvalidInput(format!("{method} needs the true supports"))
}

/// Fits `method` on `problem`. The oracle methods read supports, sparsity
/// and informative levels from `truth` and fail without it.
pub fn fit_method(
    method: Method,
    problem: &TransferProblem<f64>,
    truth: Option<&GroundTruth<f64>>,
    config: &MethodConfig,
) -> adatrans::Result<Fitted> {
    let k = problem.k();
    let plain = |estimate| Fitted {
        estimate,
        sample_weights: None,
    };
    let truth_for = |m| truth.ok_or_else(|| missing_truth(m));
    Ok(match method {
        Method::Lasso => {
            let t = problem.target();
            plain(lasso_estimate(&t.x, &t.y, k, &config.f)?)
        }
        Method::PooledLasso => {
            let (x, y) = stacked(problem);
            plain(lasso_estimate(&x, &y, k, &config.f)?)
        }
        Method::FAda => plain(fit_f_adatrans_auto(problem, &config.f)?.estimate),
        Method::FAdaOracle => {
            let t = truth_for(method)?;
            plain(fit_f_adatrans_oracle_cv(problem, &t.support0, &t.supports, &config.f)?.0)
        }
        Method::OracleEst => {
            let t = truth_for(method)?;
            plain(fit_oracle(problem, &t.support0, &t.supports, SingularPolicy::PseudoInverse)?)
        }
        Method::SAda => {
            let fit = fit_s_adatrans_auto(problem, &WeightRule::Qp, &config.s)?;
            Fitted {
                estimate: fit.estimate,
                sample_weights: Some(fit.weights),
            }
        }
        Method::SAdaOracle => {
            let t = truth_for(method)?;
            let w = oracle_sample_weights::<f64>(t.s, &t.h_k, Dims::of(problem), 1.0)?;
            let rule = WeightRule::Known {
                weights: w.w,
                s: t.s,
                h: t.h_k.clone(),
            };
            let fit = fit_s_adatrans_auto(problem, &rule, &config.s)?;
            Fitted {
                estimate: fit.estimate,
                sample_weights: Some(fit.weights),
            }
        }
    })
}

/// Fits `method` and scores it against `truth`.
pub fn run_method(
    method: Method,
    sampled: &SampledProblem<f64>,
    truth: &GroundTruth<f64>,
    config: &MethodConfig,
) -> adatrans::Result<Outcome> {
    let problem = &sampled.problem;
    let k = problem.k();
    let Fitted {
        estimate,
        sample_weights,
    } = fit_method(method, problem, Some(truth), config)?;
    let kappa_diag = match method {
        Method::FAdaOracle | Method::OracleEst => {
            kappa_f(problem, &truth.support0, &truth.supports, &sampled.stacked_noise()).ok()
        }
        _ => sample_weights.and_then(|w| kappa_s(&w, truth, problem)),
    };
    let l2 = l2_error_sq(&estimate.beta_hat, &truth.beta)?;
    let delta_support_f1 = match method {
        Method::Lasso | Method::PooledLasso => None,
        _ if k == 0 => None,
        _ => {
            let total: f64 = estimate
                .delta_hats
                .iter()
                .zip(&truth.supports)
                .map(|(d, s)| support_f1(&support_of(d, 0.0), s))
                .sum();
            Some(total / k as f64)
        }
    };
    Ok(Outcome {
        estimate,
        l2_error_sq: l2,
        delta_support_f1,
        kappa_diag,
    })
}
