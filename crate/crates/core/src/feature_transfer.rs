//! Feature-wise adaptive transfer.
//!
//! The target parameter `β` and the contrasts `δ^(k)` are fitted jointly on
//! all samples by minimizing
//!
//! ```text
//! (1/N) Σ_k ‖y^(k) − X^(k)(β + δ^(k))‖² + λ₀ Σ_j w0_j |β_j| + λ₁ Σ_k Σ_j wk_j |δ^(k)_j|
//! ```
//!
//! with `δ^(0) = 0`. Small weights on a contrast coordinate let that source
//! feature deviate from the target; large weights fuse it with the target.
//! Weights come either from known supports (oracle) or from one or more LLA
//! steps on a pilot estimate.

use nalgebra::{DMatrix, DVector};

use crate::cv::{descending, largest_tied, lasso_cv, log_grid, log_rate, prediction_mse, select, Folds};
use crate::error::{dimension, invalid, Error, Result};
use crate::linalg::{column_space_projector, condition_number, pinv_solve};
use crate::model::{Estimate, FitFlag, Support, TransferProblem};
use crate::penalty::{lla_feature_weights, FeatureWeights, PenaltyFamily};
use crate::scalar::Real;
use crate::solvers::{fused_lasso_bcd, CdSettings, FusedLasso};

/// Condition number of `X̃ᵀX̃` beyond which the oracle system counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Role of one column of the stacked design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coefficient {
    Beta(usize),
    /// Contrast of source `source` (one-based) at `feature`.
    Delta { source: usize, feature: usize },
}

/// All samples stacked into one Lasso design over `θ = (β, δ^(1), …, δ^(K))`.
///
/// Row block `k` is `[X^(k) | 0 … X^(k) … 0]` with the second copy in the
/// columns of `δ^(k)`; the target block has no contrast columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedDesign<T: Real> {
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    p: usize,
    k: usize,
}

impl<T: Real> StackedDesign<T> {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn layout(&self, column: usize) -> Coefficient {
        assert!(column < (self.k + 1) * self.p, "column {column} out of range");
        match column / self.p {
            0 => Coefficient::Beta(column),
            block => Coefficient::Delta {
                source: block,
                feature: column % self.p,
            },
        }
    }

    pub fn column_of(&self, coef: Coefficient) -> usize {
        match coef {
            Coefficient::Beta(j) => j,
            Coefficient::Delta { source, feature } => source * self.p + feature,
        }
    }

    pub fn pack(&self, beta: &DVector<T>, deltas: &[DVector<T>]) -> DVector<T> {
        let mut theta = DVector::zeros((self.k + 1) * self.p);
        theta.rows_mut(0, self.p).copy_from(beta);
        for (k, d) in deltas.iter().enumerate() {
            theta.rows_mut((k + 1) * self.p, self.p).copy_from(d);
        }
        theta
    }

    pub fn unpack(&self, theta: &DVector<T>) -> (DVector<T>, Vec<DVector<T>>) {
        let beta = theta.rows(0, self.p).into_owned();
        let deltas = (1..=self.k)
            .map(|k| theta.rows(k * self.p, self.p).into_owned())
            .collect();
        (beta, deltas)
    }

    /// Per-column penalty `λ₀·w0` then `λ₁·wk` in stacking order.
    pub fn penalty_weights(&self, weights: &FeatureWeights<T>) -> Result<DVector<T>> {
        check_weights(self.p, self.k, weights)?;
        let mut out = DVector::zeros((self.k + 1) * self.p);
        for j in 0..self.p {
            out[j] = weights.lambda0 * weights.w0[j];
        }
        for (k, w) in weights.wk.iter().enumerate() {
            for j in 0..self.p {
                out[(k + 1) * self.p + j] = weights.lambda1 * w[j];
            }
        }
        Ok(out)
    }
}

pub fn stack_design<T: Real>(problem: &TransferProblem<T>) -> StackedDesign<T> {
    let (p, k, n) = (problem.p(), problem.k(), problem.n_total());
    let mut a = DMatrix::zeros(n, (k + 1) * p);
    let mut b = DVector::zeros(n);
    let mut row = 0;
    for (t, task) in problem.tasks().enumerate() {
        let nk = task.n();
        a.view_mut((row, 0), (nk, p)).copy_from(&task.x);
        if t > 0 {
            a.view_mut((row, t * p), (nk, p)).copy_from(&task.x);
        }
        b.rows_mut(row, nk).copy_from(&task.y);
        row += nk;
    }
    StackedDesign { a, b, p, k }
}

/// Indicator weights: `w0_j = 1{j ∉ S₀}`, `wk_j = 1{j ∉ S_k}`.
pub fn oracle_feature_weights<T: Real>(
    p: usize,
    s0: &Support,
    supports: &[Support],
    lambda0: T,
    lambda1: T,
) -> Result<FeatureWeights<T>> {
    check_supports(p, s0, supports)?;
    let indicator = |s: &Support| DVector::from_fn(p, |j, _| if s.contains(&j) { T::zero() } else { T::one() });
    Ok(FeatureWeights {
        w0: indicator(s0),
        wk: supports.iter().map(indicator).collect(),
        lambda0,
        lambda1,
    })
}

fn check_supports(p: usize, s0: &Support, supports: &[Support]) -> Result<()> {
    for (k, s) in std::iter::once(s0).chain(supports).enumerate() {
        if let Some(&j) = s.iter().next_back().filter(|&&j| j >= p) {
            return Err(dimension(format!("support {k} contains index {j} but p = {p}")));
        }
    }
    Ok(())
}

/// Rate-matched penalty levels `λ₀ = c√(log p/N)` and
/// `λ₁ = c·(n_S/N)·√(log p/n_S)`; `λ₁ = 0` without sources.
pub fn feature_lambdas<T: Real>(c: f64, p: usize, n_total: usize, n_s: usize) -> (T, T) {
    let lambda0 = c * log_rate(p, n_total);
    let lambda1 = if n_s == 0 {
        0.0
    } else {
        c * (n_s as f64 / n_total as f64) * log_rate(p, n_s)
    };
    (T::cst(lambda0), T::cst(lambda1))
}

/// Solves the weighted fused problem by exact block coordinate descent, one
/// feature (`β_j` with every `δ^(k)_j`) at a time. Penalty levels are taken
/// from `weights`.
pub fn fit_f_adatrans<T: Real>(
    problem: &TransferProblem<T>,
    weights: &FeatureWeights<T>,
    settings: &CdSettings<T>,
    warm: Option<&Estimate<T>>,
) -> Result<Estimate<T>> {
    let (p, k) = (problem.p(), problem.k());
    check_weights(p, k, weights)?;
    let beta_penalty = &weights.w0 * weights.lambda0;
    let delta_penalty: Vec<DVector<T>> = weights.wk.iter().map(|w| w * weights.lambda1).collect();
    let fused = FusedLasso {
        tasks: problem.tasks().map(|t| (&t.x, &t.y)).collect(),
        beta_penalty: &beta_penalty,
        delta_penalty: &delta_penalty,
        n_obj: T::from_usize_lossy(problem.n_total()),
    };
    let start = warm.map(|e| (&e.beta_hat, e.delta_hats.as_slice()));
    let fit = fused_lasso_bcd(&fused, settings, start)?;
    let mut est = Estimate {
        beta_hat: fit.beta,
        delta_hats: fit.deltas,
        iterations: fit.iterations,
        kkt_residual: fit.kkt_residual,
        objective_value: fit.objective,
        converged: fit.converged,
        constraint_violation: None,
        flags: Vec::new(),
    };
    if !fit.converged {
        est.flag(FitFlag::NotConverged);
    }
    Ok(est)
}

fn check_weights<T: Real>(p: usize, k: usize, weights: &FeatureWeights<T>) -> Result<()> {
    if weights.w0.len() != p || weights.wk.len() != k || weights.wk.iter().any(|w| w.len() != p) {
        return Err(dimension(format!("feature weights do not match p = {p}, K = {k}")));
    }
    let all = weights.w0.iter().chain(weights.wk.iter().flat_map(|w| w.iter()));
    if all.clone().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
        return Err(invalid("feature weights must be finite and nonnegative"));
    }
    for lam in [weights.lambda0, weights.lambda1] {
        if !(lam >= T::zero()) || !lam.is_finite() {
            return Err(invalid(format!("penalty level {lam} must be finite and nonnegative")));
        }
    }
    Ok(())
}

/// What [`fit_oracle`] does when `X̃ᵀX̃` is numerically singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingularPolicy {
    #[default]
    Fail,
    /// Minimum-norm solution, flagged with [`FitFlag::PseudoInverse`].
    PseudoInverse,
}

/// Projection structure behind the closed-form oracle estimate.
///
/// `H_k` projects onto the column space of `X^(k)_{S_k}` and `X̃` stacks
/// `X^(0)_{S₀}` over `(I − H_k) X^(k)_{S₀}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDecomposition<T: Real> {
    pub projectors: Vec<DMatrix<T>>,
    pub x_tilde: DMatrix<T>,
    s0: Vec<usize>,
}

impl<T: Real> OracleDecomposition<T> {
    pub fn new(problem: &TransferProblem<T>, s0: &Support, supports: &[Support]) -> Result<Self> {
        if supports.len() != problem.k() {
            return Err(dimension(format!(
                "{} contrast supports for {} sources",
                supports.len(),
                problem.k()
            )));
        }
        check_supports(problem.p(), s0, supports)?;
        if s0.len() >= problem.n_t() {
            return Err(invalid(format!(
                "|S0| = {} must be below n_T = {}",
                s0.len(),
                problem.n_t()
            )));
        }
        if let Some((k, s)) = supports.iter().enumerate().find(|(_, s)| s.len() >= problem.n_s()) {
            return Err(invalid(format!(
                "|S_{}| = {} must be below n_S = {}",
                k + 1,
                s.len(),
                problem.n_s()
            )));
        }
        let cols: Vec<usize> = s0.iter().copied().collect();
        let projectors: Vec<DMatrix<T>> = problem
            .sources()
            .iter()
            .zip(supports)
            .map(|(task, sk)| column_space_projector(&task.x.select_columns(sk.iter())))
            .collect();
        let mut x_tilde = DMatrix::zeros(problem.n_total(), cols.len());
        x_tilde
            .view_mut((0, 0), (problem.n_t(), cols.len()))
            .copy_from(&problem.target().x.select_columns(&cols));
        let mut row = problem.n_t();
        for (task, h) in problem.sources().iter().zip(&projectors) {
            let xs = task.x.select_columns(&cols);
            let resid = &xs - h * &xs;
            x_tilde.view_mut((row, 0), (task.n(), cols.len())).copy_from(&resid);
            row += task.n();
        }
        Ok(Self {
            projectors,
            x_tilde,
            s0: cols,
        })
    }

    pub fn gram(&self) -> DMatrix<T> {
        self.x_tilde.transpose() * &self.x_tilde
    }

    /// `[X̃ᵀX̃]⁻¹ X̃ᵀ v` for a stacked vector `v`.
    pub fn solve(&self, v: &DVector<T>, policy: SingularPolicy) -> Result<(DVector<T>, bool)> {
        let gram = self.gram();
        let rhs = self.x_tilde.transpose() * v;
        if self.s0.is_empty() {
            return Ok((rhs, false));
        }
        let cond = condition_number(&gram);
        if cond.as_f64() <= SINGULAR_CONDITION {
            if let Some(chol) = gram.clone().cholesky() {
                return Ok((chol.solve(&rhs), false));
            }
        }
        match policy {
            SingularPolicy::PseudoInverse => Ok((pinv_solve(&gram, &rhs), true)),
            SingularPolicy::Fail => Err(Error::Singular(self.describe_singularity(cond))),
        }
    }

    fn describe_singularity(&self, cond: T) -> String {
        let tol = T::cst(1e-10);
        let mut blocks = Vec::new();
        let n_t = self.x_tilde.nrows() - self.projectors.iter().map(|h| h.nrows()).sum::<usize>();
        let target = self.x_tilde.rows(0, n_t).into_owned();
        if condition_number(&(target.transpose() * &target)).as_f64() > SINGULAR_CONDITION {
            blocks.push("target block X_S0 is rank deficient".to_string());
        }
        let mut row = n_t;
        for (k, h) in self.projectors.iter().enumerate() {
            let block = self.x_tilde.rows(row, h.nrows());
            if block.amax() <= tol {
                blocks.push(format!("source {} block vanishes (S0 inside span of S_{})", k + 1, k + 1));
            }
            row += h.nrows();
        }
        if blocks.is_empty() {
            blocks.push("stacked blocks are jointly collinear".to_string());
        }
        format!(
            "oracle system X~'X~ is numerically singular (condition {:.3e}): {}",
            cond.as_f64(),
            blocks.join("; ")
        )
    }
}

/// Closed-form least squares under known supports: `β̂` zero off `S₀`,
/// `δ̂^(k)` zero off `S_k`. On `S₀`, `β̂ = [X̃ᵀX̃]⁻¹X̃ᵀy`; each `δ̂^(k)` is the
/// least-squares fit of `y^(k) − X^(k)β̂` on `X^(k)_{S_k}`.
pub fn fit_oracle<T: Real>(
    problem: &TransferProblem<T>,
    s0: &Support,
    supports: &[Support],
    policy: SingularPolicy,
) -> Result<Estimate<T>> {
    let dec = OracleDecomposition::new(problem, s0, supports)?;
    let y = stacked_response(problem);
    let (coef, pinv) = dec.solve(&y, policy)?;
    let p = problem.p();
    let mut beta = DVector::zeros(p);
    for (i, &j) in dec.s0.iter().enumerate() {
        beta[j] = coef[i];
    }
    let mut deltas = Vec::with_capacity(problem.k());
    let mut rss = T::zero();
    rss += (&problem.target().y - &problem.target().x * &beta).norm_squared();
    for (task, sk) in problem.sources().iter().zip(supports) {
        let resid = &task.y - &task.x * &beta;
        let mut delta = DVector::zeros(p);
        if !sk.is_empty() {
            let xs = task.x.select_columns(sk.iter());
            let fit = pinv_solve(&xs, &resid);
            for (i, &j) in sk.iter().enumerate() {
                delta[j] = fit[i];
            }
        }
        rss += (&resid - &task.x * &delta).norm_squared();
        deltas.push(delta);
    }
    let mut est = Estimate::exact(beta, deltas, rss / T::from_usize_lossy(problem.n_total()));
    if pinv {
        est.flag(FitFlag::PseudoInverse);
    }
    Ok(est)
}

fn stacked_response<T: Real>(problem: &TransferProblem<T>) -> DVector<T> {
    let n = problem.n_total();
    DVector::from_iterator(n, problem.tasks().flat_map(|t| t.y.iter().copied()))
}

/// Transferability ratio `‖[X̃ᵀX̃]⁻¹X̃ᵀε‖∞ / ‖[X_{S₀}ᵀX_{S₀}]⁻¹X_{S₀}ᵀε‖∞` for a
/// stacked noise vector `ε`, with `X_{S₀}` the full stacked sample. Values
/// near 1 mean the sources transfer as well as extra target rows would.
pub fn kappa_f<T: Real>(
    problem: &TransferProblem<T>,
    s0: &Support,
    supports: &[Support],
    epsilon: &DVector<T>,
) -> Result<T> {
    if epsilon.len() != problem.n_total() {
        return Err(dimension(format!(
            "noise has length {} but N = {}",
            epsilon.len(),
            problem.n_total()
        )));
    }
    let dec = OracleDecomposition::new(problem, s0, supports)?;
    let (num, _) = dec.solve(epsilon, SingularPolicy::Fail)?;
    let cols: Vec<usize> = s0.iter().copied().collect();
    let mut full = DMatrix::zeros(problem.n_total(), cols.len());
    let mut row = 0;
    for task in problem.tasks() {
        full.view_mut((row, 0), (task.n(), cols.len()))
            .copy_from(&task.x.select_columns(&cols));
        row += task.n();
    }
    let gram = full.transpose() * &full;
    let den = gram
        .cholesky()
        .map(|c| c.solve(&(full.transpose() * epsilon)))
        .ok_or_else(|| Error::Singular("full-sample X_S0'X_S0 is not positive definite".into()))?;
    let (num, den) = (num.amax(), den.amax());
    if den == T::zero() || !den.is_finite() {
        return Err(Error::UndefinedRatio(format!(
            "full-sample noise projection has sup-norm {den}"
        )));
    }
    Ok(num / den)
}

/// Tuning of the data-driven pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FConfig<T: Real> {
    /// Candidate scale constants `c`, shared by every cross-validated Lasso.
    pub grid: Vec<f64>,
    pub folds: usize,
    /// Seed of the fold assignment.
    pub seed: u64,
    pub family: PenaltyFamily<T>,
    /// LLA reweighting rounds, 1 to 3.
    pub lla_rounds: usize,
    /// Where the first LLA step linearizes.
    pub pilot: Pilot,
    pub cd: CdSettings<T>,
}

/// Pilot estimate for the first LLA step of [`fit_f_adatrans_auto`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pilot {
    /// Separate cross-validated Lasso fits per task ([`fit_initial`]).
    TaskLasso,
    /// The fused problem itself with unit weights, `c` cross-validated.
    #[default]
    Fused,
}

impl<T: Real> Default for FConfig<T> {
    fn default() -> Self {
        Self {
            grid: log_grid(0.05, 5.0, 10),
            folds: 5,
            seed: 0,
            family: PenaltyFamily::scad(),
            lla_rounds: 1,
            pilot: Pilot::default(),
            cd: CdSettings::default(),
        }
    }
}

impl<T: Real> FConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(invalid("tuning grid must be nonempty with positive finite values"));
        }
        if !(1..=3).contains(&self.lla_rounds) {
            return Err(invalid(format!("lla_rounds must be 1..=3, got {}", self.lla_rounds)));
        }
        self.family.validate()?;
        self.cd.validate()
    }
}

/// Pilot estimate: target Lasso for `β`, per-source Lasso fits `ŵ^(k)`,
/// and `δ̂^(k) = ŵ^(k) − β̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialFit<T: Real> {
    pub estimate: Estimate<T>,
    pub target_c: f64,
    pub source_c: Vec<f64>,
}

pub fn fit_initial<T: Real>(problem: &TransferProblem<T>, config: &FConfig<T>) -> Result<InitialFit<T>> {
    config.validate()?;
    let target = problem.target();
    let cv0 = lasso_cv(&target.x, &target.y, &config.grid, config.folds, config.seed, &config.cd)?;
    let beta = cv0.fit.theta.clone();
    let mut iterations = cv0.fit.iterations;
    let mut converged = cv0.fit.converged;
    let mut kkt = cv0.fit.kkt_residual;
    let mut deltas = Vec::with_capacity(problem.k());
    let mut source_c = Vec::with_capacity(problem.k());
    for (k, task) in problem.sources().iter().enumerate() {
        let seed = config.seed.wrapping_add(k as u64 + 1);
        let cv = lasso_cv(&task.x, &task.y, &config.grid, config.folds, seed, &config.cd)?;
        iterations += cv.fit.iterations;
        converged &= cv.fit.converged;
        kkt = kkt.max(cv.fit.kkt_residual);
        deltas.push(&cv.fit.theta - &beta);
        source_c.push(cv.c);
    }
    let mut estimate = Estimate {
        beta_hat: beta,
        delta_hats: deltas,
        iterations,
        kkt_residual: kkt,
        objective_value: cv0.fit.objective,
        converged,
        constraint_violation: None,
        flags: Vec::new(),
    };
    if !converged {
        estimate.flag(FitFlag::NotConverged);
    }
    Ok(InitialFit {
        estimate,
        target_c: cv0.c,
        source_c,
    })
}

/// Pilot estimate selected by `config.pilot`.
pub fn fit_pilot<T: Real>(problem: &TransferProblem<T>, config: &FConfig<T>) -> Result<InitialFit<T>> {
    config.validate()?;
    match config.pilot {
        Pilot::TaskLasso => fit_initial(problem, config),
        Pilot::Fused => {
            let (p, n, n_s, k) = (problem.p(), problem.n_total(), problem.n_s(), problem.k());
            let unit = |c: f64| {
                let (l0, l1) = feature_lambdas(c, p, n, n_s);
                Ok(FeatureWeights::ones(p, k, l0, l1))
            };
            let (best, _) = cv_feature_scale(problem, &config.grid, config.folds, config.seed, &config.cd, unit)?;
            let c = config.grid[best];
            let mut estimate = fit_f_adatrans(problem, &unit(c)?, &config.cd, None)?;
            if !estimate.converged {
                estimate.flag(FitFlag::NotConverged);
            }
            Ok(InitialFit {
                estimate,
                target_c: c,
                source_c: vec![c; k],
            })
        }
    }
}

/// Cross-validation of the scale constant `c` of [`feature_lambdas`].
///
/// `weights_for(c)` supplies the coordinate weights used at `c`; training
/// fits recompute `λ₀, λ₁` from the training sizes. Folds split the target
/// rows only; every training fit keeps all source rows. Returns the index
/// of the selected value (ties to the larger `c`) and the fold-averaged
/// held-out target MSE of every grid value.
pub fn cv_feature_scale<T: Real>(
    problem: &TransferProblem<T>,
    grid: &[f64],
    folds: usize,
    seed: u64,
    settings: &CdSettings<T>,
    mut weights_for: impl FnMut(f64) -> Result<FeatureWeights<T>>,
) -> Result<(usize, Vec<f64>)> {
    if grid.is_empty() {
        return Err(invalid("tuning grid is empty"));
    }
    let candidates: Vec<FeatureWeights<T>> = grid.iter().map(|&c| weights_for(c)).collect::<Result<_>>()?;
    let split = Folds::new(problem.n_t(), folds, seed)?;
    let order = descending(grid);
    let mut scores = vec![0.0; grid.len()];
    for f in 0..split.len() {
        let train = problem.with_target_rows(&split.train(f))?;
        let test = split.test(f);
        let xv = problem.target().x.select_rows(test);
        let yv = select(&problem.target().y, test);
        let mut warm: Option<Estimate<T>> = None;
        for &g in &order {
            let (l0, l1) = feature_lambdas(grid[g], train.p(), train.n_total(), train.n_s());
            let w = candidates[g].clone().with_lambdas(l0, l1);
            let est = fit_f_adatrans(&train, &w, settings, warm.as_ref())?;
            scores[g] += prediction_mse(&xv, &yv, &est.beta_hat) / split.len() as f64;
            warm = Some(est);
        }
    }
    let first = crate::cv::argmin_score(&scores, crate::cv::TieBreak::First).expect("grid is nonempty");
    Ok((largest_tied(grid, &scores, first), scores))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FAutoFit<T: Real> {
    pub estimate: Estimate<T>,
    /// Selected scale constant.
    pub c: f64,
    /// Weights of the final fit.
    pub weights: FeatureWeights<T>,
    pub init: InitialFit<T>,
}

/// Data-driven pipeline: pilot fit, LLA weights, cross-validated `c`, final
/// fit, then `lla_rounds − 1` further reweight-and-refit steps at that `c`.
pub fn fit_f_adatrans_auto<T: Real>(problem: &TransferProblem<T>, config: &FConfig<T>) -> Result<FAutoFit<T>> {
    config.validate()?;
    let (p, n, n_s) = (problem.p(), problem.n_total(), problem.n_s());
    let init = fit_pilot(problem, config)?;
    let lla = |c: f64, pilot: &Estimate<T>| -> Result<FeatureWeights<T>> {
        let (l0, l1) = feature_lambdas::<T>(c, p, n, n_s);
        // Without sources λ₁ is zero and unused, but LLA needs a positive level.
        let w = lla_feature_weights(pilot, l0, if n_s == 0 { T::one() } else { l1 }, config.family)?;
        Ok(w.with_lambdas(l0, l1))
    };
    let (best, _) = cv_feature_scale(problem, &config.grid, config.folds, config.seed, &config.cd, |c| {
        lla(c, &init.estimate)
    })?;
    let c = config.grid[best];
    let mut weights = lla(c, &init.estimate)?;
    let mut estimate = fit_f_adatrans(problem, &weights, &config.cd, None)?;
    for _ in 1..config.lla_rounds {
        weights = lla(c, &estimate)?;
        estimate = fit_f_adatrans(problem, &weights, &config.cd, Some(&estimate))?;
    }
    Ok(FAutoFit {
        estimate,
        c,
        weights,
        init,
    })
}

/// Oracle weights with `c` chosen by [`cv_feature_scale`].
pub fn fit_f_adatrans_oracle_cv<T: Real>(
    problem: &TransferProblem<T>,
    s0: &Support,
    supports: &[Support],
    config: &FConfig<T>,
) -> Result<(Estimate<T>, f64)> {
    config.validate()?;
    let (p, n, n_s) = (problem.p(), problem.n_total(), problem.n_s());
    let weights_for = |c: f64| {
        let (l0, l1) = feature_lambdas(c, p, n, n_s);
        oracle_feature_weights(p, s0, supports, l0, l1)
    };
    let (best, _) = cv_feature_scale(problem, &config.grid, config.folds, config.seed, &config.cd, weights_for)?;
    let c = config.grid[best];
    let w = weights_for(c)?;
    Ok((fit_f_adatrans(problem, &w, &config.cd, None)?, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Task;

    fn tiny_problem() -> TransferProblem<f64> {
        let x0 = DMatrix::from_fn(6, 3, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let x1 = DMatrix::from_fn(8, 3, |i, j| ((i * 2 + j * 7 + 1) % 9) as f64 - 4.0);
        let y0 = DVector::from_fn(6, |i, _| i as f64 * 0.5 - 1.0);
        let y1 = DVector::from_fn(8, |i, _| (i % 3) as f64 - 1.0);
        TransferProblem::new(Task::new(x0, y0).unwrap(), vec![Task::new(x1, y1).unwrap()]).unwrap()
    }

    #[test]
    fn stacked_layout_round_trips() {
        let pb = tiny_problem();
        let st = stack_design(&pb);
        assert_eq!(st.a.shape(), (14, 6));
        for c in 0..6 {
            assert_eq!(st.column_of(st.layout(c)), c);
        }
        assert_eq!(st.layout(4), Coefficient::Delta { source: 1, feature: 1 });
        let beta = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        let delta = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let theta = st.pack(&beta, &[delta.clone()]);
        assert_eq!(st.unpack(&theta), (beta.clone(), vec![delta.clone()]));
        let lhs = (&st.b - &st.a * &theta).norm_squared();
        let rhs = (&pb.target().y - &pb.target().x * &beta).norm_squared()
            + (&pb.sources()[0].y - &pb.sources()[0].x * (&beta + &delta)).norm_squared();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn target_only_stack_is_target() {
        let pb = TransferProblem::target_only(tiny_problem().target().clone()).unwrap();
        let st = stack_design(&pb);
        assert_eq!(st.a, pb.target().x);
        assert_eq!(st.b, pb.target().y);
    }

    #[test]
    fn oracle_weight_examples() {
        let s0: Support = (0..8).collect();
        let s1: Support = (0..4).collect();
        let w = oracle_feature_weights::<f64>(10, &s0, &[s1], 1.0, 1.0).unwrap();
        assert_eq!(w.w0.as_slice(), &[0., 0., 0., 0., 0., 0., 0., 0., 1., 1.]);
        assert_eq!(w.wk[0].as_slice(), &[0., 0., 0., 0., 1., 1., 1., 1., 1., 1.]);
        let none = oracle_feature_weights::<f64>(3, &Support::new(), &[Support::new(), (0..3).collect()], 1.0, 1.0)
            .unwrap();
        assert!(none.wk[0].iter().all(|&x| x == 1.0));
        assert!(none.wk[1].iter().all(|&x| x == 0.0));
        assert!(oracle_feature_weights::<f64>(3, &[5].into(), &[], 1.0, 1.0).is_err());
    }

    #[test]
    fn lambdas_follow_rates() {
        let (l0, l1) = feature_lambdas::<f64>(2.0, 100, 550, 250);
        assert!((l0 - 2.0 * (100f64.ln() / 550.0).sqrt()).abs() < 1e-15);
        assert!((l1 - 2.0 * (250.0 / 550.0) * (100f64.ln() / 250.0).sqrt()).abs() < 1e-15);
        assert_eq!(feature_lambdas::<f64>(2.0, 100, 50, 0).1, 0.0);
    }

    #[test]
    fn nested_supports_give_target_only_ols() {
        let pb = tiny_problem();
        let s0: Support = [0, 2].into();
        let s1: Support = [0, 1, 2].into();
        let est = fit_oracle(&pb, &s0, &[s1], SingularPolicy::Fail);
        // S0 inside S1 removes the source block entirely; |S1| < n_S holds.
        let est = est.unwrap();
        let xs = pb.target().x.select_columns(&[0, 2]);
        let ols = (xs.transpose() * &xs).cholesky().unwrap().solve(&(xs.transpose() * &pb.target().y));
        assert!((est.beta_hat[0] - ols[0]).abs() < 1e-10 && (est.beta_hat[2] - ols[1]).abs() < 1e-10);
        assert_eq!(est.beta_hat[1], 0.0);
    }

    #[test]
    fn oracle_preconditions() {
        let pb = tiny_problem();
        let big: Support = (0..3).collect();
        let tiny = TransferProblem::new(
            Task::new(pb.target().x.rows(0, 3).into_owned(), pb.target().y.rows(0, 3).into_owned()).unwrap(),
            pb.sources().to_vec(),
        )
        .unwrap();
        assert!(matches!(
            fit_oracle(&tiny, &big, &[Support::new()], SingularPolicy::Fail),
            Err(Error::InvalidInput(_))
        ));
        assert!(fit_oracle(&pb, &big, &[], SingularPolicy::Fail).is_err());
    }

    #[test]
    fn collinear_oracle_system_is_reported_or_pseudo_inverted() {
        let mut pb = tiny_problem();
        // duplicate column 0 into column 1 in every task
        let mut tasks: Vec<Task<f64>> = pb.tasks().cloned().collect();
        for t in &mut tasks {
            let c0 = t.x.column(0).into_owned();
            t.x.set_column(1, &c0);
        }
        let src = tasks.split_off(1);
        pb = TransferProblem::new(tasks.pop().unwrap(), src).unwrap();
        let s0: Support = [0, 1].into();
        match fit_oracle(&pb, &s0, &[Support::new()], SingularPolicy::Fail) {
            Err(Error::Singular(msg)) => assert!(msg.contains("target block")),
            other => panic!("expected singular error, got {other:?}"),
        }
        let est = fit_oracle(&pb, &s0, &[Support::new()], SingularPolicy::PseudoInverse).unwrap();
        assert!(est.flags.contains(&FitFlag::PseudoInverse));
        assert!((est.beta_hat[0] - est.beta_hat[1]).abs() < 1e-8);
    }

    #[test]
    fn kappa_is_one_without_contrasts() {
        let pb = tiny_problem();
        let eps = DVector::from_fn(14, |i, _| ((i * 5) % 7) as f64 - 3.0);
        let k = kappa_f(&pb, &[0, 1].into(), &[Support::new()], &eps).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
        assert!(matches!(
            kappa_f(&pb, &[0].into(), &[Support::new()], &DVector::zeros(14)),
            Err(Error::UndefinedRatio(_))
        ));
    }
}
