//! Sample-wise adaptive transfer.
//!
//! Each task `k` gets one scalar weight `w_k` on its loss and contrast:
//!
//! ```text
//! minimize  (1/N) Σ_k w_k ‖y^(k) − X^(k)(β + δ^(k))‖² + λ₀ √κ_S(w) ‖β‖₁ + λ₁ Σ_{k≥1} w_k ‖δ^(k)‖₁
//! s.t.      ‖X^(0)ᵀ(y^(0) − X^(0)β)‖∞ / n_T ≤ λ_T
//! ```
//!
//! with `κ_S(w) = Σ_k n_k w_k² / N`. The minimizer does not change when every
//! `w_k` is multiplied by the same positive constant, so weights are kept
//! normalized to `Σ_k (n_k/N) w_k = 1`.

use nalgebra::{DMatrix, DVector};

use crate::cv::{argmin_score, descending, largest_tied, log_grid, prediction_mse, select, smallest_tied, Folds, TieBreak};
use crate::error::{dimension, invalid, Result};
use crate::feature_transfer::{fit_pilot, FConfig, InitialFit};
use crate::model::{Estimate, FitFlag, TransferProblem};
use crate::scalar::Real;
use crate::solvers::{admm_linf_constrained, AdmmSettings, LinfConstraint, QuadraticLoss};

/// Normalized weights below this value are set to zero.
pub const WEIGHT_FLOOR: f64 = 1e-3;

/// Per-task weights, target first.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights<T: Real> {
    pub w: DVector<T>,
    /// Whether `Σ_k (n_k/N) w_k = 1` holds.
    pub normalized: bool,
}

impl<T: Real> SampleWeights<T> {
    /// Weights taken as given, without normalization.
    pub fn raw(w: DVector<T>) -> Self {
        Self { w, normalized: false }
    }

    /// All ones: every sample counts equally.
    pub fn uniform(k: usize) -> Self {
        Self {
            w: DVector::from_element(k + 1, T::one()),
            normalized: true,
        }
    }

    /// `(N/n_T, 0, …, 0)`: the target alone.
    pub fn target_only(k: usize, n_t: usize, n_s: usize) -> Self {
        let mut w = DVector::zeros(k + 1);
        w[0] = T::from_usize_lossy(n_t + k * n_s) / T::from_usize_lossy(n_t);
        Self { w, normalized: true }
    }

    pub fn k(&self) -> usize {
        self.w.len() - 1
    }

    /// `Σ_k (n_k/N) w_k`.
    pub fn mass(&self, n_t: usize, n_s: usize) -> T {
        let n = T::from_usize_lossy(n_t + self.k() * n_s);
        let mut total = T::from_usize_lossy(n_t) * self.w[0];
        for k in 1..self.w.len() {
            total += T::from_usize_lossy(n_s) * self.w[k];
        }
        total / n
    }
}

/// Rescales to `Σ_k (n_k/N) w_k = 1`, zeroes weights below
/// [`WEIGHT_FLOOR`], and rescales once more.
pub fn normalize_weights<T: Real>(raw: &DVector<T>, n_t: usize, n_s: usize) -> Result<SampleWeights<T>> {
    if raw.is_empty() {
        return Err(invalid("weight vector is empty"));
    }
    if raw.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
        return Err(invalid("sample weights must be finite and nonnegative"));
    }
    let scaled = rescale(raw, n_t, n_s)?;
    let floor = T::cst(WEIGHT_FLOOR);
    if scaled.iter().all(|w| *w == T::zero() || *w >= floor) {
        return Ok(SampleWeights { w: scaled, normalized: true });
    }
    let snapped = scaled.map(|w| if w < floor { T::zero() } else { w });
    Ok(SampleWeights {
        w: rescale(&snapped, n_t, n_s)?,
        normalized: true,
    })
}

fn rescale<T: Real>(raw: &DVector<T>, n_t: usize, n_s: usize) -> Result<DVector<T>> {
    let mass = SampleWeights::raw(raw.clone()).mass(n_t, n_s);
    if mass == T::zero() {
        return Err(invalid("all sample weights are zero"));
    }
    Ok(raw / mass)
}

/// `κ_S(w) = Σ_k n_k w_k² / N` and `h̄(w) = Σ_{k≥1} n_k w_k h_k / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SDiagnostics<T> {
    pub kappa_s: T,
    pub h_bar: T,
}

pub fn kappa_s_hbar<T: Real>(w: &SampleWeights<T>, h: &[T], n_t: usize, n_s: usize) -> Result<SDiagnostics<T>> {
    if h.len() != w.k() {
        return Err(dimension(format!("{} informative levels for {} sources", h.len(), w.k())));
    }
    let n = T::from_usize_lossy(n_t + w.k() * n_s);
    let (nt, ns) = (T::from_usize_lossy(n_t), T::from_usize_lossy(n_s));
    let mut kappa = nt * w.w[0] * w.w[0];
    let mut h_bar = T::zero();
    for k in 1..=w.k() {
        kappa += ns * w.w[k] * w.w[k];
        h_bar += ns * w.w[k] * h[k - 1];
    }
    Ok(SDiagnostics {
        kappa_s: kappa / n,
        h_bar: h_bar / n,
    })
}

/// Penalty levels and the constraint radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SHyperparams<T> {
    pub lambda0: T,
    pub lambda1: T,
    /// Radius of the target-gradient constraint; infinite disables it.
    pub lambda_t: T,
    pub c0: f64,
    pub c1: f64,
    /// Weight on the contrast term of the weight-selection program.
    pub lambda_w: f64,
}

impl<T: Real> SHyperparams<T> {
    /// Fixed levels, no schedule behind them.
    pub fn fixed(lambda0: T, lambda1: T, lambda_t: T) -> Self {
        Self {
            lambda0,
            lambda1,
            lambda_t,
            c0: f64::NAN,
            c1: f64::NAN,
            lambda_w: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda0", self.lambda0), ("lambda1", self.lambda1)] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(invalid(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        if !(self.lambda_t >= T::zero()) {
            return Err(invalid(format!("lambda_t = {} must be nonnegative", self.lambda_t)));
        }
        Ok(())
    }
}

/// Problem sizes used by the tuning formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub p: usize,
    pub n_t: usize,
    pub n_s: usize,
    pub k: usize,
}

impl Dims {
    pub fn of<T: Real>(problem: &TransferProblem<T>) -> Self {
        Self {
            p: problem.p(),
            n_t: problem.n_t(),
            n_s: problem.n_s(),
            k: problem.k(),
        }
    }

    pub fn n_total(&self) -> usize {
        self.n_t + self.k * self.n_s
    }

    fn log_p(&self) -> f64 {
        (self.p as f64).ln()
    }
}

/// Rate-matched levels for weights `w`, sparsity `s_hat` and informative
/// levels `h_hats`:
///
/// - `λ₀ = c₀[κ_S^{-1/2}(h̄² log p/(s² n_T))^{1/4} + (log p/N)^{1/2}]`
/// - `λ₁ = c₀(n_S/N)(log p/n_T)^{1/2}`
/// - `λ_T = c₁(log p/n_T)^{1/2}`
///
/// A zero `s_hat` is replaced by one and reported as
/// [`FitFlag::SparsityFloor`].
pub fn lambda_schedule<T: Real>(
    w: &SampleWeights<T>,
    s_hat: usize,
    h_hats: &[f64],
    dims: Dims,
    c0: f64,
    c1: f64,
) -> Result<(SHyperparams<T>, Option<FitFlag>)> {
    if w.k() != dims.k {
        return Err(dimension(format!("{} source weights for K = {}", w.k(), dims.k)));
    }
    if h_hats.iter().any(|h| !(*h >= 0.0)) {
        return Err(invalid("informative levels must be nonnegative"));
    }
    let (s, flag) = if s_hat == 0 { (1, Some(FitFlag::SparsityFloor)) } else { (s_hat, None) };
    let h: Vec<T> = h_hats.iter().map(|&v| T::cst(v)).collect();
    let diag = kappa_s_hbar(w, &h, dims.n_t, dims.n_s)?;
    let (kappa, h_bar) = (diag.kappa_s.as_f64(), diag.h_bar.as_f64());
    let log_p = dims.log_p();
    let n = dims.n_total() as f64;
    let (n_t, n_s) = (dims.n_t as f64, dims.n_s as f64);
    let contrast_term = if h_bar == 0.0 {
        0.0
    } else {
        kappa.powf(-0.5) * (h_bar * h_bar * log_p / ((s * s) as f64 * n_t)).powf(0.25)
    };
    let lambda0 = c0 * (contrast_term + (log_p / n).sqrt());
    let lambda1 = c0 * (n_s / n) * (log_p / n_t).sqrt();
    let lambda_t = c1 * (log_p / n_t).sqrt();
    Ok((
        SHyperparams {
            lambda0: T::cst(lambda0),
            lambda1: T::cst(lambda1),
            lambda_t: T::cst(lambda_t),
            c0,
            c1,
            lambda_w: 0.0,
        },
        flag,
    ))
}

/// Per-task Gram blocks `X^(k)ᵀX^(k)`, `X^(k)ᵀy^(k)` and `‖y^(k)‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGrams<T: Real> {
    pub xtx: Vec<DMatrix<T>>,
    pub xty: Vec<DVector<T>>,
    pub yty: Vec<T>,
    dims: Dims,
}

impl<T: Real> TaskGrams<T> {
    pub fn new(problem: &TransferProblem<T>) -> Self {
        let mut out = Self {
            xtx: Vec::with_capacity(problem.k() + 1),
            xty: Vec::with_capacity(problem.k() + 1),
            yty: Vec::with_capacity(problem.k() + 1),
            dims: Dims::of(problem),
        };
        for task in problem.tasks() {
            out.xtx.push(task.x.transpose() * &task.x);
            out.xty.push(task.x.transpose() * &task.y);
            out.yty.push(task.y.norm_squared());
        }
        out
    }

    /// Same sources with the target replaced by the given rows of `problem`.
    fn with_target_rows(&self, problem: &TransferProblem<T>, rows: &[usize]) -> Self {
        let x = problem.target().x.select_rows(rows);
        let y = select(&problem.target().y, rows);
        let mut out = self.clone();
        out.xtx[0] = x.transpose() * &x;
        out.xty[0] = x.transpose() * &y;
        out.yty[0] = y.norm_squared();
        out.dims.n_t = rows.len();
        out
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
}

/// Solves the weighted constrained program for fixed weights and levels.
///
/// Weights are divided by their mass `Σ(n_k/N)w_k` first, so `w` and `c·w`
/// give the same result; objective and KKT residual are those of the
/// normalized problem. Sources with zero weight are dropped and their
/// contrasts reported as zero.
pub fn fit_s_adatrans<T: Real>(
    problem: &TransferProblem<T>,
    w: &SampleWeights<T>,
    hp: &SHyperparams<T>,
    settings: &AdmmSettings<T>,
) -> Result<Estimate<T>> {
    fit_grams(&TaskGrams::new(problem), w, hp, settings, None)
}

pub fn fit_grams<T: Real>(
    grams: &TaskGrams<T>,
    w: &SampleWeights<T>,
    hp: &SHyperparams<T>,
    settings: &AdmmSettings<T>,
    warm: Option<&Estimate<T>>,
) -> Result<Estimate<T>> {
    let dims = grams.dims;
    if w.k() != dims.k {
        return Err(dimension(format!("{} source weights for K = {}", w.k(), dims.k)));
    }
    hp.validate()?;
    if w.w.iter().any(|x| !(*x >= T::zero()) || !x.is_finite()) {
        return Err(invalid("sample weights must be finite and nonnegative"));
    }
    let wn = rescale(&w.w, dims.n_t, dims.n_s)?;
    let p = dims.p;
    let active: Vec<usize> = (1..=dims.k).filter(|&k| wn[k] > T::zero()).collect();
    let d = p * (1 + active.len());
    let n = T::from_usize_lossy(dims.n_total());
    let two_n = T::cst(2.0) / n;

    let mut hessian = DMatrix::zeros(d, d);
    let mut linear = DVector::zeros(d);
    let mut constant = T::zero();
    for k in std::iter::once(0).chain(active.iter().copied()) {
        if wn[k] == T::zero() {
            continue;
        }
        let g = &grams.xtx[k] * (two_n * wn[k]);
        let r = &grams.xty[k] * (two_n * wn[k]);
        let mut hb = hessian.view_mut((0, 0), (p, p));
        hb += &g;
        let mut lb = linear.rows_mut(0, p);
        lb += &r;
        constant += wn[k] * grams.yty[k] / n;
    }
    for (slot, &k) in active.iter().enumerate() {
        let off = p * (slot + 1);
        let g = &grams.xtx[k] * (two_n * wn[k]);
        hessian.view_mut((0, off), (p, p)).copy_from(&g);
        hessian.view_mut((off, 0), (p, p)).copy_from(&g);
        hessian.view_mut((off, off), (p, p)).copy_from(&g);
        linear.rows_mut(off, p).copy_from(&(&grams.xty[k] * (two_n * wn[k])));
    }

    let kappa = kappa_s_hbar(&SampleWeights::raw(wn.clone()), &vec![T::zero(); dims.k], dims.n_t, dims.n_s)?.kappa_s;
    let mut penalty = DVector::from_element(d, hp.lambda0 * kappa.sqrt());
    for (slot, &k) in active.iter().enumerate() {
        penalty.rows_mut(p * (slot + 1), p).fill(hp.lambda1 * wn[k]);
    }

    let nt = T::from_usize_lossy(dims.n_t);
    let constraint = LinfConstraint {
        map: &grams.xtx[0] / nt,
        offset: &grams.xty[0] / nt,
        radius: hp.lambda_t,
        block: 0..p,
    };
    let loss = QuadraticLoss { hessian, linear, constant };

    let start = warm.map(|e| {
        let mut theta = DVector::zeros(d);
        theta.rows_mut(0, p).copy_from(&e.beta_hat);
        for (slot, &k) in active.iter().enumerate() {
            if let Some(delta) = e.delta_hats.get(k - 1) {
                theta.rows_mut(p * (slot + 1), p).copy_from(delta);
            }
        }
        theta
    });
    let fit = admm_linf_constrained(&loss, &constraint, &penalty, settings, start.as_ref())?;

    let beta_hat = fit.theta.rows(0, p).into_owned();
    let mut delta_hats = vec![DVector::zeros(p); dims.k];
    for (slot, &k) in active.iter().enumerate() {
        delta_hats[k - 1] = fit.theta.rows(p * (slot + 1), p).into_owned();
    }
    let mut est = Estimate {
        beta_hat,
        delta_hats,
        iterations: fit.iterations,
        kkt_residual: fit.kkt_residual,
        objective_value: fit.objective,
        converged: fit.converged,
        constraint_violation: Some(fit.constraint_violation),
        flags: Vec::new(),
    };
    if !fit.converged {
        est.flag(FitFlag::NotConverged);
    }
    Ok(est)
}

/// Minimizes `Σ_k a_k x_k² + Σ_k l_k x_k` over the probability simplex.
///
/// With every `a_k > 0` the solution is `x_k = max(0, (ν − l_k)/(2a_k))`
/// with `ν` fixed by `Σ x_k = 1`, found by scanning the coordinates in
/// increasing `l_k`. With every `a_k = 0` the problem is linear and all mass
/// goes to the smallest `l_k`, ties to the lowest index.
pub fn water_fill(a: &[f64], l: &[f64]) -> Result<Vec<f64>> {
    let m = a.len();
    if m == 0 || l.len() != m {
        return Err(dimension("water filling needs matching nonempty coefficient vectors"));
    }
    if a.iter().chain(l).any(|v| !v.is_finite()) || a.iter().any(|&v| v < 0.0) {
        return Err(invalid("water filling needs finite coefficients and a ≥ 0"));
    }
    if a.iter().all(|&v| v == 0.0) {
        let mut best = 0;
        for k in 1..m {
            if l[k] < l[best] {
                best = k;
            }
        }
        let mut x = vec![0.0; m];
        x[best] = 1.0;
        return Ok(x);
    }
    if a.iter().any(|&v| v == 0.0) {
        return Err(invalid("water filling needs all a_k positive or all zero"));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| l[i].total_cmp(&l[j]).then(i.cmp(&j)));
    let (mut inv_sum, mut lin_sum) = (0.0, 0.0);
    let mut nu = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        inv_sum += 1.0 / (2.0 * a[k]);
        lin_sum += l[k] / (2.0 * a[k]);
        nu = (1.0 + lin_sum) / inv_sum;
        let next = order.get(rank + 1).map(|&j| l[j]);
        if next.is_none_or(|lj| nu <= lj) {
            break;
        }
    }
    let mut x: Vec<f64> = (0..m).map(|k| ((nu - l[k]) / (2.0 * a[k])).max(0.0)).collect();
    let total: f64 = x.iter().sum();
    for v in &mut x {
        *v /= total;
    }
    Ok(x)
}

/// Objective of [`water_fill`].
pub fn simplex_objective(a: &[f64], l: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(l).zip(x).map(|((a, l), x)| a * x * x + l * x).sum()
}

/// Output of the weight-selection program.
#[derive(Debug, Clone, PartialEq)]
pub struct QpWeights<T: Real> {
    /// Exact simplex solution `w′`, before mapping and flooring.
    pub simplex: Vec<f64>,
    pub weights: SampleWeights<T>,
    pub quadratic: f64,
    pub linear: Vec<f64>,
}

/// Pilot summaries: `ŝ = ‖β̂‖₀` and `ĥ_k = ‖δ̂^(k)‖₁`.
pub fn pilot_summaries<T: Real>(init: &Estimate<T>) -> (usize, Vec<f64>) {
    let s_hat = init.beta_hat.iter().filter(|v| **v != T::zero()).count();
    let h_hats = init.delta_hats.iter().map(|d| d.lp_norm(1).as_f64()).collect();
    (s_hat, h_hats)
}

/// Data-driven weights: minimize
/// `Σ_k (ŝ log p/n_S) w′_k² + λ_W Σ_{k≥1} ĥ_k √(log p/n_T) w′_k` on the
/// simplex, then map `w₀ = (N/n_T) w′₀`, `w_k = (N/n_S) w′_k`. The quadratic
/// coefficient uses `n_S` for every task, the target included.
pub fn select_weights_qp<T: Real>(init: &Estimate<T>, lambda_w: f64, dims: Dims) -> Result<QpWeights<T>> {
    if init.delta_hats.len() != dims.k {
        return Err(dimension(format!("pilot has {} contrasts for K = {}", init.delta_hats.len(), dims.k)));
    }
    if !(lambda_w >= 0.0) || !lambda_w.is_finite() {
        return Err(invalid(format!("lambda_w = {lambda_w} must be finite and nonnegative")));
    }
    let (s_hat, h_hats) = pilot_summaries(init);
    let log_p = dims.log_p();
    let n_s = dims.n_s.max(1) as f64;
    let quadratic = s_hat as f64 * log_p / n_s;
    let rate = (log_p / dims.n_t as f64).sqrt();
    let linear: Vec<f64> = std::iter::once(0.0)
        .chain(h_hats.iter().map(|h| lambda_w * h * rate))
        .collect();
    let simplex = water_fill(&vec![quadratic; dims.k + 1], &linear)?;
    let weights = simplex_to_weights(&simplex, dims)?;
    Ok(QpWeights {
        simplex,
        weights,
        quadratic,
        linear,
    })
}

fn simplex_to_weights<T: Real>(v: &[f64], dims: Dims) -> Result<SampleWeights<T>> {
    let n = dims.n_total() as f64;
    let raw = DVector::from_fn(v.len(), |k, _| {
        let nk = if k == 0 { dims.n_t } else { dims.n_s };
        T::cst(n * v[k] / nk as f64)
    });
    normalize_weights(&raw, dims.n_t, dims.n_s)
}

/// Error-bound minimizing weights for one source with known sparsity `s`
/// and informative level `h1`:
/// `w₁′ = max{(s log p − (c_Σ/2)√n_T h₁ √log p) / (s log p (1 + n_T/n_S)), 0}`,
/// `w₀ = (N/n_T)(1 − w₁′)`, `w₁ = (N/n_S) w₁′`.
///
/// Evaluated in a form that returns exactly `(1, 1)` at `h₁ = 0`.
pub fn optimal_weights_k1<T: Real>(s: usize, p: usize, n_t: usize, n_s: usize, h1: f64, c_sigma: f64) -> Result<SampleWeights<T>> {
    if s == 0 || p < 2 || n_t == 0 || n_s == 0 || !(h1 >= 0.0) || !(c_sigma > 0.0) {
        return Err(invalid("optimal weights need s, n_T, n_S, c_Σ positive, p ≥ 2 and h₁ ≥ 0"));
    }
    let log_p = (p as f64).ln();
    let s_log_p = s as f64 * log_p;
    // w₁ = (N/n_S)·w₁′ simplifies to the clamped ratio below since N = n_T + n_S.
    let ratio = (1.0 - 0.5 * c_sigma * (n_t as f64).sqrt() * h1 * log_p.sqrt() / s_log_p).max(0.0);
    let w1 = ratio;
    let w0 = (n_t as f64 + n_s as f64 - n_s as f64 * w1) / n_t as f64;
    Ok(SampleWeights {
        w: DVector::from_vec(vec![T::cst(w0), T::cst(w1)]),
        normalized: true,
    })
}

/// Error-bound minimizing weights for any number of sources: minimizes
/// `κ_S(w) s log p/N + c_Σ h̄(w) √(log p/n_T)` under the normalization.
/// Agrees with [`optimal_weights_k1`] for one source.
pub fn oracle_sample_weights<T: Real>(s: usize, h: &[f64], dims: Dims, c_sigma: f64) -> Result<SampleWeights<T>> {
    if h.len() != dims.k {
        return Err(dimension(format!("{} informative levels for K = {}", h.len(), dims.k)));
    }
    let s = s.max(1) as f64;
    let log_p = dims.log_p();
    let rate = (log_p / dims.n_t as f64).sqrt();
    let a: Vec<f64> = (0..=dims.k)
        .map(|k| s * log_p / if k == 0 { dims.n_t } else { dims.n_s } as f64)
        .collect();
    let l: Vec<f64> = std::iter::once(0.0).chain(h.iter().map(|hk| c_sigma * hk * rate)).collect();
    let v = water_fill(&a, &l)?;
    simplex_to_weights(&v, dims)
}

/// Tuning of the data-driven pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SConfig<T: Real> {
    /// Candidates for `λ_W`.
    pub lambda_w_grid: Vec<f64>,
    /// Joint multipliers applied to `(c₀, c₁)`.
    pub multipliers: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
    pub folds: usize,
    pub seed: u64,
    pub admm: AdmmSettings<T>,
    /// Settings of the pilot fit.
    pub pilot: FConfig<T>,
}

impl<T: Real> Default for SConfig<T> {
    fn default() -> Self {
        let mut grid = vec![0.0];
        grid.extend(log_grid(0.01, 10.0, 7));
        Self {
            lambda_w_grid: grid,
            multipliers: log_grid(0.25, 8.0, 8),
            c0: 1.0,
            c1: 1.5,
            folds: 5,
            seed: 0,
            admm: AdmmSettings::default(),
            pilot: FConfig::default(),
        }
    }
}

impl<T: Real> SConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_w_grid.is_empty() || self.lambda_w_grid.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("lambda_w grid must be nonempty, finite and nonnegative"));
        }
        if self.multipliers.is_empty() || self.multipliers.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(invalid("multiplier grid must be nonempty, finite and positive"));
        }
        if !(self.c0 > 0.0 && self.c1 > 0.0) {
            return Err(invalid("c0 and c1 must be positive"));
        }
        self.pilot.validate()
    }
}

/// How the weights of a cross-validated fit are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// Weight-selection program on the pilot estimate.
    Qp,
    /// Weights, sparsity and informative levels supplied by the caller.
    Known { weights: DVector<f64>, s: usize, h: Vec<f64> },
}

/// Held-out target MSE, averaged over folds, for each candidate.
///
/// Each candidate is `(weights, s, h, multiplier)`; the schedule is
/// recomputed at the training sizes, so `λ_T` follows the fold size.
fn cv_scores<T: Real>(
    problem: &TransferProblem<T>,
    grams: &TaskGrams<T>,
    candidates: &[(SampleWeights<T>, usize, Vec<f64>, f64)],
    order: &[usize],
    config: &SConfig<T>,
) -> Result<Vec<f64>> {
    let split = Folds::new(problem.n_t(), config.folds, config.seed)?;
    let mut scores = vec![0.0; candidates.len()];
    let mut admm = config.admm;
    // CV fits only rank candidates; a looser tolerance keeps them cheap.
    admm.tol_primal = admm.tol_primal.max(T::cst(1e-5));
    admm.tol_dual = admm.tol_dual.max(T::cst(1e-5));
    admm.inner.tol = admm.inner.tol.max(T::cst(1e-7));
    for f in 0..split.len() {
        let train = grams.with_target_rows(problem, &split.train(f));
        let test = split.test(f);
        let xv = problem.target().x.select_rows(test);
        let yv = select(&problem.target().y, test);
        let mut warm: Option<Estimate<T>> = None;
        for &i in order {
            let (w, s, h, m) = &candidates[i];
            let (hp, _) = lambda_schedule(w, *s, h, train.dims(), config.c0 * m, config.c1 * m)?;
            let est = fit_grams(&train, w, &hp, &admm, warm.as_ref())?;
            scores[i] += prediction_mse(&xv, &yv, &est.beta_hat) / split.len() as f64;
            warm = Some(est);
        }
    }
    Ok(scores)
}

/// Cross-validates `λ_W` at unit multiplier; ties go to the smallest `λ_W`.
/// Returns the selected value and the score of every grid value.
pub fn cv_lambda_w<T: Real>(
    problem: &TransferProblem<T>,
    init: &Estimate<T>,
    config: &SConfig<T>,
) -> Result<(f64, Vec<f64>)> {
    config.validate()?;
    let dims = Dims::of(problem);
    let grid = &config.lambda_w_grid;
    if grid.len() == 1 {
        return Ok((grid[0], vec![0.0]));
    }
    let (s_hat, h_hats) = pilot_summaries(init);
    let candidates = grid
        .iter()
        .map(|&lw| Ok((select_weights_qp(init, lw, dims)?.weights, s_hat, h_hats.clone(), 1.0)))
        .collect::<Result<Vec<_>>>()?;
    let grams = TaskGrams::new(problem);
    let order: Vec<usize> = (0..grid.len()).collect();
    let scores = cv_scores(problem, &grams, &candidates, &order, config)?;
    let first = argmin_score(&scores, TieBreak::First).expect("grid is nonempty");
    Ok((grid[smallest_tied(grid, &scores, first)], scores))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SAutoFit<T: Real> {
    pub estimate: Estimate<T>,
    pub weights: SampleWeights<T>,
    pub hyper: SHyperparams<T>,
    pub multiplier: f64,
    pub init: Option<InitialFit<T>>,
}

/// Fits with weights from `rule`, choosing `λ_W` (for [`WeightRule::Qp`])
/// and then the joint multiplier by target-row cross-validation. Multiplier
/// ties go to the larger value.
pub fn fit_s_adatrans_auto<T: Real>(
    problem: &TransferProblem<T>,
    rule: &WeightRule,
    config: &SConfig<T>,
) -> Result<SAutoFit<T>> {
    config.validate()?;
    let dims = Dims::of(problem);
    let (weights, s, h, lambda_w, init) = match rule {
        WeightRule::Qp => {
            let init = fit_pilot(problem, &config.pilot)?;
            let (lw, _) = cv_lambda_w(problem, &init.estimate, config)?;
            let (s_hat, h_hats) = pilot_summaries(&init.estimate);
            let w = select_weights_qp(&init.estimate, lw, dims)?.weights;
            (w, s_hat, h_hats, lw, Some(init))
        }
        WeightRule::Known { weights, s, h } => {
            let raw = DVector::from_iterator(weights.len(), weights.iter().map(|&v| T::cst(v)));
            (normalize_weights(&raw, dims.n_t, dims.n_s)?, *s, h.clone(), f64::NAN, None)
        }
    };
    let grams = TaskGrams::new(problem);
    let grid = &config.multipliers;
    let candidates: Vec<_> = grid.iter().map(|&m| (weights.clone(), s, h.clone(), m)).collect();
    let multiplier = if grid.len() == 1 {
        grid[0]
    } else {
        let scores = cv_scores(problem, &grams, &candidates, &descending(grid), config)?;
        let first = argmin_score(&scores, TieBreak::First).expect("grid is nonempty");
        grid[largest_tied(grid, &scores, first)]
    };
    let (mut hyper, flag) = lambda_schedule(&weights, s, &h, dims, config.c0 * multiplier, config.c1 * multiplier)?;
    hyper.lambda_w = lambda_w;
    let mut estimate = fit_grams(&grams, &weights, &hyper, &config.admm, None)?;
    if let Some(flag) = flag {
        estimate.flag(flag);
    }
    Ok(SAutoFit {
        estimate,
        weights,
        hyper,
        multiplier,
        init,
    })
}
