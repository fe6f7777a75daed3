//! Domain types shared by the estimators, plus evaluation metrics.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{dimension, invalid, Result};
use crate::scalar::Real;

/// Zero-based feature index set.
pub type Support = BTreeSet<usize>;

/// One regression sample: design matrix and response.
#[derive(Debug, Clone, PartialEq)]
pub struct Task<T: Real> {
    pub x: DMatrix<T>,
    pub y: DVector<T>,
}

impl<T: Real> Task<T> {
    pub fn new(x: DMatrix<T>, y: DVector<T>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(dimension(format!(
                "design has {} rows but response has length {}",
                x.nrows(),
                y.len()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
        }
    }
}

/// One target sample and `K` source samples of a common size `n_S`.
///
/// All design matrices share the column count `p`. Immutable after
/// construction so it can be shared across replication workers.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferProblem<T: Real> {
    target: Task<T>,
    sources: Vec<Task<T>>,
}

impl<T: Real> TransferProblem<T> {
    pub fn new(target: Task<T>, sources: Vec<Task<T>>) -> Result<Self> {
        let p = target.p();
        if p == 0 {
            return Err(invalid("feature dimension p must be positive"));
        }
        if target.n() == 0 {
            return Err(invalid("target sample is empty"));
        }
        if let Some(first) = sources.first() {
            let n_s = first.n();
            if n_s == 0 {
                return Err(invalid("source samples are empty"));
            }
            for (k, src) in sources.iter().enumerate() {
                if src.p() != p {
                    return Err(dimension(format!(
                        "source {} has {} columns, target has {}",
                        k + 1,
                        src.p(),
                        p
                    )));
                }
                if src.n() != n_s {
                    return Err(dimension(format!(
                        "source {} has {} rows; all sources must share n_S = {}",
                        k + 1,
                        src.n(),
                        n_s
                    )));
                }
            }
        }
        Ok(Self { target, sources })
    }

    /// Problem with the target sample only.
    pub fn target_only(target: Task<T>) -> Result<Self> {
        Self::new(target, Vec::new())
    }

    pub fn target(&self) -> &Task<T> {
        &self.target
    }

    pub fn sources(&self) -> &[Task<T>] {
        &self.sources
    }

    /// Task `k`, with `0` the target and `1..=K` the sources.
    pub fn task(&self, k: usize) -> &Task<T> {
        if k == 0 {
            &self.target
        } else {
            &self.sources[k - 1]
        }
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task<T>> {
        std::iter::once(&self.target).chain(self.sources.iter())
    }

    pub fn p(&self) -> usize {
        self.target.p()
    }

    pub fn n_t(&self) -> usize {
        self.target.n()
    }

    /// Common source sample size, `0` when there are no sources.
    pub fn n_s(&self) -> usize {
        self.sources.first().map_or(0, Task::n)
    }

    pub fn k(&self) -> usize {
        self.sources.len()
    }

    /// Total sample size `N = n_T + K n_S`.
    pub fn n_total(&self) -> usize {
        self.n_t() + self.k() * self.n_s()
    }

    /// Sample size of task `k` (`n_T` for the target).
    pub fn n_task(&self, k: usize) -> usize {
        if k == 0 {
            self.n_t()
        } else {
            self.n_s()
        }
    }

    /// Same sources, target restricted to the given rows. Used by
    /// cross-validation on the target sample.
    pub fn with_target_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::new(self.target.select_rows(rows), self.sources.clone())
    }

    /// Same target, only the listed sources (zero-based into `sources()`).
    pub fn with_sources(&self, keep: &[usize]) -> Result<Self> {
        let sources = keep.iter().map(|&k| self.sources[k].clone()).collect();
        Self::new(self.target.clone(), sources)
    }
}

/// True parameters of a synthetic instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T: Real> {
    pub beta: DVector<T>,
    /// Source-target contrasts, one per source.
    pub deltas: Vec<DVector<T>>,
    pub s: usize,
    pub support0: Support,
    pub supports: Vec<Support>,
    /// Minimum nonzero magnitude of `beta`.
    pub h_min_0: T,
    /// Minimum nonzero magnitude of each contrast (zero when the contrast vanishes).
    pub h_min_k: Vec<T>,
    /// `l1` norms of the contrasts.
    pub h_k: Vec<T>,
}

impl<T: Real> GroundTruth<T> {
    /// Derives supports and magnitude summaries from `beta` and the contrasts.
    pub fn from_parameters(beta: DVector<T>, deltas: Vec<DVector<T>>) -> Result<Self> {
        let p = beta.len();
        if let Some(d) = deltas.iter().find(|d| d.len() != p) {
            return Err(dimension(format!(
                "contrast has length {} but beta has length {p}",
                d.len()
            )));
        }
        let support0 = support_of(&beta, T::zero());
        let supports: Vec<Support> = deltas.iter().map(|d| support_of(d, T::zero())).collect();
        let h_min_0 = min_abs_on(&beta, &support0);
        let h_min_k = deltas
            .iter()
            .zip(&supports)
            .map(|(d, s)| min_abs_on(d, s))
            .collect();
        let h_k = deltas.iter().map(|d| d.lp_norm(1)).collect();
        Ok(Self {
            s: support0.len(),
            beta,
            deltas,
            support0,
            supports,
            h_min_0,
            h_min_k,
            h_k,
        })
    }

    pub fn k(&self) -> usize {
        self.deltas.len()
    }
}

fn min_abs_on<T: Real>(v: &DVector<T>, support: &Support) -> T {
    support
        .iter()
        .map(|&j| v[j].abs())
        .reduce(|a, b| a.min(b))
        .unwrap_or_else(T::zero)
}

/// Indices whose magnitude exceeds `threshold`.
pub fn support_of<T: Real>(v: &DVector<T>, threshold: T) -> Support {
    v.iter()
        .enumerate()
        .filter(|(_, x)| x.abs() > threshold)
        .map(|(j, _)| j)
        .collect()
}

/// Covariance and noise level of one task's generating distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDistribution<T: Real> {
    pub sigma_cov: DMatrix<T>,
    pub noise_sd: T,
}

impl<T: Real> TaskDistribution<T> {
    /// Validates symmetry and positive definiteness.
    pub fn new(sigma_cov: DMatrix<T>, noise_sd: T) -> Result<Self> {
        if !sigma_cov.is_square() {
            return Err(dimension("covariance must be square"));
        }
        let asym = (&sigma_cov - sigma_cov.transpose()).amax();
        if asym > T::cst(1e-12) * (T::one() + sigma_cov.amax()) {
            return Err(invalid("covariance is not symmetric"));
        }
        if sigma_cov.clone().cholesky().is_none() {
            return Err(invalid("covariance is not positive definite"));
        }
        if !(noise_sd >= T::zero()) || !noise_sd.is_finite() {
            return Err(invalid("noise standard deviation must be finite and nonnegative"));
        }
        Ok(Self { sigma_cov, noise_sd })
    }

    /// Smallest and largest covariance eigenvalue.
    pub fn eigen_bounds(&self) -> (T, T) {
        let ev = self.sigma_cov.clone().symmetric_eigenvalues();
        (ev.min(), ev.max())
    }
}

/// Diagnostic annotations attached to a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitFlag {
    /// Iteration budget exhausted; the best iterate was returned.
    NotConverged,
    /// A numerically singular system was solved with the pseudo-inverse.
    PseudoInverse,
    /// An estimated sparsity of zero was replaced by one in a tuning formula.
    SparsityFloor,
}

/// Fitted target parameter and contrasts with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<T: Real> {
    pub beta_hat: DVector<T>,
    pub delta_hats: Vec<DVector<T>>,
    pub iterations: usize,
    /// Optimality violation measured on the exact problem that was solved.
    pub kkt_residual: T,
    pub objective_value: T,
    pub converged: bool,
    /// `max(‖c − Mβ̂‖∞ − λ_T, 0)` for constrained fits.
    pub constraint_violation: Option<T>,
    pub flags: Vec<FitFlag>,
}

impl<T: Real> Estimate<T> {
    /// Estimate from a closed form: no iterations, exact optimality.
    pub fn exact(beta_hat: DVector<T>, delta_hats: Vec<DVector<T>>, objective_value: T) -> Self {
        Self {
            beta_hat,
            delta_hats,
            iterations: 0,
            kkt_residual: T::zero(),
            objective_value,
            converged: true,
            constraint_violation: None,
            flags: Vec::new(),
        }
    }

    pub fn flag(&mut self, flag: FitFlag) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.beta_hat.iter().all(|x| x.is_finite())
            && self.delta_hats.iter().flat_map(|d| d.iter()).all(|x| x.is_finite())
    }
}

/// Squared Euclidean distance `‖β̂ − β‖₂²`.
pub fn l2_error_sq<T: Real>(beta_hat: &DVector<T>, beta: &DVector<T>) -> Result<T> {
    if beta_hat.len() != beta.len() {
        return Err(dimension(format!(
            "estimate has length {} but truth has length {}",
            beta_hat.len(),
            beta.len()
        )));
    }
    Ok((beta_hat - beta).norm_squared())
}

/// F1 score (harmonic mean of precision and recall) of a support estimate.
/// Two empty sets agree perfectly and score `1`.
pub fn support_f1(estimated: &Support, truth: &Support) -> f64 {
    if estimated.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let hits = estimated.intersection(truth).count() as f64;
    if hits == 0.0 {
        return 0.0;
    }
    let precision = hits / estimated.len() as f64;
    let recall = hits / truth.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
