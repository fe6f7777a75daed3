//! Cyclic coordinate descent for weighted-`ℓ1` penalized quadratics.
//!
//! Two representations of the smooth part share one driver:
//!
//! - [`WeightedLasso`]: `(1/n_obj)·‖√W(b − Aθ)‖₂²`, iterating on the residual;
//! - [`QuadraticLasso`]: `½θᵀHθ − lᵀθ`, iterating on the gradient (Gram form).
//!
//! Coordinates are visited in ascending order. Coordinates with an infinite
//! penalty weight are pinned at zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{dimension, invalid, Result};
use crate::linalg::soft_threshold;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdSettings<T> {
    /// Convergence threshold on the largest coordinate change in a full sweep.
    pub tol: T,
    /// Budget of sweeps (full and active-set sweeps both count).
    pub max_iter: usize,
    /// Iterate on the nonzero coordinates between full sweeps.
    pub active_set: bool,
}

impl<T: Real> Default for CdSettings<T> {
    fn default() -> Self {
        Self {
            tol: T::cst(1e-8),
            max_iter: 10_000,
            active_set: true,
        }
    }
}

impl<T: Real> CdSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(invalid("coordinate descent tolerance must be positive"));
        }
        Ok(())
    }
}

/// Result of a coordinate descent run. On budget exhaustion the last
/// iterate is returned (the objective is monotone, so it is also the best).
#[derive(Debug, Clone, PartialEq)]
pub struct CdFit<T: Real> {
    pub theta: DVector<T>,
    pub iterations: usize,
    pub kkt_residual: T,
    pub objective: T,
    pub converged: bool,
}

/// Smooth part of the objective, as seen coordinate by coordinate.
trait CoordinateModel<T: Real> {
    fn dim(&self) -> usize;
    /// Partial derivative of the smooth loss at the current iterate.
    fn gradient(&self, j: usize) -> T;
    fn curvature(&self, j: usize) -> T;
    /// Applies `θ_j += delta` to the cached state.
    fn shift(&mut self, j: usize, delta: T);
    fn loss(&self, theta: &DVector<T>) -> T;
    /// Recomputes cached state from scratch to shed rounding drift.
    fn refresh(&mut self, theta: &DVector<T>);
}

fn penalty_value<T: Real>(weights: &DVector<T>, theta: &DVector<T>) -> T {
    weights
        .iter()
        .zip(theta.iter())
        .filter(|(w, _)| w.is_finite())
        .fold(T::zero(), |acc, (&w, &t)| acc + w * t.abs())
}

pub(crate) fn subgradient_violation<T: Real>(g: T, w: T, t: T) -> T {
    if !w.is_finite() {
        // pinned coordinate
        T::zero()
    } else if t != T::zero() {
        (g + w * t.signum()).abs()
    } else {
        (g.abs() - w).max(T::zero())
    }
}

fn model_kkt<T: Real, M: CoordinateModel<T>>(model: &M, weights: &DVector<T>, theta: &DVector<T>) -> T {
    (0..model.dim()).fold(T::zero(), |acc, j| {
        acc.max(subgradient_violation(model.gradient(j), weights[j], theta[j]))
    })
}

/// Exact minimization along coordinate `j`; returns the absolute change.
fn update_coordinate<T: Real, M: CoordinateModel<T>>(
    model: &mut M,
    weights: &DVector<T>,
    theta: &mut DVector<T>,
    j: usize,
) -> T {
    let old = theta[j];
    let w = weights[j];
    let h = model.curvature(j);
    let new = if !w.is_finite() || h <= T::zero() {
        // pinned, or the loss is flat along this coordinate
        T::zero()
    } else {
        soft_threshold(old * h - model.gradient(j), w) / h
    };
    let delta = new - old;
    if delta != T::zero() {
        theta[j] = new;
        model.shift(j, delta);
    }
    delta.abs()
}

fn run_cd<T: Real, M: CoordinateModel<T>>(
    model: &mut M,
    weights: &DVector<T>,
    theta: &mut DVector<T>,
    settings: &CdSettings<T>,
) -> (usize, bool) {
    let d = model.dim();
    let mut sweeps = 0;
    let mut prev_obj = model.loss(theta) + penalty_value(weights, theta);
    let slack = T::cst(1e-9).max(T::default_epsilon() * T::cst(1e3));

    let mut check_monotone = |model: &M, theta: &DVector<T>| {
        if cfg!(debug_assertions) {
            let obj = model.loss(theta) + penalty_value(weights, theta);
            debug_assert!(
                obj <= prev_obj + slack * (T::one() + prev_obj.abs()),
                "coordinate descent objective increased: {prev_obj} -> {obj}"
            );
            prev_obj = obj;
        }
    };

    while sweeps < settings.max_iter {
        let mut max_change = T::zero();
        for j in 0..d {
            max_change = max_change.max(update_coordinate(model, weights, theta, j));
        }
        sweeps += 1;
        check_monotone(model, theta);

        if max_change <= settings.tol {
            model.refresh(theta);
            let kkt = model_kkt(model, weights, theta);
            if kkt <= T::cst(10.0) * settings.tol || max_change == T::zero() {
                return (sweeps, true);
            }
            continue;
        }

        if settings.active_set {
            let active: Vec<usize> = (0..d).filter(|&j| theta[j] != T::zero()).collect();
            while sweeps < settings.max_iter {
                let mut change = T::zero();
                for &j in &active {
                    change = change.max(update_coordinate(model, weights, theta, j));
                }
                sweeps += 1;
                check_monotone(model, theta);
                if change <= settings.tol {
                    break;
                }
            }
        }
    }
    model.refresh(theta);
    (sweeps, false)
}

fn check_penalty_weights<T: Real>(weights: &DVector<T>, d: usize) -> Result<()> {
    if weights.len() != d {
        return Err(dimension(format!("{} penalty weights for {d} coefficients", weights.len())));
    }
    if weights.iter().any(|w| !(*w >= T::zero())) {
        return Err(invalid("penalty weights must be nonnegative (and not NaN)"));
    }
    Ok(())
}

fn check_finite<'a, T: Real>(what: &str, values: impl IntoIterator<Item = &'a T>) -> Result<()> {
    if values.into_iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} contains non-finite entries")))
    }
}

fn initial_theta<T: Real>(warm: Option<&DVector<T>>, weights: &DVector<T>) -> Result<DVector<T>> {
    let d = weights.len();
    let mut theta = match warm {
        Some(w) if w.len() != d => {
            return Err(dimension(format!("warm start has length {}, expected {d}", w.len())))
        }
        Some(w) => w.clone(),
        None => DVector::zeros(d),
    };
    for j in 0..d {
        if !weights[j].is_finite() || !theta[j].is_finite() {
            theta[j] = T::zero();
        }
    }
    Ok(theta)
}

/// Weighted least squares plus weighted `ℓ1`:
/// `(1/n_obj)·Σ_i w_i (b_i − a_iᵀθ)² + Σ_j λ_j |θ_j|`.
#[derive(Debug, Clone, Copy)]
pub struct WeightedLasso<'a, T: Real> {
    pub design: &'a DMatrix<T>,
    pub response: &'a DVector<T>,
    pub sample_weights: Option<&'a DVector<T>>,
    pub penalty_weights: &'a DVector<T>,
    pub n_obj: T,
}

impl<'a, T: Real> WeightedLasso<'a, T> {
    pub fn new(design: &'a DMatrix<T>, response: &'a DVector<T>, penalty_weights: &'a DVector<T>, n_obj: T) -> Self {
        Self {
            design,
            response,
            sample_weights: None,
            penalty_weights,
            n_obj,
        }
    }

    pub fn with_sample_weights(mut self, weights: &'a DVector<T>) -> Self {
        self.sample_weights = Some(weights);
        self
    }

    fn validate(&self) -> Result<()> {
        let (n, d) = self.design.shape();
        if self.response.len() != n {
            return Err(dimension(format!("design has {n} rows, response has {}", self.response.len())));
        }
        check_penalty_weights(self.penalty_weights, d)?;
        check_finite("design", self.design.iter())?;
        check_finite("response", self.response.iter())?;
        if let Some(sw) = self.sample_weights {
            if sw.len() != n {
                return Err(dimension(format!("{} sample weights for {n} rows", sw.len())));
            }
            if sw.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
                return Err(invalid("sample weights must be finite and nonnegative"));
            }
        }
        if !(self.n_obj > T::zero()) || !self.n_obj.is_finite() {
            return Err(invalid("objective normalizer must be positive"));
        }
        Ok(())
    }

    pub fn objective(&self, theta: &DVector<T>) -> T {
        let model = ResidualModel::new(self, theta);
        model.loss(theta) + penalty_value(self.penalty_weights, theta)
    }
}

struct ResidualModel<'a, T: Real> {
    design: &'a DMatrix<T>,
    response: &'a DVector<T>,
    weights: Option<&'a DVector<T>>,
    scale: T,
    residual: DVector<T>,
    curvature: DVector<T>,
}

impl<'a, T: Real> ResidualModel<'a, T> {
    fn new(pb: &WeightedLasso<'a, T>, theta: &DVector<T>) -> Self {
        let scale = T::cst(2.0) / pb.n_obj;
        let curvature = DVector::from_iterator(
            pb.design.ncols(),
            pb.design.column_iter().map(|col| {
                let ss = match pb.sample_weights {
                    Some(w) => col.iter().zip(w.iter()).fold(T::zero(), |a, (&x, &wi)| a + wi * x * x),
                    None => col.norm_squared(),
                };
                scale * ss
            }),
        );
        let mut m = Self {
            design: pb.design,
            response: pb.response,
            weights: pb.sample_weights,
            scale,
            residual: DVector::zeros(pb.design.nrows()),
            curvature,
        };
        m.refresh(theta);
        m
    }
}

impl<T: Real> CoordinateModel<T> for ResidualModel<'_, T> {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn gradient(&self, j: usize) -> T {
        let col = self.design.column(j);
        let dot = match self.weights {
            Some(w) => col
                .iter()
                .zip(self.residual.iter())
                .zip(w.iter())
                .fold(T::zero(), |a, ((&x, &r), &wi)| a + wi * x * r),
            None => col.dot(&self.residual),
        };
        -self.scale * dot
    }

    fn curvature(&self, j: usize) -> T {
        self.curvature[j]
    }

    fn shift(&mut self, j: usize, delta: T) {
        self.residual.axpy(-delta, &self.design.column(j), T::one());
    }

    fn loss(&self, _theta: &DVector<T>) -> T {
        let ss = match self.weights {
            Some(w) => self.residual.iter().zip(w.iter()).fold(T::zero(), |a, (&r, &wi)| a + wi * r * r),
            None => self.residual.norm_squared(),
        };
        self.scale * ss / T::cst(2.0)
    }

    fn refresh(&mut self, theta: &DVector<T>) {
        self.residual = self.response - self.design * theta;
    }
}

/// Minimizes a weighted Lasso by cyclic coordinate descent.
pub fn weighted_lasso_cd<T: Real>(
    problem: &WeightedLasso<'_, T>,
    settings: &CdSettings<T>,
    warm_start: Option<&DVector<T>>,
) -> Result<CdFit<T>> {
    problem.validate()?;
    settings.validate()?;
    let mut theta = initial_theta(warm_start, problem.penalty_weights)?;
    let mut model = ResidualModel::new(problem, &theta);
    let (iterations, converged) = run_cd(&mut model, problem.penalty_weights, &mut theta, settings);
    let kkt_residual = model_kkt(&model, problem.penalty_weights, &theta);
    let objective = model.loss(&theta) + penalty_value(problem.penalty_weights, &theta);
    Ok(CdFit {
        theta,
        iterations,
        kkt_residual,
        objective,
        converged,
    })
}

/// Largest subgradient-optimality violation of `theta` for `problem`.
pub fn kkt_residual<T: Real>(problem: &WeightedLasso<'_, T>, theta: &DVector<T>) -> Result<T> {
    problem.validate()?;
    if theta.len() != problem.design.ncols() {
        return Err(dimension("coefficient length does not match design"));
    }
    let model = ResidualModel::new(problem, theta);
    Ok(model_kkt(&model, problem.penalty_weights, theta))
}

/// Gram-form problem `½θᵀHθ − lᵀθ + Σ_j λ_j |θ_j|` with `H` positive
/// semidefinite.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticLasso<'a, T: Real> {
    pub hessian: &'a DMatrix<T>,
    pub linear: &'a DVector<T>,
    pub penalty_weights: &'a DVector<T>,
}

impl<T: Real> QuadraticLasso<'_, T> {
    fn validate(&self) -> Result<()> {
        let d = self.linear.len();
        if self.hessian.shape() != (d, d) {
            return Err(dimension(format!(
                "hessian is {:?}, linear term has length {d}",
                self.hessian.shape()
            )));
        }
        check_penalty_weights(self.penalty_weights, d)?;
        check_finite("hessian", self.hessian.iter())?;
        check_finite("linear term", self.linear.iter())
    }

    /// Smooth part plus penalty (constant term excluded).
    pub fn objective(&self, theta: &DVector<T>) -> T {
        let half = T::cst(0.5);
        half * theta.dot(&(self.hessian * theta)) - self.linear.dot(theta)
            + penalty_value(self.penalty_weights, theta)
    }

    pub fn kkt_residual(&self, theta: &DVector<T>) -> T {
        let grad = self.hessian * theta - self.linear;
        (0..theta.len()).fold(T::zero(), |acc, j| {
            acc.max(subgradient_violation(grad[j], self.penalty_weights[j], theta[j]))
        })
    }
}

struct GramModel<'a, T: Real> {
    hessian: &'a DMatrix<T>,
    linear: &'a DVector<T>,
    grad: DVector<T>,
}

impl<T: Real> CoordinateModel<T> for GramModel<'_, T> {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn gradient(&self, j: usize) -> T {
        self.grad[j]
    }

    fn curvature(&self, j: usize) -> T {
        self.hessian[(j, j)]
    }

    fn shift(&mut self, j: usize, delta: T) {
        self.grad.axpy(delta, &self.hessian.column(j), T::one());
    }

    fn loss(&self, theta: &DVector<T>) -> T {
        // ½θᵀHθ − lᵀθ = ½θᵀ(g + l) − lᵀθ with g = Hθ − l
        let half = T::cst(0.5);
        half * theta.dot(&self.grad) - half * self.linear.dot(theta)
    }

    fn refresh(&mut self, theta: &DVector<T>) {
        self.grad = self.hessian * theta - self.linear;
    }
}

/// Minimizes a Gram-form weighted Lasso by cyclic coordinate descent.
/// The reported objective excludes any constant term of the quadratic.
pub fn quadratic_lasso_cd<T: Real>(
    problem: &QuadraticLasso<'_, T>,
    settings: &CdSettings<T>,
    warm_start: Option<&DVector<T>>,
) -> Result<CdFit<T>> {
    problem.validate()?;
    settings.validate()?;
    let mut theta = initial_theta(warm_start, problem.penalty_weights)?;
    let mut model = GramModel {
        hessian: problem.hessian,
        linear: problem.linear,
        grad: DVector::zeros(theta.len()),
    };
    model.refresh(&theta);
    let (iterations, converged) = run_cd(&mut model, problem.penalty_weights, &mut theta, settings);
    let kkt_residual = model_kkt(&model, problem.penalty_weights, &theta);
    let objective = model.loss(&theta) + penalty_value(problem.penalty_weights, &theta);
    Ok(CdFit {
        theta,
        iterations,
        kkt_residual,
        objective,
        converged,
    })
}
