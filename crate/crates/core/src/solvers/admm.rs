//! ADMM for a weighted-`ℓ1` penalized quadratic under an `ℓ∞` constraint on a
//! linear map of one coefficient block:
//!
//! ```text
//! minimize   ½θᵀHθ − lᵀθ + c₀ + Σ_j λ_j |θ_j|
//! subject to ‖c − M θ_B‖∞ ≤ r
//! ```
//!
//! The split `u = c − Mθ_B` makes the `u`-update a box projection; the
//! `θ`-update is a Gram-form coordinate descent on the augmented quadratic
//! `+ (ρ/2)‖c − Mθ_B − u + z‖²`. `ρ` stays fixed so runs are reproducible.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::cd::{quadratic_lasso_cd, subgradient_violation, CdSettings, QuadraticLasso};
use crate::error::{dimension, invalid, Result};
use crate::scalar::Real;

/// Entrywise clip of `u` to `[−radius, radius]`.
pub fn project_linf<T: Real>(u: &DVector<T>, radius: T) -> DVector<T> {
    if !radius.is_finite() {
        return u.clone();
    }
    u.map(|x| x.max(-radius).min(radius))
}

/// Convex quadratic `½θᵀHθ − lᵀθ + c₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss<T: Real> {
    pub hessian: DMatrix<T>,
    pub linear: DVector<T>,
    pub constant: T,
}

impl<T: Real> QuadraticLoss<T> {
    /// `(1/n_obj)·Σ_i w_i (b_i − a_iᵀθ)²` in Gram form.
    pub fn least_squares(a: &DMatrix<T>, b: &DVector<T>, weights: Option<&DVector<T>>, n_obj: T) -> Self {
        let scale = T::cst(2.0) / n_obj;
        let wa = match weights {
            Some(w) => DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| w[i] * a[(i, j)]),
            None => a.clone(),
        };
        let wb = match weights {
            Some(w) => b.component_mul(w),
            None => b.clone(),
        };
        Self {
            hessian: a.transpose() * &wa * scale,
            linear: a.transpose() * &wb * scale,
            constant: b.dot(&wb) / n_obj,
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn value(&self, theta: &DVector<T>) -> T {
        T::cst(0.5) * theta.dot(&(&self.hessian * theta)) - self.linear.dot(theta) + self.constant
    }
}

/// `‖offset − map · θ[block]‖∞ ≤ radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinfConstraint<T: Real> {
    pub map: DMatrix<T>,
    pub offset: DVector<T>,
    pub radius: T,
    pub block: Range<usize>,
}

impl<T: Real> LinfConstraint<T> {
    fn validate(&self, d: usize) -> Result<()> {
        if self.block.end > d || self.block.len() != self.map.ncols() {
            return Err(dimension(format!(
                "constraint block {:?} incompatible with map of {} columns and {d} coefficients",
                self.block,
                self.map.ncols()
            )));
        }
        if self.offset.len() != self.map.nrows() {
            return Err(dimension("constraint offset length differs from map rows"));
        }
        if !(self.radius >= T::zero()) {
            return Err(invalid("constraint radius must be nonnegative"));
        }
        Ok(())
    }

    /// `c − M θ_B`.
    pub fn slack(&self, theta: &DVector<T>) -> DVector<T> {
        &self.offset - &self.map * theta.rows(self.block.start, self.block.len())
    }

    /// `max(‖c − Mθ_B‖∞ − r, 0)`.
    pub fn violation(&self, theta: &DVector<T>) -> T {
        if !self.radius.is_finite() {
            return T::zero();
        }
        (self.slack(theta).amax() - self.radius).max(T::zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmSettings<T> {
    pub rho: T,
    pub tol_primal: T,
    pub tol_dual: T,
    pub max_iter: usize,
    /// Settings of the inner coordinate descent solves.
    pub inner: CdSettings<T>,
}

impl<T: Real> Default for AdmmSettings<T> {
    fn default() -> Self {
        Self {
            rho: T::one(),
            tol_primal: T::cst(1e-6),
            tol_dual: T::cst(1e-6),
            max_iter: 5000,
            inner: CdSettings {
                tol: T::cst(1e-9),
                ..CdSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmFit<T: Real> {
    pub theta: DVector<T>,
    /// ADMM iterations (inner sweeps when the constraint never binds).
    pub iterations: usize,
    pub primal_residual: T,
    pub dual_residual: T,
    /// Stationarity with the ADMM multiplier, or constraint violation,
    /// whichever is larger.
    pub kkt_residual: T,
    /// Objective including the constant and the penalty.
    pub objective: T,
    pub constraint_violation: T,
    pub converged: bool,
}

fn stationarity<T: Real>(
    loss: &QuadraticLoss<T>,
    weights: &DVector<T>,
    constraint: &LinfConstraint<T>,
    multiplier: Option<&DVector<T>>,
    theta: &DVector<T>,
) -> T {
    let mut grad = &loss.hessian * theta - &loss.linear;
    if let Some(y) = multiplier {
        let my = constraint.map.transpose() * y;
        let mut block = grad.rows_mut(constraint.block.start, constraint.block.len());
        block -= my;
    }
    (0..theta.len()).fold(T::zero(), |acc, j| {
        acc.max(subgradient_violation(grad[j], weights[j], theta[j]))
    })
}

fn objective<T: Real>(loss: &QuadraticLoss<T>, weights: &DVector<T>, theta: &DVector<T>) -> T {
    let pen = weights
        .iter()
        .zip(theta.iter())
        .filter(|(w, _)| w.is_finite())
        .fold(T::zero(), |a, (&w, &t)| a + w * t.abs());
    loss.value(theta) + pen
}

/// Solves the `ℓ∞`-constrained weighted Lasso. Non-convergence is soft: the
/// iterate with the smallest residuals is returned with `converged = false`.
pub fn admm_linf_constrained<T: Real>(
    loss: &QuadraticLoss<T>,
    constraint: &LinfConstraint<T>,
    penalty_weights: &DVector<T>,
    settings: &AdmmSettings<T>,
    warm_start: Option<&DVector<T>>,
) -> Result<AdmmFit<T>> {
    let d = loss.dim();
    if loss.hessian.shape() != (d, d) {
        return Err(dimension("hessian does not match linear term"));
    }
    constraint.validate(d)?;
    if !(settings.rho > T::zero()) {
        return Err(invalid("ADMM penalty rho must be positive"));
    }

    let free = quadratic_lasso_cd(
        &QuadraticLasso {
            hessian: &loss.hessian,
            linear: &loss.linear,
            penalty_weights,
        },
        &settings.inner,
        warm_start,
    )?;
    let free_violation = constraint.violation(&free.theta);
    if free_violation == T::zero() {
        // the unconstrained minimizer is feasible, hence optimal (zero multiplier)
        return Ok(AdmmFit {
            objective: objective(loss, penalty_weights, &free.theta),
            theta: free.theta,
            iterations: free.iterations,
            primal_residual: T::zero(),
            dual_residual: T::zero(),
            kkt_residual: free.kkt_residual,
            constraint_violation: T::zero(),
            converged: free.converged,
        });
    }

    let rho = settings.rho;
    let block = constraint.block.clone();
    let m = &constraint.map;
    let mt = m.transpose();
    let mut h_aug = loss.hessian.clone();
    {
        let mtm = &mt * m * rho;
        let mut view = h_aug.view_mut((block.start, block.start), (block.len(), block.len()));
        view += mtm;
    }

    let mut theta = free.theta;
    let mut u = project_linf(&constraint.slack(&theta), constraint.radius);
    let mut z = DVector::zeros(constraint.offset.len());
    let mut lin = loss.linear.clone();

    let mut best: Option<(T, DVector<T>, T, T)> = None;
    let mut iterations = 0;
    let mut converged = false;
    let (mut primal, mut dual) = (T::infinity(), T::infinity());

    while iterations < settings.max_iter {
        iterations += 1;
        let target = &constraint.offset - &u + &z;
        lin.copy_from(&loss.linear);
        {
            let mut lb = lin.rows_mut(block.start, block.len());
            lb += &mt * target * rho;
        }
        let inner = quadratic_lasso_cd(
            &QuadraticLasso {
                hessian: &h_aug,
                linear: &lin,
                penalty_weights,
            },
            &settings.inner,
            Some(&theta),
        )?;
        theta = inner.theta;

        let slack = constraint.slack(&theta);
        let u_next = project_linf(&(&slack + &z), constraint.radius);
        let gap = &slack - &u_next;
        z += &gap;
        primal = gap.amax();
        dual = (&mt * (&u_next - &u)).amax() * rho;
        u = u_next;

        let score = primal.max(dual);
        if best.as_ref().is_none_or(|(s, ..)| score < *s) {
            best = Some((score, theta.clone(), primal, dual));
        }
        if primal <= settings.tol_primal && dual <= settings.tol_dual {
            let y = &z * rho;
            let stat = stationarity(loss, penalty_weights, constraint, Some(&y), &theta);
            if stat <= settings.tol_dual && inner.converged {
                converged = true;
                break;
            }
        }
    }

    if !converged {
        if let Some((_, b, p, du)) = best {
            theta = b;
            primal = p;
            dual = du;
        }
    }
    let y = &z * rho;
    let violation = constraint.violation(&theta);
    let kkt = stationarity(loss, penalty_weights, constraint, Some(&y), &theta).max(violation);
    Ok(AdmmFit {
        objective: objective(loss, penalty_weights, &theta),
        theta,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        kkt_residual: kkt,
        constraint_violation: violation,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let u = DVector::from_vec(vec![2.0, -3.0]);
        assert_eq!(project_linf(&u, 1.0), DVector::from_vec(vec![1.0, -1.0]));
        assert_eq!(project_linf(&u, f64::INFINITY), u);
        let v = DVector::from_vec(vec![0.5]);
        assert_eq!(project_linf(&v, 1.0), v);
    }

    fn small_problem() -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_fn(12, 4, |i, j| (((i + 1) * (j + 3)) % 7) as f64 - 3.0 + 0.1 * i as f64);
        let y = DVector::from_fn(12, |i, _| ((i * 5) % 9) as f64 * 0.3 - 1.0);
        (x, y)
    }

    #[test]
    fn infinite_radius_matches_unconstrained() {
        let (x, y) = small_problem();
        let loss = QuadraticLoss::least_squares(&x, &y, None, 12.0);
        let w = DVector::from_element(4, 0.05);
        let c = LinfConstraint {
            map: DMatrix::identity(4, 4),
            offset: DVector::zeros(4),
            radius: f64::INFINITY,
            block: 0..4,
        };
        let fit = admm_linf_constrained(&loss, &c, &w, &AdmmSettings::default(), None).unwrap();
        let cd = super::super::cd::weighted_lasso_cd(
            &super::super::cd::WeightedLasso::new(&x, &y, &w, 12.0),
            &CdSettings::default(),
            None,
        )
        .unwrap();
        assert!((fit.theta - cd.theta).amax() < 1e-6);
    }

    #[test]
    fn zero_radius_forces_normal_equations() {
        let (x, y) = small_problem();
        let loss = QuadraticLoss::least_squares(&x, &y, None, 12.0);
        let w = DVector::from_element(4, 0.5);
        let map = x.transpose() * &x / 12.0;
        let offset = x.transpose() * &y / 12.0;
        let ols = map.clone().lu().solve(&offset).unwrap();
        let c = LinfConstraint { map, offset, radius: 0.0, block: 0..4 };
        let fit = admm_linf_constrained(&loss, &c, &w, &AdmmSettings::default(), None).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!((fit.theta - ols).amax() < 1e-5);
        assert!(fit.constraint_violation <= 1e-5);
    }

    #[test]
    fn binding_constraint_is_respected() {
        let (x, y) = small_problem();
        let loss = QuadraticLoss::least_squares(&x, &y, None, 12.0);
        let w = DVector::from_element(4, 1.0);
        let map = x.transpose() * &x / 12.0;
        let offset = x.transpose() * &y / 12.0;
        let free = admm_linf_constrained(
            &loss,
            &LinfConstraint { map: map.clone(), offset: offset.clone(), radius: f64::INFINITY, block: 0..4 },
            &w,
            &AdmmSettings::default(),
            None,
        )
        .unwrap();
        let c0 = LinfConstraint { map, offset, radius: f64::INFINITY, block: 0..4 };
        let free_slack = c0.slack(&free.theta).amax();
        let c = LinfConstraint { radius: 0.5 * free_slack, ..c0 };
        let fit = admm_linf_constrained(&loss, &c, &w, &AdmmSettings::default(), None).unwrap();
        assert!(fit.converged);
        assert!(c.slack(&fit.theta).amax() <= c.radius + 1e-5);
        assert!(fit.kkt_residual <= 1e-6);
        assert!(fit.objective >= free.objective - 1e-12);
    }
}
