//! Block coordinate descent for the fused transfer objective
//!
//! ```text
//! (1/n_obj) Σ_k ‖y^(k) − X^(k)(β + δ^(k))‖² + Σ_j a_j|β_j| + Σ_k Σ_j b_kj|δ^(k)_j|
//! ```
//!
//! with `δ^(0) = 0`. The columns of `β_j` and `δ^(k)_j` coincide on the rows
//! of source `k`, so plain coordinate descent on the stacked design crawls.
//! Here each feature `j` is a block: with `β_j` fixed the contrasts decouple
//! into soft-thresholds, and profiling them out leaves a one-dimensional
//! convex piecewise quadratic in `β_j` that is minimized exactly.

use nalgebra::{DMatrix, DVector};

use super::cd::{subgradient_violation, CdSettings};
use crate::error::{dimension, invalid, Result};
use crate::linalg::soft_threshold;
use crate::scalar::Real;

/// One source's term in the profiled block objective: curvature `a`,
/// unconstrained minimizer `u` of `β + δ`, and contrast penalty `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceTerm<T> {
    pub a: T,
    pub u: T,
    pub alpha: T,
}

impl<T: Real> SourceTerm<T> {
    /// Derivative in `β` of `min_δ ½a(β + δ − u)² + α|δ|`, a clipped line.
    fn slope(&self, beta: T) -> T {
        let g = self.a * (beta - self.u);
        if self.alpha.is_finite() {
            g.max(-self.alpha).min(self.alpha)
        } else {
            g
        }
    }

    /// Minimizing contrast for a given `β`.
    pub fn delta(&self, beta: T) -> T {
        if !self.alpha.is_finite() || self.a <= T::zero() {
            T::zero()
        } else {
            soft_threshold(self.a * (self.u - beta), self.alpha) / self.a
        }
    }
}

/// Exact minimizer of
/// `½a₀(β − u₀)² + α₀|β| + Σ_k min_δ [½a_k(β + δ − u_k)² + α_k|δ|]`.
/// Infinite `α` pins the corresponding coefficient at zero. Flat optima
/// resolve toward zero.
pub fn fused_scalar_min<T: Real>(a0: T, u0: T, alpha0: T, sources: &[SourceTerm<T>]) -> T {
    if !alpha0.is_finite() {
        return T::zero();
    }
    let base = |b: T| sources.iter().fold(a0 * (b - u0), |acc, s| acc + s.slope(b));
    let at_zero = base(T::zero());
    if at_zero - alpha0 <= T::zero() && T::zero() <= at_zero + alpha0 {
        return T::zero();
    }
    // Mirror the negative half-line onto the positive one.
    let sign = if at_zero + alpha0 < T::zero() { T::one() } else { -T::one() };
    let h = |t: T| sign * base(sign * t) + alpha0;
    let mut knots: Vec<T> = sources
        .iter()
        .filter(|s| s.a > T::zero() && s.alpha.is_finite())
        .flat_map(|s| {
            let tau = s.alpha / s.a;
            [sign * (s.u - tau), sign * (s.u + tau)]
        })
        .filter(|&t| t > T::zero())
        .collect();
    knots.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    let (mut lo, mut h_lo) = (T::zero(), h(T::zero()));
    for t in knots {
        let h_t = h(t);
        if h_t >= T::zero() {
            let span = h_t - h_lo;
            let root = if span > T::zero() { lo - h_lo * (t - lo) / span } else { t };
            return sign * root;
        }
        (lo, h_lo) = (t, h_t);
    }
    let tail = sources
        .iter()
        .filter(|s| !s.alpha.is_finite())
        .fold(a0, |acc, s| acc + s.a);
    if tail > T::zero() {
        sign * (lo - h_lo / tail)
    } else {
        sign * lo
    }
}

/// Fused transfer problem over `tasks[0]` (target) and sources `tasks[1..]`.
#[derive(Debug, Clone)]
pub struct FusedLasso<'a, T: Real> {
    pub tasks: Vec<(&'a DMatrix<T>, &'a DVector<T>)>,
    pub beta_penalty: &'a DVector<T>,
    /// One vector per source.
    pub delta_penalty: &'a [DVector<T>],
    pub n_obj: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedFit<T: Real> {
    pub beta: DVector<T>,
    pub deltas: Vec<DVector<T>>,
    pub iterations: usize,
    pub kkt_residual: T,
    pub objective: T,
    pub converged: bool,
}

impl<T: Real> FusedLasso<'_, T> {
    fn validate(&self) -> Result<()> {
        let Some((x0, _)) = self.tasks.first() else {
            return Err(invalid("fused problem needs a target task"));
        };
        let p = x0.ncols();
        for (x, y) in &self.tasks {
            if x.ncols() != p || x.nrows() != y.len() {
                return Err(dimension("task shapes disagree"));
            }
        }
        if self.beta_penalty.len() != p
            || self.delta_penalty.len() + 1 != self.tasks.len()
            || self.delta_penalty.iter().any(|d| d.len() != p)
        {
            return Err(dimension("penalty weights do not match p and K"));
        }
        let pens = self.beta_penalty.iter().chain(self.delta_penalty.iter().flat_map(|d| d.iter()));
        if pens.clone().any(|w| !(*w >= T::zero())) {
            return Err(invalid("penalty weights must be nonnegative"));
        }
        if !(self.n_obj > T::zero()) {
            return Err(invalid("objective normalizer must be positive"));
        }
        Ok(())
    }
}

struct State<'a, 'b, T: Real> {
    pb: &'b FusedLasso<'a, T>,
    scale: T,
    /// `scale·‖X^(k)_j‖²` per task and feature.
    curv: Vec<DVector<T>>,
    resid: Vec<DVector<T>>,
    beta: DVector<T>,
    deltas: Vec<DVector<T>>,
}

impl<T: Real> State<'_, '_, T> {
    fn refresh(&mut self) {
        for (k, (x, y)) in self.pb.tasks.iter().enumerate() {
            let coef = if k == 0 {
                self.beta.clone()
            } else {
                &self.beta + &self.deltas[k - 1]
            };
            self.resid[k] = *y - *x * coef;
        }
    }

    /// `−∂loss/∂(coefficient on X^(k)_j)`.
    fn pull(&self, k: usize, j: usize) -> T {
        self.scale * self.pb.tasks[k].0.column(j).dot(&self.resid[k])
    }

    /// Exact minimization over `(β_j, δ^(1)_j, …)`; returns the largest change.
    fn update(&mut self, j: usize) -> T {
        let kk = self.deltas.len();
        let (a0, g0) = (self.curv[0][j], self.pull(0, j));
        let b_old = self.beta[j];
        let u0 = if a0 > T::zero() { b_old + g0 / a0 } else { b_old };
        let terms: Vec<SourceTerm<T>> = (1..=kk)
            .map(|k| {
                let a = self.curv[k][j];
                let c_old = b_old + self.deltas[k - 1][j];
                let u = if a > T::zero() { c_old + self.pull(k, j) / a } else { c_old };
                SourceTerm {
                    a,
                    u,
                    alpha: self.pb.delta_penalty[k - 1][j],
                }
            })
            .collect();
        let b_new = fused_scalar_min(a0, u0, self.pb.beta_penalty[j], &terms);
        let db = b_new - b_old;
        let mut change = db.abs();
        if db != T::zero() {
            self.beta[j] = b_new;
            self.resid[0].axpy(-db, &self.pb.tasks[0].0.column(j), T::one());
        }
        for k in 1..=kk {
            let d_old = self.deltas[k - 1][j];
            let d_new = terms[k - 1].delta(b_new);
            change = change.max((d_new - d_old).abs());
            let dc = db + d_new - d_old;
            self.deltas[k - 1][j] = d_new;
            if dc != T::zero() {
                self.resid[k].axpy(-dc, &self.pb.tasks[k].0.column(j), T::one());
            }
        }
        change
    }

    fn kkt(&self) -> T {
        let p = self.beta.len();
        let mut worst = T::zero();
        for j in 0..p {
            let mut g_beta = -self.pull(0, j);
            for k in 1..=self.deltas.len() {
                let g = -self.pull(k, j);
                g_beta += g;
                worst = worst.max(subgradient_violation(g, self.pb.delta_penalty[k - 1][j], self.deltas[k - 1][j]));
            }
            worst = worst.max(subgradient_violation(g_beta, self.pb.beta_penalty[j], self.beta[j]));
        }
        worst
    }

    fn objective(&self) -> T {
        let loss = self.resid.iter().fold(T::zero(), |a, r| a + r.norm_squared()) / self.pb.n_obj;
        let pen = |w: &DVector<T>, v: &DVector<T>| {
            w.iter()
                .zip(v.iter())
                .filter(|(w, _)| w.is_finite())
                .fold(T::zero(), |a, (&w, &t)| a + w * t.abs())
        };
        let mut total = loss + pen(self.pb.beta_penalty, &self.beta);
        for (w, d) in self.pb.delta_penalty.iter().zip(&self.deltas) {
            total += pen(w, d);
        }
        total
    }

    fn active(&self, j: usize) -> bool {
        self.beta[j] != T::zero() || self.deltas.iter().any(|d| d[j] != T::zero())
    }
}

/// Minimizes a [`FusedLasso`] by exact block updates, one feature at a time.
/// Convergence follows [`CdSettings`]: largest change in a full sweep below
/// `tol`, confirmed by a KKT residual within `10·tol`.
pub fn fused_lasso_bcd<T: Real>(
    problem: &FusedLasso<'_, T>,
    settings: &CdSettings<T>,
    warm: Option<(&DVector<T>, &[DVector<T>])>,
) -> Result<FusedFit<T>> {
    problem.validate()?;
    settings.validate()?;
    let p = problem.beta_penalty.len();
    let kk = problem.delta_penalty.len();
    let (mut beta, mut deltas) = match warm {
        Some((b, d)) if b.len() == p && d.len() == kk && d.iter().all(|v| v.len() == p) => (b.clone(), d.to_vec()),
        Some(_) => return Err(dimension("warm start does not match p and K")),
        None => (DVector::zeros(p), vec![DVector::zeros(p); kk]),
    };
    let pin = |v: &mut DVector<T>, w: &DVector<T>| {
        for j in 0..p {
            if !w[j].is_finite() || !v[j].is_finite() {
                v[j] = T::zero();
            }
        }
    };
    pin(&mut beta, problem.beta_penalty);
    for (d, w) in deltas.iter_mut().zip(problem.delta_penalty) {
        pin(d, w);
    }
    let scale = T::cst(2.0) / problem.n_obj;
    let curv = problem
        .tasks
        .iter()
        .map(|(x, _)| DVector::from_iterator(p, x.column_iter().map(|c| scale * c.norm_squared())))
        .collect();
    let mut st = State {
        pb: problem,
        scale,
        curv,
        resid: vec![DVector::zeros(0); kk + 1],
        beta,
        deltas,
    };
    st.refresh();

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < settings.max_iter {
        let mut max_change = T::zero();
        for j in 0..p {
            max_change = max_change.max(st.update(j));
        }
        sweeps += 1;
        if max_change <= settings.tol {
            st.refresh();
            if max_change == T::zero() || st.kkt() <= T::cst(10.0) * settings.tol {
                converged = true;
                break;
            }
            continue;
        }
        if settings.active_set {
            let active: Vec<usize> = (0..p).filter(|&j| st.active(j)).collect();
            while sweeps < settings.max_iter {
                let mut change = T::zero();
                for &j in &active {
                    change = change.max(st.update(j));
                }
                sweeps += 1;
                if change <= settings.tol {
                    break;
                }
            }
        }
    }
    st.refresh();
    Ok(FusedFit {
        kkt_residual: st.kkt(),
        objective: st.objective(),
        iterations: sweeps,
        converged,
        beta: st.beta,
        deltas: st.deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{weighted_lasso_cd, WeightedLasso};
    use proptest::prelude::*;

    /// Brute-force minimizer of the profiled scalar objective by dense grid
    /// refinement.
    fn scalar_objective(a0: f64, u0: f64, alpha0: f64, src: &[SourceTerm<f64>], b: f64) -> f64 {
        let mut f = 0.5 * a0 * (b - u0).powi(2) + alpha0 * b.abs();
        for s in src {
            let d = s.delta(b);
            f += 0.5 * s.a * (b + d - s.u).powi(2) + if s.alpha.is_finite() { s.alpha * d.abs() } else { 0.0 };
        }
        f
    }

    fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let (m1, m2) = (hi - r * (hi - lo), lo + r * (hi - lo));
            if f(m1) <= f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        0.5 * (lo + hi)
    }

    proptest! {
        #[test]
        fn scalar_min_matches_golden_section(
            a0 in 0.0f64..3.0, u0 in -2.0f64..2.0, alpha0 in 0.0f64..1.5,
            raw in proptest::collection::vec((0.01f64..3.0, -2.0f64..2.0, 0.0f64..1.5), 0..4),
        ) {
            let src: Vec<SourceTerm<f64>> = raw.iter().map(|&(a, u, alpha)| SourceTerm { a, u, alpha }).collect();
            let b = fused_scalar_min(a0, u0, alpha0, &src);
            let f = |x: f64| scalar_objective(a0, u0, alpha0, &src, x);
            let g = golden_min(f, -10.0, 10.0);
            prop_assert!(f(b) <= f(g) + 1e-10, "closed form {b} ({}) vs search {g} ({})", f(b), f(g));
        }
    }

    #[test]
    fn scalar_min_special_cases() {
        // No sources: soft-thresholding.
        assert!((fused_scalar_min::<f64>(2.0, 1.0, 0.5, &[]) - 0.75).abs() < 1e-15);
        assert_eq!(fused_scalar_min::<f64>(2.0, 0.2, 0.5, &[]), 0.0);
        assert_eq!(fused_scalar_min::<f64>(2.0, 5.0, f64::INFINITY, &[]), 0.0);
        // A pinned contrast acts as plain extra data.
        let s = SourceTerm { a: 1.0, u: 3.0, alpha: f64::INFINITY };
        assert!((fused_scalar_min(1.0, 1.0, 0.0, &[s]) - 2.0).abs() < 1e-15);
        // A free contrast decouples the source entirely.
        let s = SourceTerm { a: 1.0, u: 3.0, alpha: 0.0 };
        assert!((fused_scalar_min::<f64>(1.0, 1.0, 0.0, &[s]) - 1.0).abs() < 1e-15);
    }

    fn instance(seed: u64) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let sizes = [7, 9, 6];
        let xs: Vec<DMatrix<f64>> = sizes
            .iter()
            .map(|&n| DMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let ys = sizes.iter().map(|&n| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))).collect();
        (xs, ys)
    }

    #[test]
    fn agrees_with_stacked_coordinate_descent() {
        for seed in 0..20 {
            let (xs, ys) = instance(seed);
            let p = 4;
            let b_pen = DVector::from_vec(vec![0.05, 0.0, 0.2, f64::INFINITY]);
            let d_pen = vec![DVector::from_element(p, 0.1), DVector::from_vec(vec![0.0, 0.3, 0.02, 0.1])];
            let tasks = xs.iter().zip(&ys).collect();
            let pb = FusedLasso { tasks, beta_penalty: &b_pen, delta_penalty: &d_pen, n_obj: 22.0 };
            let tight = CdSettings { tol: 1e-12, max_iter: 100_000, active_set: true };
            let fit = fused_lasso_bcd(&pb, &tight, None).unwrap();
            assert!(fit.converged && fit.kkt_residual < 1e-10);

            let n = 22;
            let mut a = DMatrix::zeros(n, 3 * p);
            let mut b = DVector::zeros(n);
            let mut row = 0;
            for (k, (x, y)) in xs.iter().zip(&ys).enumerate() {
                a.view_mut((row, 0), (x.nrows(), p)).copy_from(x);
                if k > 0 {
                    a.view_mut((row, k * p), (x.nrows(), p)).copy_from(x);
                }
                b.rows_mut(row, x.nrows()).copy_from(y);
                row += x.nrows();
            }
            let mut pen = DVector::zeros(3 * p);
            pen.rows_mut(0, p).copy_from(&b_pen);
            pen.rows_mut(p, p).copy_from(&d_pen[0]);
            pen.rows_mut(2 * p, p).copy_from(&d_pen[1]);
            let cd = weighted_lasso_cd(&WeightedLasso::new(&a, &b, &pen, 22.0), &tight, None).unwrap();
            assert!((cd.objective - fit.objective).abs() < 1e-10, "seed {seed}");
            assert!((cd.theta.rows(0, p) - &fit.beta).amax() < 1e-7, "seed {seed}");
        }
    }
}
