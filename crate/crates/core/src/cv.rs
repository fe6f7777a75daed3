//! K-fold splits and grid selection shared by the tuned estimators.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::datagen::task_rng;
use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::solvers::{weighted_lasso_cd, CdFit, CdSettings, WeightedLasso};

/// Seed stream reserved for fold assignment, distinct from data streams.
const FOLD_STREAM: u64 = u64::MAX - 1;

/// Deterministic partition of `0..n` into `k` test folds of near-equal size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    n: usize,
    test: Vec<Vec<usize>>,
}

impl Folds {
    /// Shuffles `0..n` with the given seed and deals it into `k` folds.
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(invalid(format!("need at least 2 folds, got {k}")));
        }
        if n < k {
            return Err(invalid(format!("cannot split {n} rows into {k} folds")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut task_rng(seed, FOLD_STREAM));
        let mut test = vec![Vec::with_capacity(n / k + 1); k];
        for (i, row) in order.into_iter().enumerate() {
            test[i % k].push(row);
        }
        for fold in &mut test {
            fold.sort_unstable();
        }
        Ok(Self { n, test })
    }

    pub fn len(&self) -> usize {
        self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.test.is_empty()
    }

    pub fn test(&self, fold: usize) -> &[usize] {
        &self.test[fold]
    }

    /// Complement of the test rows, ascending.
    pub fn train(&self, fold: usize) -> Vec<usize> {
        let mut held = vec![false; self.n];
        for &i in &self.test[fold] {
            held[i] = true;
        }
        (0..self.n).filter(|&i| !held[i]).collect()
    }
}

/// Which candidate wins among equal scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    First,
    Last,
}

/// Index of the smallest score. Scores within a relative `1e-12` of each
/// other count as tied. Non-finite scores never win unless all are.
pub fn argmin_score(scores: &[f64], ties: TieBreak) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        let s = if s.is_nan() { f64::INFINITY } else { s };
        best = match best {
            None => Some((i, s)),
            Some((bi, bs)) => {
                if tied(s, bs) {
                    match ties {
                        TieBreak::First => Some((bi, bs)),
                        TieBreak::Last => Some((i, s)),
                    }
                } else if s < bs {
                    Some((i, s))
                } else {
                    Some((bi, bs))
                }
            }
        };
    }
    best.map(|(i, _)| i)
}

fn tied(a: f64, b: f64) -> bool {
    a == b || (a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-12 * a.abs().max(b.abs()))
}

/// Mean squared prediction error of `beta` on `(x, y)`.
pub fn prediction_mse<T: Real>(x: &DMatrix<T>, y: &DVector<T>, beta: &DVector<T>) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let r = y - x * beta;
    r.norm_squared().as_f64() / y.len() as f64
}

/// `√(log p / n)`, the rate shared by every tuning formula.
pub fn log_rate(p: usize, n: usize) -> f64 {
    ((p as f64).ln() / n as f64).sqrt()
}

/// `count` log-spaced values from `lo` to `hi` inclusive, ascending.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// Plain Lasso `(1/n)‖y − Xθ‖² + c·√(log p/n)·‖θ‖₁` with `c` from `grid`
/// chosen by `folds`-fold cross-validation. Ties go to the larger `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoCv<T: Real> {
    pub c: f64,
    pub fit: CdFit<T>,
    pub cv_scores: Vec<f64>,
}

pub fn lasso_fit<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    c: f64,
    settings: &CdSettings<T>,
    warm: Option<&DVector<T>>,
) -> Result<CdFit<T>> {
    let (n, p) = x.shape();
    let lam = T::cst(c * log_rate(p, n));
    let weights = DVector::from_element(p, lam);
    weighted_lasso_cd(
        &WeightedLasso::new(x, y, &weights, T::from_usize_lossy(n)),
        settings,
        warm,
    )
}

pub fn lasso_cv<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    grid: &[f64],
    folds: usize,
    seed: u64,
    settings: &CdSettings<T>,
) -> Result<LassoCv<T>> {
    if grid.is_empty() {
        return Err(invalid("lasso tuning grid is empty"));
    }
    let split = Folds::new(x.nrows(), folds, seed)?;
    let order = descending(grid);
    let mut scores = vec![0.0; grid.len()];
    for f in 0..split.len() {
        let train = split.train(f);
        let (xt, yt) = (x.select_rows(&train), select(y, &train));
        let (xv, yv) = (x.select_rows(split.test(f)), select(y, split.test(f)));
        let mut warm: Option<DVector<T>> = None;
        for &g in &order {
            let fit = lasso_fit(&xt, &yt, grid[g], settings, warm.as_ref())?;
            scores[g] += prediction_mse(&xv, &yv, &fit.theta) / split.len() as f64;
            warm = Some(fit.theta);
        }
    }
    let best = argmin_score(&scores, TieBreak::First).expect("grid is nonempty");
    let best = largest_tied(grid, &scores, best);
    let fit = lasso_fit(x, y, grid[best], settings, None)?;
    Ok(LassoCv {
        c: grid[best],
        fit,
        cv_scores: scores,
    })
}

/// Grid indices ordered by decreasing value (warm-start order).
pub fn descending(grid: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..grid.len()).collect();
    idx.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    idx
}

/// Among indices tied with `best`, the one with the largest grid value.
pub fn largest_tied(grid: &[f64], scores: &[f64], best: usize) -> usize {
    pick_tied(grid, scores, best, |a, b| a > b)
}

/// Among indices tied with `best`, the one with the smallest grid value.
pub fn smallest_tied(grid: &[f64], scores: &[f64], best: usize) -> usize {
    pick_tied(grid, scores, best, |a, b| a < b)
}

fn pick_tied(grid: &[f64], scores: &[f64], best: usize, better: impl Fn(f64, f64) -> bool) -> usize {
    let bs = scores[best];
    let mut pick = best;
    for (i, &s) in scores.iter().enumerate() {
        if tied(s, bs) && better(grid[i], grid[pick]) {
            pick = i;
        }
    }
    pick
}

pub(crate) fn select<T: Real>(v: &DVector<T>, rows: &[usize]) -> DVector<T> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&i| v[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_rows() {
        let f = Folds::new(23, 5, 7).unwrap();
        let mut all: Vec<usize> = (0..5).flat_map(|i| f.test(i).to_vec()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for i in 0..5 {
            assert!(matches!(f.test(i).len(), 4 | 5));
            assert_eq!(f.train(i).len() + f.test(i).len(), 23);
        }
        assert_eq!(f, Folds::new(23, 5, 7).unwrap());
        assert_ne!(f, Folds::new(23, 5, 8).unwrap());
        assert!(Folds::new(3, 5, 0).is_err());
        assert!(Folds::new(10, 1, 0).is_err());
    }

    #[test]
    fn tie_breaking() {
        let s = [2.0, 1.0, 1.0, 3.0];
        assert_eq!(argmin_score(&s, TieBreak::First), Some(1));
        assert_eq!(argmin_score(&s, TieBreak::Last), Some(2));
        assert_eq!(argmin_score(&[f64::NAN, 1.0], TieBreak::First), Some(1));
        assert_eq!(argmin_score(&[], TieBreak::First), None);
        let grid = [5.0, 1.0, 3.0, 0.5];
        let scores = [1.0, 1.0, 1.0, 2.0];
        assert_eq!(largest_tied(&grid, &scores, 1), 0);
        assert_eq!(smallest_tied(&grid, &scores, 0), 1);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.05, 5.0, 10);
        assert_eq!(g.len(), 10);
        assert!((g[0] - 0.05).abs() < 1e-15 && (g[9] - 5.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| (w[1] / w[0] - (100f64).powf(1.0 / 9.0)).abs() < 1e-12));
        assert_eq!(log_grid(1.0, 2.0, 1), vec![1.0]);
    }

    #[test]
    fn lasso_cv_single_value_grid_is_that_value() {
        let x = DMatrix::<f64>::from_fn(30, 6, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let beta = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0, 0.0, 0.5]);
        let y = &x * &beta;
        let cv = lasso_cv(&x, &y, &[0.3], 5, 1, &CdSettings::default()).unwrap();
        assert_eq!(cv.c, 0.3);
        assert!(cv.fit.converged);
    }
}
