//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Ratio of extreme singular values; infinite for a rank-deficient matrix.
pub fn condition_number<T: Real>(a: &DMatrix<T>) -> T {
    if a.is_empty() {
        return T::one();
    }
    let sv = a.clone().svd(false, false).singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    if lo <= T::zero() {
        T::infinity()
    } else {
        hi / lo
    }
}

/// Numerical rank: singular values above `max(n, m) · eps · σ_max`.
fn rank_cutoff<T: Real>(a: &DMatrix<T>, sv: &DVector<T>) -> T {
    let dim = T::from_usize_lossy(a.nrows().max(a.ncols()));
    dim * T::default_epsilon() * sv.max()
}

/// Orthogonal projector onto the column space of `x`.
///
/// Built from the left singular vectors so that rank-deficient inputs still
/// give a symmetric idempotent matrix. An empty column set gives the zero
/// projector.
pub fn column_space_projector<T: Real>(x: &DMatrix<T>) -> DMatrix<T> {
    let n = x.nrows();
    if x.ncols() == 0 {
        return DMatrix::zeros(n, n);
    }
    let svd = x.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let cutoff = rank_cutoff(x, &svd.singular_values);
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > cutoff)
        .map(|(i, _)| i)
        .collect();
    let ur = u.select_columns(&keep);
    &ur * ur.transpose()
}

/// Minimum-norm solution of `a x = b` through the SVD pseudo-inverse.
pub fn pinv_solve<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    let svd = a.clone().svd(true, true);
    let cutoff = rank_cutoff(a, &svd.singular_values);
    svd.solve(b, cutoff)
        .expect("both singular vector sets were computed")
}

/// Solves a symmetric positive definite system by Cholesky.
pub fn solve_spd<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> Option<DVector<T>> {
    a.clone().cholesky().map(|c| c.solve(b))
}

/// Entrywise soft-thresholding `sign(z) · max(|z| − γ, 0)`.
#[inline]
pub fn soft_threshold<T: Real>(z: T, gamma: T) -> T {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projector_is_idempotent_even_when_rank_deficient() {
        let x = DMatrix::<f64>::from_row_slice(4, 3, &[
            1.0, 2.0, 3.0, //
            0.0, 1.0, 1.0, //
            1.0, 0.0, 1.0, //
            2.0, 1.0, 3.0,
        ]);
        // third column = first + second
        let h = column_space_projector(&x);
        assert!((&h * &h - &h).amax() < 1e-12);
        assert!((&h - h.transpose()).amax() < 1e-12);
        assert!((h.trace() - 2.0).abs() < 1e-10);
        assert_eq!(column_space_projector(&DMatrix::<f64>::zeros(3, 0)), DMatrix::zeros(3, 3));
    }

    #[test]
    fn soft_threshold_regions() {
        assert_eq!(soft_threshold(2.0, 0.5), 1.5);
        assert_eq!(soft_threshold(-2.0, 0.5), -1.5);
        assert_eq!(soft_threshold(0.3, 0.5), 0.0);
    }

    #[test]
    fn pinv_gives_minimum_norm_solution() {
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let x = pinv_solve(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        assert!(condition_number(&a) > 1e12);
    }
}
