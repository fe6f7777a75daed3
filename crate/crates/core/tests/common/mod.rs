#![allow(dead_code)]

use adatrans::model::{Support, Task, TransferProblem};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn support(rng: &mut ChaCha8Rng, p: usize, size: usize) -> Support {
    sample(rng, p, size).into_iter().collect()
}

/// Gaussian designs; responses follow a sparse target plus one shifted
/// coordinate per source, with unit noise.
pub fn problem(seed: u64, p: usize, n_t: usize, n_s: usize, k: usize) -> TransferProblem<f64> {
    let mut r = rng(seed);
    let beta = DVector::from_fn(p, |j, _| if j < 3 { 1.5 - 0.5 * j as f64 } else { 0.0 });
    let mut task = |n: usize, shift: Option<usize>| {
        let x = gaussian(&mut r, n, p);
        let mut coef = beta.clone();
        if let Some(j) = shift {
            coef[j % p] += 0.5;
        }
        let y = &x * coef + gaussian_vec(&mut r, n);
        Task::new(x, y).unwrap()
    };
    let target = task(n_t, None);
    let sources = (0..k).map(|i| task(n_s, Some(i))).collect();
    TransferProblem::new(target, sources).unwrap()
}

/// `(A, b)` of the fused least-squares problem in `(β, δ¹, …, δᴷ)` order.
pub fn stacked(pb: &TransferProblem<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (p, k, n) = (pb.p(), pb.k(), pb.n_total());
    let mut a = DMatrix::zeros(n, p * (k + 1));
    let mut b = DVector::zeros(n);
    let mut row = 0;
    for (t, task) in pb.tasks().enumerate() {
        a.view_mut((row, 0), (task.n(), p)).copy_from(&task.x);
        if t > 0 {
            a.view_mut((row, t * p), (task.n(), p)).copy_from(&task.x);
        }
        b.rows_mut(row, task.n()).copy_from(&task.y);
        row += task.n();
    }
    (a, b)
}

/// Largest subgradient violation of `(1/n)‖b − Aθ‖² + Σ_j pw_j |θ_j|`.
pub fn lasso_kkt(a: &DMatrix<f64>, b: &DVector<f64>, pw: &DVector<f64>, n: f64, theta: &DVector<f64>) -> f64 {
    let grad = a.transpose() * (a * theta - b) * (2.0 / n);
    (0..theta.len())
        .map(|j| {
            if theta[j] != 0.0 {
                (grad[j] + pw[j] * theta[j].signum()).abs()
            } else {
                (grad[j].abs() - pw[j]).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}
