//! Seeded synthetic generators for the target/source linear models.
//!
//! Two contrast layouts are provided. In the feature-wise layout odd sources
//! disagree with the target on the first `s/2` coordinates and even sources
//! on coordinates `s/2 .. s_k` (zero-based, half-open), all with magnitude
//! `h_wedge`. In the sample-wise layout every source disagrees on the first
//! `s_k` coordinates, weakly (`h_wedge / 10`) for odd sources and strongly
//! (`h_wedge`) for even ones.
//!
//! The exact contrast sign scheme and noise level behind the published
//! experiments are not known; alternating signs and unit noise are the
//! defaults here and both are configurable.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::model::{GroundTruth, Task, TaskDistribution, TransferProblem};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    FeatureWise,
    SampleWise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceKind {
    Identity,
    /// Entries `ρ^|i−j|`.
    Toeplitz(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignPattern {
    /// `+, −, +, …` by coordinate index.
    Alternating,
    /// Independent fair signs drawn from the spec seed.
    Random,
}

/// Configuration of one synthetic experiment instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingSpec {
    pub setting: Setting,
    pub p: usize,
    pub s: usize,
    pub n_t: usize,
    pub n_s: usize,
    pub k: usize,
    pub h_wedge: f64,
    pub s_k: usize,
    pub beta_value: f64,
    pub covariance: CovarianceKind,
    /// Source covariance when it differs from the target's (covariate shift).
    pub source_covariance: Option<CovarianceKind>,
    pub noise_sd: f64,
    pub sign_pattern: SignPattern,
    pub seed: u64,
}

impl SettingSpec {
    /// Feature-wise defaults: `p = 500, s = 8, n_T = 50, n_S = 250, K = 2,
    /// h_wedge = 0.6, s_k = 25`.
    pub fn feature_wise() -> Self {
        Self {
            setting: Setting::FeatureWise,
            p: 500,
            s: 8,
            n_t: 50,
            n_s: 250,
            k: 2,
            h_wedge: 0.6,
            s_k: 25,
            beta_value: 0.3,
            covariance: CovarianceKind::Identity,
            source_covariance: None,
            noise_sd: 1.0,
            sign_pattern: SignPattern::Alternating,
            seed: 0,
        }
    }

    /// Sample-wise defaults: as feature-wise but `h_wedge = 0.024, s_k = 450`.
    pub fn sample_wise() -> Self {
        Self {
            setting: Setting::SampleWise,
            h_wedge: 0.024,
            s_k: 450,
            ..Self::feature_wise()
        }
    }

    pub fn for_setting(setting: Setting) -> Self {
        match setting {
            Setting::FeatureWise => Self::feature_wise(),
            Setting::SampleWise => Self::sample_wise(),
        }
    }

    pub fn n_total(&self) -> usize {
        self.n_t + self.k * self.n_s
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n_t == 0 || self.n_s == 0 {
            return Err(invalid("p, n_T and n_S must be positive"));
        }
        if self.s > self.p {
            return Err(invalid(format!("s = {} exceeds p = {}", self.s, self.p)));
        }
        if self.s_k > self.p {
            return Err(invalid(format!("s_k = {} exceeds p = {}", self.s_k, self.p)));
        }
        if !(self.h_wedge >= 0.0) || !self.h_wedge.is_finite() {
            return Err(invalid("h_wedge must be finite and nonnegative"));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(invalid("noise_sd must be finite and nonnegative"));
        }
        if !self.beta_value.is_finite() {
            return Err(invalid("beta_value must be finite"));
        }
        for kind in std::iter::once(&self.covariance).chain(self.source_covariance.iter()) {
            if let CovarianceKind::Toeplitz(rho) = kind {
                if !(rho.abs() < 1.0) {
                    return Err(invalid(format!("Toeplitz correlation {rho} outside (-1, 1)")));
                }
            }
        }
        if self.setting == Setting::FeatureWise {
            if self.s % 2 != 0 {
                return Err(invalid(format!("s = {} is odd; the s/2 split is undefined", self.s)));
            }
            if self.k >= 2 && self.s_k < self.s / 2 + 1 {
                return Err(invalid(format!(
                    "s_k = {} leaves the even-source range s/2+1..s_k empty",
                    self.s_k
                )));
            }
        }
        Ok(())
    }
}

/// Stream id used for random contrast signs; task streams are `0..=K`.
const SIGN_STREAM: u64 = u64::MAX;

pub(crate) fn task_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Builds the true target parameter and contrasts for `spec`.
pub fn make_ground_truth<T: Real>(spec: &SettingSpec) -> Result<GroundTruth<T>> {
    spec.validate()?;
    let p = spec.p;
    let mut beta = DVector::zeros(p);
    for j in 0..spec.s {
        beta[j] = T::cst(spec.beta_value);
    }

    let mut sign_rng = task_rng(spec.seed, SIGN_STREAM);
    let mut deltas = Vec::with_capacity(spec.k);
    for k in 1..=spec.k {
        let odd = k % 2 == 1;
        let (range, magnitude) = match spec.setting {
            Setting::FeatureWise if odd => (0..spec.s / 2, spec.h_wedge),
            Setting::FeatureWise => (spec.s / 2..spec.s_k, spec.h_wedge),
            Setting::SampleWise if odd => (0..spec.s_k, spec.h_wedge / 10.0),
            Setting::SampleWise => (0..spec.s_k, spec.h_wedge),
        };
        let mut delta = DVector::zeros(p);
        if magnitude > 0.0 {
            for j in range {
                let positive = match spec.sign_pattern {
                    SignPattern::Alternating => j % 2 == 0,
                    SignPattern::Random => sign_rng.random_bool(0.5),
                };
                delta[j] = T::cst(if positive { magnitude } else { -magnitude });
            }
        }
        deltas.push(delta);
    }
    GroundTruth::from_parameters(beta, deltas)
}

/// `I_p` or the Toeplitz matrix `ρ^|i−j|`.
pub fn make_covariance<T: Real>(kind: CovarianceKind, p: usize) -> Result<DMatrix<T>> {
    if p == 0 {
        return Err(invalid("covariance dimension must be positive"));
    }
    match kind {
        CovarianceKind::Identity => Ok(DMatrix::identity(p, p)),
        CovarianceKind::Toeplitz(rho) => {
            if !(rho.abs() < 1.0) {
                return Err(invalid(format!("Toeplitz correlation {rho} outside (-1, 1)")));
            }
            Ok(DMatrix::from_fn(p, p, |i, j| T::cst(rho.powi(i.abs_diff(j) as i32))))
        }
    }
}

/// Generating distribution of each task, target first.
pub fn task_distributions<T: Real>(spec: &SettingSpec) -> Result<Vec<TaskDistribution<T>>> {
    let target_cov = make_covariance::<T>(spec.covariance, spec.p)?;
    let source_cov = match spec.source_covariance {
        Some(kind) => make_covariance::<T>(kind, spec.p)?,
        None => target_cov.clone(),
    };
    let noise = T::cst(spec.noise_sd);
    let mut out = vec![TaskDistribution::new(target_cov, noise)?];
    for _ in 0..spec.k {
        out.push(TaskDistribution::new(source_cov.clone(), noise)?);
    }
    Ok(out)
}

/// A sampled problem together with the noise realisations that produced it.
#[derive(Debug, Clone)]
pub struct SampledProblem<T: Real> {
    pub problem: TransferProblem<T>,
    /// `ε^(k)` for `k = 0..=K`.
    pub noise: Vec<DVector<T>>,
}

impl<T: Real> SampledProblem<T> {
    /// Noise of all tasks concatenated in stacking order.
    pub fn stacked_noise(&self) -> DVector<T> {
        let n: usize = self.noise.iter().map(|e| e.len()).sum();
        DVector::from_iterator(n, self.noise.iter().flat_map(|e| e.iter().copied()))
    }
}

/// Draws one problem: Gaussian rows with covariance `Σ^(k)` and
/// `y^(k) = X^(k)(β + δ^(k)) + ε^(k)`, `ε` i.i.d. `N(0, σ²)`. Task `k` draws
/// from its own substream of `spec.seed`, so the output is a pure function
/// of `(spec, truth)`.
pub fn sample_problem_with_noise<T: Real>(
    spec: &SettingSpec,
    truth: &GroundTruth<T>,
) -> Result<SampledProblem<T>> {
    spec.validate()?;
    if truth.beta.len() != spec.p || truth.k() != spec.k {
        return Err(crate::error::dimension(format!(
            "truth has p = {}, K = {}; spec has p = {}, K = {}",
            truth.beta.len(),
            truth.k(),
            spec.p,
            spec.k
        )));
    }
    let dists = task_distributions::<T>(spec)?;
    let mut tasks = Vec::with_capacity(spec.k + 1);
    let mut noise = Vec::with_capacity(spec.k + 1);
    for (k, dist) in dists.iter().enumerate() {
        let n = if k == 0 { spec.n_t } else { spec.n_s };
        let mut rng = task_rng(spec.seed, k as u64);
        let x = sample_design(&mut rng, n, &dist.sigma_cov)?;
        let eps = DVector::from_fn(n, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            dist.noise_sd * T::cst(z)
        });
        let coef = if k == 0 {
            truth.beta.clone()
        } else {
            &truth.beta + &truth.deltas[k - 1]
        };
        let y = &x * coef + &eps;
        tasks.push(Task::new(x, y)?);
        noise.push(eps);
    }
    let target = tasks.remove(0);
    Ok(SampledProblem {
        problem: TransferProblem::new(target, tasks)?,
        noise,
    })
}

pub fn sample_problem<T: Real>(spec: &SettingSpec, truth: &GroundTruth<T>) -> Result<TransferProblem<T>> {
    sample_problem_with_noise(spec, truth).map(|s| s.problem)
}

/// `n` i.i.d. rows from `N(0, Σ)`, drawn row by row.
pub fn sample_design<T: Real, R: Rng>(rng: &mut R, n: usize, sigma: &DMatrix<T>) -> Result<DMatrix<T>> {
    let p = sigma.ncols();
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let v: f64 = StandardNormal.sample(rng);
            z[(i, j)] = T::cst(v);
        }
    }
    if sigma.is_identity(T::zero()) {
        return Ok(z);
    }
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| invalid("covariance is not positive definite"))?;
    Ok(z * chol.l().transpose())
}
