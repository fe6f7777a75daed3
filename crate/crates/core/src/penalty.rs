//! Folded-concave penalties and local-linear-approximation weights.

use nalgebra::DVector;

use crate::error::{invalid, Result};
use crate::model::Estimate;
use crate::scalar::Real;

/// Default SCAD concavity parameter.
pub const SCAD_A: f64 = 3.7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyFamily<T> {
    L1,
    /// Smoothly clipped absolute deviation, `a > 2`.
    Scad { a: T },
    /// Minimax concave penalty, `gamma > 1`.
    Mcp { gamma: T },
}

impl<T: Real> PenaltyFamily<T> {
    pub fn scad() -> Self {
        Self::Scad { a: T::cst(SCAD_A) }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::L1 => Ok(()),
            Self::Scad { a } if a > T::cst(2.0) => Ok(()),
            Self::Scad { a } => Err(invalid(format!("SCAD requires a > 2, got {a}"))),
            Self::Mcp { gamma } if gamma > T::one() => Ok(()),
            Self::Mcp { gamma } => Err(invalid(format!("MCP requires gamma > 1, got {gamma}"))),
        }
    }

    /// Magnitude beyond which the derivative vanishes, in units of `λ`.
    /// Infinite for the Lasso.
    pub fn flat_threshold(&self) -> T {
        match *self {
            Self::L1 => T::infinity(),
            Self::Scad { a } => a,
            Self::Mcp { gamma } => gamma,
        }
    }
}

/// A penalty family at a fixed level `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec<T> {
    pub family: PenaltyFamily<T>,
    pub lambda: T,
}

impl<T: Real> PenaltySpec<T> {
    pub fn new(family: PenaltyFamily<T>, lambda: T) -> Result<Self> {
        family.validate()?;
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(invalid(format!("penalty level must be finite and nonnegative, got {lambda}")));
        }
        Ok(Self { family, lambda })
    }

    /// `R_λ(t)` for `t ≥ 0`.
    pub fn value(&self, t: T) -> Result<T> {
        check_magnitude(t)?;
        let lam = self.lambda;
        let two = T::cst(2.0);
        Ok(match self.family {
            PenaltyFamily::L1 => lam * t,
            PenaltyFamily::Scad { a } => {
                if t <= lam {
                    lam * t
                } else if t <= a * lam {
                    (two * a * lam * t - t * t - lam * lam) / (two * (a - T::one()))
                } else {
                    (a + T::one()) * lam * lam / two
                }
            }
            PenaltyFamily::Mcp { gamma } => {
                if t <= gamma * lam {
                    lam * t - t * t / (two * gamma)
                } else {
                    gamma * lam * lam / two
                }
            }
        })
    }

    /// `R′_λ(t)` for `t ≥ 0`; callers pass magnitudes.
    pub fn derivative(&self, t: T) -> Result<T> {
        check_magnitude(t)?;
        let lam = self.lambda;
        Ok(match self.family {
            PenaltyFamily::L1 => lam,
            PenaltyFamily::Scad { a } => {
                if t <= lam {
                    lam
                } else if t <= a * lam {
                    (a * lam - t) / (a - T::one())
                } else {
                    T::zero()
                }
            }
            PenaltyFamily::Mcp { gamma } => (lam - t / gamma).max(T::zero()),
        })
    }
}

fn check_magnitude<T: Real>(t: T) -> Result<()> {
    if t >= T::zero() {
        Ok(())
    } else {
        Err(invalid(format!("penalty argument must be a nonnegative magnitude, got {t}")))
    }
}

/// `R′_λ(t)` for the given family and level.
pub fn penalty_derivative<T: Real>(t: T, spec: &PenaltySpec<T>) -> Result<T> {
    spec.derivative(t)
}

/// Per-coordinate weights of the fused penalty: `w0` on the target
/// parameter, `wk[k]` on the contrast of source `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWeights<T: Real> {
    pub w0: DVector<T>,
    pub wk: Vec<DVector<T>>,
    pub lambda0: T,
    pub lambda1: T,
}

impl<T: Real> FeatureWeights<T> {
    /// Unit weights everywhere (plain Lasso on every coordinate).
    pub fn ones(p: usize, k: usize, lambda0: T, lambda1: T) -> Self {
        Self {
            w0: DVector::from_element(p, T::one()),
            wk: vec![DVector::from_element(p, T::one()); k],
            lambda0,
            lambda1,
        }
    }

    pub fn with_lambdas(mut self, lambda0: T, lambda1: T) -> Self {
        self.lambda0 = lambda0;
        self.lambda1 = lambda1;
        self
    }
}

/// One LLA step: `w0_j = R′_λ0(|β̂_j|)/λ0`, `wk_j = R′_λ1(|δ̂k_j|)/λ1`.
pub fn lla_feature_weights<T: Real>(
    init: &Estimate<T>,
    lambda0: T,
    lambda1: T,
    family: PenaltyFamily<T>,
) -> Result<FeatureWeights<T>> {
    if !(lambda0 > T::zero()) || !(lambda1 > T::zero()) {
        return Err(invalid("LLA weights need strictly positive lambda0 and lambda1"));
    }
    let pen0 = PenaltySpec::new(family, lambda0)?;
    let pen1 = PenaltySpec::new(family, lambda1)?;
    let weigh = |v: &DVector<T>, pen: &PenaltySpec<T>| -> Result<DVector<T>> {
        let mut out = DVector::zeros(v.len());
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o = pen.derivative(x.abs())? / pen.lambda;
        }
        Ok(out)
    };
    Ok(FeatureWeights {
        w0: weigh(&init.beta_hat, &pen0)?,
        wk: init
            .delta_hats
            .iter()
            .map(|d| weigh(d, &pen1))
            .collect::<Result<_>>()?,
        lambda0,
        lambda1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scad(lambda: f64) -> PenaltySpec<f64> {
        PenaltySpec::new(PenaltyFamily::scad(), lambda).unwrap()
    }

    #[test]
    fn scad_derivative_examples() {
        let pen = scad(0.2);
        assert_eq!(pen.derivative(0.1).unwrap(), 0.2);
        assert_eq!(pen.derivative(0.8).unwrap(), 0.0);
        assert!((pen.derivative(0.4).unwrap() - 0.34 / 2.7).abs() < 1e-15);
        assert!(pen.derivative(-0.1).is_err());
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-6;
        for pen in [
            scad(0.2),
            PenaltySpec::new(PenaltyFamily::Mcp { gamma: 3.0 }, 0.3).unwrap(),
            PenaltySpec::new(PenaltyFamily::L1, 0.5).unwrap(),
        ] {
            for i in 1..400 {
                let t = i as f64 * 0.005 + 0.0013;
                let fd = (pen.value(t + h).unwrap() - pen.value(t - h).unwrap()) / (2.0 * h);
                assert!((fd - pen.derivative(t).unwrap()).abs() < 1e-6, "t = {t}");
            }
        }
    }

    #[test]
    fn invalid_families_rejected() {
        assert!(PenaltySpec::new(PenaltyFamily::Scad { a: 2.0 }, 0.1).is_err());
        assert!(PenaltySpec::new(PenaltyFamily::Mcp { gamma: 1.0 }, 0.1).is_err());
        assert!(PenaltySpec::new(PenaltyFamily::<f64>::L1, -0.1).is_err());
    }

    fn estimate(beta: Vec<f64>, deltas: Vec<Vec<f64>>) -> Estimate<f64> {
        Estimate::exact(
            DVector::from_vec(beta),
            deltas.into_iter().map(DVector::from_vec).collect(),
            0.0,
        )
    }

    #[test]
    fn lla_weight_examples() {
        let zero = estimate(vec![0.0; 3], vec![vec![0.0; 3]]);
        let w = lla_feature_weights(&zero, 0.1, 0.2, PenaltyFamily::scad()).unwrap();
        assert!(w.w0.iter().chain(w.wk[0].iter()).all(|&x| x == 1.0));

        let init = estimate(vec![0.0, 0.5, 0.0], vec![vec![0.4, 0.75, -1.0]]);
        let w = lla_feature_weights(&init, 0.1, 0.2, PenaltyFamily::scad()).unwrap();
        assert!((w.wk[0][0] - 0.62963).abs() < 1e-5);
        assert_eq!(w.wk[0][1], 0.0);
        assert_eq!(w.wk[0][2], 0.0);
        assert_eq!(w.w0[1], 0.0);

        assert!(lla_feature_weights(&init, 0.0, 0.2, PenaltyFamily::scad()).is_err());
    }

    #[test]
    fn lasso_family_gives_unit_weights() {
        let init = estimate(vec![3.0, -1.0], vec![vec![0.2, 9.0]]);
        let w = lla_feature_weights(&init, 0.1, 0.2, PenaltyFamily::L1).unwrap();
        assert!(w.w0.iter().chain(w.wk[0].iter()).all(|&x| x == 1.0));
    }

    proptest! {
        #[test]
        fn derivative_bounded_and_nonincreasing(
            lambda in 0.01f64..2.0,
            t1 in 0.0f64..10.0,
            t2 in 0.0f64..10.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            for fam in [PenaltyFamily::scad(), PenaltyFamily::Mcp { gamma: 2.5 }, PenaltyFamily::L1] {
                let pen = PenaltySpec::new(fam, lambda).unwrap();
                let (dlo, dhi) = (pen.derivative(lo).unwrap(), pen.derivative(hi).unwrap());
                prop_assert!(dlo >= dhi);
                prop_assert!((0.0..=lambda).contains(&dlo) && (0.0..=lambda).contains(&dhi));
                if fam == PenaltyFamily::L1 {
                    prop_assert_eq!(dlo, dhi);
                }
            }
        }

        #[test]
        fn lla_weights_in_unit_interval(
            beta in proptest::collection::vec(-3.0f64..3.0, 5),
            lambda in 0.05f64..1.0,
        ) {
            let init = estimate(beta.clone(), vec![beta.clone()]);
            let w = lla_feature_weights(&init, lambda, lambda, PenaltyFamily::scad()).unwrap();
            for (j, b) in beta.iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(&w.w0[j]));
                if b.abs() >= SCAD_A * lambda {
                    prop_assert_eq!(w.w0[j], 0.0);
                }
            }
        }
    }
}
