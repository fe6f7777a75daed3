//! Scalar abstraction shared by every estimator and solver.
//!
//! The numerics are written once against [`Real`]; `f64` is the type used by
//! the benchmark harness and `f32` is supported for memory-constrained runs
//! (with correspondingly looser tolerances).

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Real scalar usable by the estimators: an IEEE float with nalgebra's field
/// operations and num-traits conversions.
pub trait Real: RealField + Copy + ToPrimitive {
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn cst(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn infinity() -> Self {
        Self::cst(f64::INFINITY)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::cst(n as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_round_trip() {
        assert_eq!(f64::cst(0.3), 0.3);
        assert_eq!(f32::cst(0.5), 0.5f32);
        assert!(!f64::infinity().is_finite());
        assert!(!f32::infinity().is_finite());
        assert_eq!(f32::from_usize_lossy(7).as_f64(), 7.0);
    }
}
