//! Scalar abstraction shared by the geometry, grid and linear-algebra code.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + FromStr + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance floor for iterative numerical routines at this precision.
    #[inline]
    fn solver_eps() -> Self {
        Self::max(Self::lit(1e-12), Self::epsilon() * Self::lit(8.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ceil(x)` that ignores excess of at most `1e-9` above an integer.
///
/// Grid and split sizing divide decimal quantities whose quotient is an
/// integer in exact arithmetic but lands a few ulps above it in binary.
pub fn ceil_tolerant<T: Real>(x: T) -> T {
    (x - T::lit(1e-9)).ceil()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_tolerant_absorbs_rounding() {
        assert_eq!(ceil_tolerant(2.0000000000000004_f64), 2.0);
        assert_eq!(ceil_tolerant(1.9999999999999996_f64), 2.0);
        assert_eq!(ceil_tolerant(394.4_f64), 395.0);
        assert_eq!(ceil_tolerant(3.0_f32), 3.0);
    }
}
