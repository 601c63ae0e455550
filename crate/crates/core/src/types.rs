//! Shared domain types and angle arithmetic.
//!
//! Angles are radians on the half-open interval `[-π, π)`; `π` itself maps to
//! `-π` so that bin assignment at the boundary is deterministic.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::invalid(format!("angle must be finite, got {a}")));
    }
    Ok(wrap_unchecked(a))
}

/// Infallible wrap for values already known to be finite.
#[inline]
pub(crate) fn wrap_unchecked(a: f64) -> f64 {
    if (-PI..PI).contains(&a) {
        return a;
    }
    let mut r = (a + PI).rem_euclid(TAU) - PI;
    // rem_euclid can return TAU itself for tiny negative inputs after rounding
    if r >= PI {
        r -= TAU;
    }
    if r < -PI {
        r = -PI;
    }
    r
}

/// Signed shortest angular difference `a - b`, wrapped into `[-π, π)`.
pub fn angular_diff(a: f64, b: f64) -> Result<f64> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid("angular_diff requires finite inputs"));
    }
    Ok(wrap_unchecked(a - b))
}

#[inline]
pub(crate) fn angular_diff_unchecked(a: f64, b: f64) -> f64 {
    wrap_unchecked(a - b)
}

/// Squared circular-linear distance on the orientation-speed cylinder.
#[inline]
pub fn circular_linear_dist2(a: &CylindricalSample, b: &CylindricalSample) -> f64 {
    let dt = angular_diff_unchecked(a.theta, b.theta);
    let dr = a.rho - b.rho;
    dt * dt + dr * dr
}

/// One motion observation `(θ, ρ)` on the orientation-speed cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylindricalSample {
    pub theta: f64,
    pub rho: f64,
    #[serde(default)]
    pub timestamp: f64,
}

impl CylindricalSample {
    /// Builds a sample, wrapping `theta` and rejecting negative or non-finite speeds.
    pub fn new(theta: f64, rho: f64, timestamp: f64) -> Result<Self> {
        let theta = wrap_angle(theta)?;
        if !rho.is_finite() || rho < 0.0 {
            return Err(Error::invalid(format!("speed must be finite and >= 0, got {rho}")));
        }
        Ok(Self { theta, rho, timestamp })
    }

    pub fn at(theta: f64, rho: f64) -> Result<Self> {
        Self::new(theta, rho, 0.0)
    }
}

/// A point in the world frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let p = Self { x, y, z };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_finite() && self.y.is_finite() && self.z.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("non-finite position {self:?}")))
        }
    }

    pub fn distance2(&self, other: &Position3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        self.distance2(other).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert_eq!(wrap_angle(PI).unwrap(), -PI);
        assert!((wrap_angle(1.5 * PI).unwrap() + 0.5 * PI).abs() < 1e-12);
        assert_eq!(wrap_angle(-PI).unwrap(), -PI);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn diff_examples() {
        assert!((angular_diff(0.1, -0.1).unwrap() - 0.2).abs() < 1e-12);
        assert!((angular_diff(PI - 0.1, -PI + 0.1).unwrap() + 0.2).abs() < 1e-12);
        assert_eq!(angular_diff(1.3, 1.3).unwrap(), 0.0);
        assert!(angular_diff(0.0, f64::NAN).is_err());
    }

    #[test]
    fn sample_rejects_negative_speed() {
        assert!(CylindricalSample::at(0.0, -0.1).is_err());
        let s = CylindricalSample::at(3.0 * PI, 1.0).unwrap();
        assert_eq!(s.theta, -PI);
    }

    #[test]
    fn position_must_be_finite() {
        assert!(Position3::new(0.0, f64::NAN, 0.0).is_err());
        assert!(Position3::new(1.0, 2.0, 3.0).is_ok());
    }

    proptest! {
        #[test]
        fn wrap_in_range_and_idempotent(a in -1e4f64..1e4) {
            let w = wrap_angle(a).unwrap();
            prop_assert!((-PI..PI).contains(&w));
            prop_assert_eq!(wrap_angle(w).unwrap(), w);
            // congruent mod 2π
            let k = ((a - w) / TAU).round();
            prop_assert!((a - w - k * TAU).abs() < 1e-9);
        }

        #[test]
        fn wrap_is_2pi_periodic(a in -100.0f64..100.0) {
            let d = angular_diff(wrap_angle(a + TAU).unwrap(), wrap_angle(a).unwrap()).unwrap();
            prop_assert!(d.abs() < 1e-9);
        }

        #[test]
        fn diff_antisymmetric(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let ab = angular_diff(a, b).unwrap();
            let ba = angular_diff(b, a).unwrap();
            prop_assume!((ab.abs() - PI).abs() > 1e-9);
            prop_assert!((ab + ba).abs() < 1e-9);
            prop_assert!(ab.abs() <= PI);
        }
    }
}
