//! Physical constants and unit conversions.
//!
//! Everything inside the crate works in angular frequency (rad/s). Files and
//! command-line values are ordinary frequency in hertz; convert at the boundary.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Vacuum speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[inline]
pub fn angular_from_hz(hz: f64) -> f64 {
    TAU * hz
}

#[inline]
pub fn hz_from_angular(omega: f64) -> f64 {
    omega / TAU
}

/// Variance ratio to shot noise in decibels, `10 log10(v)`.
pub fn db_from_linear(v: f64) -> Result<f64> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::domain(format!(
            "variance must be positive and finite to express in dB, got {v}"
        )));
    }
    Ok(10.0 * v.log10())
}

pub fn linear_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unity_is_zero_db() {
        assert_eq!(db_from_linear(1.0).unwrap(), 0.0);
        assert_eq!(linear_from_db(0.0), 1.0);
    }

    #[test]
    fn coupled_squeezing_level() {
        let db = db_from_linear(0.468).unwrap();
        assert!((db + 3.3).abs() < 0.01, "{db}");
    }

    #[test]
    fn non_positive_rejected() {
        assert!(db_from_linear(0.0).is_err());
        assert!(db_from_linear(-1.0).is_err());
        assert!(db_from_linear(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn db_round_trip(x in -60.0f64..60.0) {
            let back = db_from_linear(linear_from_db(x)).unwrap();
            prop_assert!((back - x).abs() < 1e-12);
        }

        #[test]
        fn hz_round_trip(f in 0.0f64..1e9) {
            prop_assert!((hz_from_angular(angular_from_hz(f)) - f).abs() <= 1e-15 * f.max(1.0) * 8.0);
        }
    }
}
