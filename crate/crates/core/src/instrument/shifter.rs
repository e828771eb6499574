//! Motorized trombone phase shifter.
//!
//! The motor moves 464 microsteps per millimetre of slide travel and the
//! slide is usable between 3 mm and 23 mm. Because the line doubles back,
//! each millimetre of travel adds two millimetres of line.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const STEPS_PER_MM: f64 = 464.0;
pub const TRAVEL_MIN_MM: f64 = 3.0;
pub const TRAVEL_MAX_MM: f64 = 23.0;
pub const BASE_LENGTH_MM: f64 = 286.0;
pub const REFERENCE_TRAVEL_MM: f64 = 7.0;

/// Effective refractive index of the shifter line.
pub const SHIFTER_INDEX: Complex64 = Complex64 { re: 1.004, im: 0.0022 };

/// Slide travel in millimetres for a motor position.
pub fn travel_mm(steps: i64) -> f64 {
    steps as f64 / STEPS_PER_MM
}

/// Line length in millimetres for a slide travel in millimetres.
pub fn length_mm(travel_mm: f64) -> f64 {
    BASE_LENGTH_MM + 2.0 * (travel_mm - REFERENCE_TRAVEL_MM)
}

/// Physical line length in meters for a motor position.
pub fn shifter_length(steps: i64) -> Result<f64> {
    let d = travel_mm(steps);
    if !(TRAVEL_MIN_MM..=TRAVEL_MAX_MM).contains(&d) {
        return Err(Error::TravelExceeded { steps, travel_mm: d });
    }
    Ok(length_mm(d) / 1000.0)
}

/// Line length in meters for a continuous travel given in meters. Used by
/// the optimizer, which treats travel as a continuous parameter.
pub fn length_for_travel(travel_m: f64) -> f64 {
    length_mm(travel_m * 1000.0) / 1000.0
}

/// `d(length)/d(travel)`, dimensionless.
pub const LENGTH_PER_TRAVEL: f64 = 2.0;

/// Nearest motor position for a continuous travel in meters.
pub fn steps_for_travel(travel_m: f64) -> i64 {
    (travel_m * 1000.0 * STEPS_PER_MM).round() as i64
}

/// Travel in meters that the motor actually reaches for a requested travel.
pub fn quantize_travel(travel_m: f64) -> f64 {
    travel_mm(steps_for_travel(travel_m)) / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseShifter {
    steps: i64,
}

impl PhaseShifter {
    pub fn new(steps: i64) -> Result<Self> {
        shifter_length(steps)?;
        Ok(PhaseShifter { steps })
    }

    pub fn steps(self) -> i64 {
        self.steps
    }

    pub fn travel_mm(self) -> f64 {
        travel_mm(self.steps)
    }

    pub fn length(self) -> f64 {
        length_mm(self.travel_mm()) / 1000.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_millimetre_is_out_of_travel() {
        assert!(matches!(
            shifter_length(464),
            Err(Error::TravelExceeded { steps: 464, .. })
        ));
        assert!(PhaseShifter::new(464).is_err());
    }

    #[test]
    fn reference_travel_gives_base_length() {
        assert_eq!(travel_mm(3248), 7.0);
        assert_eq!(shifter_length(3248).unwrap(), 0.286);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn full_travel_gives_318_mm() {
        assert_eq!(travel_mm(464 * 23), 23.0);
        assert_eq!(shifter_length(464 * 23).unwrap(), 0.318);
        assert!(shifter_length(464 * 23 + 1).is_err());
        assert!(shifter_length(464 * 3 - 1).is_err());
        assert_eq!(shifter_length(464 * 3).unwrap(), 0.278);
    }

    #[test]
    fn quantization_error_is_half_a_step() {
        for i in 0..1000 {
            let d = 0.003 + 0.02 * i as f64 / 999.0;
            let q = quantize_travel(d);
            assert!((q - d).abs() <= 0.5e-3 / STEPS_PER_MM + 1e-15);
            // line length moves by twice the travel error
            assert!((length_for_travel(q) - length_for_travel(d)).abs() <= 1e-3 / STEPS_PER_MM + 1e-15);
        }
    }

    #[test]
    fn continuous_and_stepped_lengths_agree() {
        let s = PhaseShifter::new(5000).unwrap();
        assert!((s.length() - length_for_travel(s.travel_mm() / 1000.0)).abs() < 1e-15);
    }
}
