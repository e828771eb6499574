//! Wavenumbers and injected wavefronts.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Complex wavenumber in 1/m. The imaginary part carries the Ohmic loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wavenumber(pub Complex64);

impl Wavenumber {
    pub fn value(self) -> Complex64 {
        self.0
    }

    pub fn is_passive(self) -> bool {
        self.0.im >= 0.0
    }
}

/// `k = 2 pi f n_r / c`.
pub fn wavenumber(frequency_hz: f64, refractive_index: Complex64) -> Result<Wavenumber> {
    if !(frequency_hz > 0.0) || !frequency_hz.is_finite() {
        return Err(Error::NonPositiveFrequency(frequency_hz));
    }
    Ok(Wavenumber(refractive_index * (TAU * frequency_hz / SPEED_OF_LIGHT)))
}

/// Wraps an angle onto `[-pi, pi]`.
pub fn wrap_phase(theta: f64) -> f64 {
    if (-PI..=PI).contains(&theta) {
        return theta;
    }
    let wrapped = theta - TAU * (theta / TAU).round();
    wrapped.clamp(-PI, PI)
}

/// Per-lead injected amplitude and phase. Entry `alpha` drives lead `alpha`
/// with `I = A e^{i theta}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wavefront {
    amplitudes: Vec<f64>,
    phases: Vec<f64>,
}

impl Wavefront {
    pub fn new(amplitudes: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        if amplitudes.len() != phases.len() {
            return Err(Error::DimensionMismatch {
                expected: amplitudes.len(),
                found: phases.len(),
            });
        }
        if let Some((lead, a)) = amplitudes
            .iter()
            .enumerate()
            .find(|(_, a)| !(**a >= 0.0) || !a.is_finite())
        {
            return Err(Error::InvalidWavefront(format!(
                "lead {lead} has amplitude {a}; amplitudes must be finite and non-negative"
            )));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidWavefront("phases must be finite".into()));
        }
        let phases = phases.into_iter().map(wrap_phase).collect();
        Ok(Wavefront { amplitudes, phases })
    }

    /// All leads silent.
    pub fn silent(lead_count: usize) -> Self {
        Wavefront {
            amplitudes: vec![0.0; lead_count],
            phases: vec![0.0; lead_count],
        }
    }

    pub fn lead_count(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitude(&self, lead: usize) -> f64 {
        self.amplitudes[lead]
    }

    pub fn phase(&self, lead: usize) -> f64 {
        self.phases[lead]
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Complex input `I = A e^{i theta}` on a lead.
    pub fn input(&self, lead: usize) -> Complex64 {
        Complex64::from_polar(self.amplitudes[lead], self.phases[lead])
    }

    pub fn set_amplitude(&mut self, lead: usize, amplitude: f64) -> Result<()> {
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(Error::InvalidWavefront(format!(
                "lead {lead} amplitude {amplitude} must be finite and non-negative"
            )));
        }
        self.amplitudes[lead] = amplitude;
        Ok(())
    }

    pub fn set_phase(&mut self, lead: usize, phase: f64) {
        self.phases[lead] = wrap_phase(phase);
    }

    /// Total injected power `sum |A|^2`.
    pub fn input_power(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Wavefront {
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
            phases: self.phases.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wavenumber_at_in_silico_frequency() {
        let k = wavenumber(3.2e9, Complex64::new(1.0, 0.0085)).unwrap().value();
        let k0 = TAU * 3.2e9 / SPEED_OF_LIGHT;
        assert_relative_eq!(k.re, k0, max_relative = 1e-15);
        assert_relative_eq!(k.im, 0.0085 * k0, max_relative = 1e-15);
        assert!((k.re - 67.07).abs() < 0.01, "{k}");
        assert!((k.im - 0.570).abs() < 1e-3, "{k}");
    }

    #[test]
    fn unit_wavenumber_at_c_over_two_pi() {
        let k = wavenumber(SPEED_OF_LIGHT / TAU, Complex64::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(k.value().re, 1.0, max_relative = 1e-15);
        assert_eq!(k.value().im, 0.0);
    }

    #[test]
    fn invisibility_schematic_frequency() {
        let k = wavenumber(0.74e9, Complex64::new(1.0, 0.0085)).unwrap();
        assert!(k.is_passive());
        assert_relative_eq!(k.value().re, TAU * 0.74e9 / SPEED_OF_LIGHT);
    }

    #[test]
    fn rejects_non_positive_frequency() {
        let n = Complex64::new(1.0, 0.0);
        assert_eq!(wavenumber(0.0, n), Err(Error::NonPositiveFrequency(0.0)));
        assert!(wavenumber(-1.0, n).is_err());
        assert!(wavenumber(f64::NAN, n).is_err());
    }

    #[test]
    fn phases_wrap_on_construction() {
        let w = Wavefront::new(vec![0.85], vec![333f64.to_radians()]).unwrap();
        assert_relative_eq!(w.phase(0), (-27f64).to_radians(), epsilon = 1e-12);
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), -PI);
        assert_relative_eq!(wrap_phase(3.0 * PI).abs(), PI, epsilon = 1e-12);
    }

    #[test]
    fn rejects_negative_amplitude() {
        assert!(Wavefront::new(vec![-0.1], vec![0.0]).is_err());
        assert!(Wavefront::new(vec![0.1, 0.2], vec![0.0]).is_err());
    }
}
