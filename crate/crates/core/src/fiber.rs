//! Fiber, mode and pulse descriptions plus the characteristic lengths derived
//! from them.
//!
//! Units are fixed throughout the crate: meters, picoseconds, watts and
//! nanojoules. Nothing carries units at runtime.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy of 1 nJ spread over 1 ps, in watts.
const NJ_PER_PS_IN_W: f64 = 1.0e3;

/// Rule-of-thumb multiplier on the characteristic lengths beyond which a PINN
/// stops resolving the solution.
pub const TRAINABLE_LENGTH_FACTOR: f64 = 50.0;

/// Per-mode propagation coefficients, offsets taken relative to mode 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    /// 1-based mode index.
    pub index: usize,
    /// δβ₀ in 1/m.
    pub delta_beta0: f64,
    /// δβ₁ in ps/m.
    pub delta_beta1: f64,
    /// β₂ in ps²/m.
    pub beta2: f64,
    /// Self-phase Kerr coefficient, 1/(W·m).
    pub gamma_s: f64,
    /// Cross-phase coefficients against every other mode, in increasing mode
    /// order with this mode skipped.
    pub gamma_c: Vec<f64>,
}

impl ModeParams {
    /// γ_C against mode `other` (1-based). Returns 0 for `other == self.index`.
    pub fn gamma_c_for(&self, other: usize) -> f64 {
        use std::cmp::Ordering::*;
        match other.cmp(&self.index) {
            Less => self.gamma_c[other - 1],
            Equal => 0.0,
            Greater => self.gamma_c[other - 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberSpec {
    /// Fiber length in m.
    pub length: f64,
    /// Carrier wavelength in nm. Informational only.
    pub wavelength_nm: f64,
    pub modes: Vec<ModeParams>,
}

impl FiberSpec {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) {
            return Err(Error::domain("fiber.length", "must be > 0"));
        }
        if self.modes.is_empty() {
            return Err(Error::domain("fiber.modes", "at least one mode is required"));
        }
        let p = self.modes.len();
        for (i, m) in self.modes.iter().enumerate() {
            if m.index != i + 1 {
                return Err(Error::domain(
                    "fiber.modes.index",
                    format!("expected consecutive indices from 1, found {} at position {}", m.index, i),
                ));
            }
            if m.gamma_s < 0.0 || m.gamma_c.iter().any(|g| *g < 0.0) {
                return Err(Error::domain("fiber.modes.gamma", format!("mode {}: Kerr coefficients must be >= 0", m.index)));
            }
            if m.gamma_c.len() != p - 1 {
                return Err(Error::domain(
                    "fiber.modes.gamma_c",
                    format!("mode {}: expected {} cross-phase entries, found {}", m.index, p - 1, m.gamma_c.len()),
                ));
            }
            let finite = [m.delta_beta0, m.delta_beta1, m.beta2, m.gamma_s]
                .iter()
                .chain(m.gamma_c.iter())
                .all(|x| x.is_finite());
            if !finite {
                return Err(Error::domain("fiber.modes", format!("mode {}: non-finite coefficient", m.index)));
            }
        }
        let fundamental = &self.modes[0];
        if fundamental.delta_beta0 != 0.0 || fundamental.delta_beta1 != 0.0 {
            return Err(Error::domain(
                "fiber.modes[0]",
                "offsets are relative to mode 1, so its delta_beta0 and delta_beta1 must be 0",
            ));
        }
        Ok(())
    }

    /// Same fiber with every Kerr coefficient set to zero.
    pub fn linear(&self) -> FiberSpec {
        let mut out = self.clone();
        for m in &mut out.modes {
            m.gamma_s = 0.0;
            m.gamma_c.iter_mut().for_each(|g| *g = 0.0);
        }
        out
    }

    /// Same fiber without cross-phase modulation.
    pub fn spm_only(&self) -> FiberSpec {
        let mut out = self.clone();
        for m in &mut out.modes {
            m.gamma_c.iter_mut().for_each(|g| *g = 0.0);
        }
        out
    }

    /// Same fiber with a different length.
    pub fn with_length(&self, length: f64) -> FiberSpec {
        FiberSpec {
            length,
            ..self.clone()
        }
    }

    pub fn is_linear(&self) -> bool {
        self.modes
            .iter()
            .all(|m| m.gamma_s == 0.0 && m.gamma_c.iter().all(|g| *g == 0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Total pulse energy over all modes, nJ.
    pub energy: f64,
    /// Half-width T₀ at 1/e of the amplitude, ps.
    pub t0: f64,
    /// Peak power of the total pulse, W.
    pub peak_power: f64,
    /// Full time window [−T_max/2, T_max/2], ps.
    pub time_window: f64,
    /// Fraction of the energy launched into each mode.
    pub energy_split: Vec<f64>,
}

impl PulseSpec {
    /// Gaussian pulse of energy `energy` split equally over `n_modes`.
    pub fn gaussian(energy: f64, t0: f64, time_window: f64, n_modes: usize) -> Result<PulseSpec> {
        let p0 = peak_power(energy, t0)?;
        Ok(PulseSpec {
            energy,
            t0,
            peak_power: p0,
            time_window,
            energy_split: vec![1.0 / n_modes as f64; n_modes],
        })
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if !(self.t0 > 0.0) {
            return Err(Error::domain("pulse.t0", "must be > 0"));
        }
        if !(self.time_window > 0.0) {
            return Err(Error::domain("pulse.time_window", "must be > 0"));
        }
        if !(self.peak_power > 0.0) {
            return Err(Error::domain("pulse.peak_power", "must be > 0"));
        }
        if self.energy_split.len() != n_modes {
            return Err(Error::domain(
                "pulse.energy_split",
                format!("expected {} entries, found {}", n_modes, self.energy_split.len()),
            ));
        }
        if self.energy_split.iter().any(|s| *s < 0.0) {
            return Err(Error::domain("pulse.energy_split", "fractions must be >= 0"));
        }
        let total: f64 = self.energy_split.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain("pulse.energy_split", format!("fractions sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// Peak amplitude of mode `p` (0-based) in normalized units (U = A/√P₀).
    pub fn mode_amplitude(&self, p: usize) -> f64 {
        self.energy_split[p].sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicLengths {
    pub dispersion_length: f64,
    /// `f64::INFINITY` in a linear run.
    pub nonlinear_length: f64,
    pub max_trainable: f64,
}

impl CharacteristicLengths {
    /// Lengths for a fiber and pulse, taking β₂ and γ_S of mode 1 and the
    /// total peak power.
    pub fn of(fiber: &FiberSpec, pulse: &PulseSpec) -> Result<Self> {
        let m = &fiber.modes[0];
        let dispersion_length = dispersion_length(pulse.t0, m.beta2)?;
        let nonlinear_length = match nonlinear_length(m.gamma_s, pulse.peak_power) {
            Ok(l) => l,
            Err(Error::LinearRegime) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let mut lengths = CharacteristicLengths {
            dispersion_length,
            nonlinear_length,
            max_trainable: 0.0,
        };
        lengths.max_trainable = max_trainable_length(&lengths);
        Ok(lengths)
    }
}

/// L_D = T₀²/|β₂|.
pub fn dispersion_length(t0: f64, beta2: f64) -> Result<f64> {
    if !(t0 > 0.0) {
        return Err(Error::domain("t0", "must be > 0"));
    }
    if beta2 == 0.0 {
        return Err(Error::NoDispersionScale);
    }
    Ok(t0 * t0 / beta2.abs())
}

/// L_NL = 1/(γ·P₀). Fails with [`Error::LinearRegime`] when the product is zero.
pub fn nonlinear_length(gamma: f64, p0: f64) -> Result<f64> {
    if gamma < 0.0 || p0 < 0.0 {
        return Err(Error::domain("gamma, p0", "must be >= 0"));
    }
    let g = gamma * p0;
    if g == 0.0 {
        return Err(Error::LinearRegime);
    }
    Ok(1.0 / g)
}

/// Peak power in W of a Gaussian amplitude √P₀·exp(−T²/2T₀²) carrying energy
/// `energy` nJ: P₀ = E/(√π·T₀).
pub fn peak_power(energy: f64, t0: f64) -> Result<f64> {
    if !(energy > 0.0) {
        return Err(Error::domain("energy", "must be > 0"));
    }
    if !(t0 > 0.0) {
        return Err(Error::domain("t0", "must be > 0"));
    }
    Ok(NJ_PER_PS_IN_W * energy / (std::f64::consts::PI.sqrt() * t0))
}

/// Unit-peak Gaussian amplitude exp(−T²/2T₀²).
pub fn gaussian_pulse(t: f64, t0: f64) -> f64 {
    (-t * t / (2.0 * t0 * t0)).exp()
}

/// Full width at half maximum of the intensity |A|², 2√(ln 2)·T₀.
pub fn fwhm(t0: f64) -> Result<f64> {
    if !(t0 > 0.0) {
        return Err(Error::domain("t0", "must be > 0"));
    }
    Ok(2.0 * std::f64::consts::LN_2.sqrt() * t0)
}

/// min(50·L_D, 50·L_NL). Advisory only.
pub fn max_trainable_length(lengths: &CharacteristicLengths) -> f64 {
    TRAINABLE_LENGTH_FACTOR * lengths.dispersion_length.min(lengths.nonlinear_length)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::*;
    use proptest::prelude::*;

    mod approx_eq {
        pub fn rel(a: f64, b: f64) -> f64 {
            (a - b).abs() / b.abs()
        }
    }

    #[test]
    fn dispersion_length_examples() {
        assert!(rel(dispersion_length(0.6007, 0.0191641).unwrap(), 18.83) < 1e-3);
        assert_eq!(dispersion_length(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(dispersion_length(2.0, 0.5).unwrap(), 8.0);
        assert_eq!(dispersion_length(2.0, -0.5).unwrap(), 8.0);
        assert_eq!(dispersion_length(1.0, 0.0), Err(Error::NoDispersionScale));
    }

    #[test]
    fn nonlinear_length_examples() {
        // Published value 0.09; γ_S is given to two digits.
        assert!(rel(nonlinear_length(0.0011, 9393.0).unwrap(), 0.09) < 0.10);
        assert_eq!(nonlinear_length(1.0, 1.0).unwrap(), 1.0);
        assert!(rel(nonlinear_length(0.0011, 93.0).unwrap(), 9.775) < 1e-3);
        assert_eq!(nonlinear_length(0.0, 5.0), Err(Error::LinearRegime));
    }

    #[test]
    fn peak_power_matches_table_rows() {
        assert!(rel(peak_power(10.0, 0.6007).unwrap(), 9393.0) < 1e-3);
        assert!(rel(peak_power(0.1, 0.6007).unwrap(), 93.9) < 1e-3);
        // √π nJ over 1 ps: 1 nJ/ps = 1000 W.
        assert!(rel(peak_power(std::f64::consts::PI.sqrt(), 1.0).unwrap(), 1000.0) < 1e-15);
    }

    #[test]
    fn peak_power_agrees_with_integrated_intensity() {
        // Trapezoid quadrature of P₀·exp(−T²/T₀²) over ±20 T₀ must give E back.
        let (e, t0) = (10.0, 0.6007);
        let p0 = peak_power(e, t0).unwrap();
        let n = 200_000;
        let (a, b) = (-20.0 * t0, 20.0 * t0);
        let h = (b - a) / n as f64;
        let mut sum = 0.0;
        for j in 0..=n {
            let t = a + j as f64 * h;
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            sum += w * p0 * gaussian_pulse(t, t0).powi(2);
        }
        let energy_nj = sum * h / NJ_PER_PS_IN_W;
        assert!(rel(energy_nj, e) < 1e-10, "{energy_nj}");
    }

    #[test]
    fn gaussian_and_fwhm() {
        assert_eq!(gaussian_pulse(0.0, 3.0), 1.0);
        assert!((gaussian_pulse(2.0, 2.0) - (-0.5f64).exp()).abs() < 1e-15);
        let half = 2.0 * (2.0 * std::f64::consts::LN_2).sqrt();
        assert!((gaussian_pulse(half, 2.0) - 0.5).abs() < 1e-14);
        assert!((fwhm(1.0).unwrap() - 1.6651).abs() < 1e-4);
        assert!((fwhm(0.6007).unwrap() - 1.0003).abs() < 1e-4);
        assert!(fwhm(0.0).is_err());
        // Intensity is at half maximum at ±FWHM/2.
        let f = fwhm(0.7).unwrap();
        assert!((gaussian_pulse(f / 2.0, 0.7).powi(2) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn trainable_length_examples() {
        let l = |ld, lnl| {
            max_trainable_length(&CharacteristicLengths {
                dispersion_length: ld,
                nonlinear_length: lnl,
                max_trainable: 0.0,
            })
        };
        assert!((l(18.8, 0.09) - 4.5).abs() < 1e-12);
        assert!((l(18.8, 9.28) - 464.0).abs() < 1e-9);
        assert_eq!(l(1.0, 1.0), 50.0);
        assert_eq!(l(18.8, f64::INFINITY), 940.0);
    }

    #[test]
    fn fiber_validation() {
        let fiber = crate::presets::canonical_fiber(100.0);
        fiber.validate().unwrap();
        let mut bad = fiber.clone();
        bad.modes[0].delta_beta0 = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = fiber.clone();
        bad.modes[1].gamma_c.pop();
        assert!(bad.validate().is_err());
        let mut bad = fiber.clone();
        bad.modes[2].index = 4;
        assert!(bad.validate().is_err());
        let mut bad = fiber;
        bad.modes[1].gamma_s = -1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn gamma_c_indexing_skips_self() {
        let m = ModeParams {
            index: 2,
            delta_beta0: 0.0,
            delta_beta1: 0.0,
            beta2: 1.0,
            gamma_s: 1.0,
            gamma_c: vec![10.0, 30.0],
        };
        assert_eq!(m.gamma_c_for(1), 10.0);
        assert_eq!(m.gamma_c_for(2), 0.0);
        assert_eq!(m.gamma_c_for(3), 30.0);
    }

    proptest! {
        #[test]
        fn dispersion_length_quadratic_in_t0(t0 in 0.01f64..10.0, b2 in 1e-4f64..1.0, k in 0.1f64..10.0) {
            let a = dispersion_length(k * t0, b2).unwrap();
            let b = k * k * dispersion_length(t0, b2).unwrap();
            prop_assert!(rel(a, b) < 1e-12);
        }

        #[test]
        fn nonlinear_length_homogeneous(g in 1e-5f64..1.0, p in 1e-3f64..1e4, k in 0.1f64..10.0) {
            let base = nonlinear_length(g, p).unwrap();
            prop_assert!(rel(nonlinear_length(k * g, p).unwrap(), base / k) < 1e-12);
            prop_assert!(rel(nonlinear_length(g, k * p).unwrap(), base / k) < 1e-12);
        }

        #[test]
        fn peak_power_round_trip(e in 1e-6f64..100.0, t0 in 0.01f64..10.0) {
            let p = peak_power(e, t0).unwrap();
            prop_assert!(rel(p * t0 * std::f64::consts::PI.sqrt() / NJ_PER_PS_IN_W, e) < 1e-14);
        }
    }
}
