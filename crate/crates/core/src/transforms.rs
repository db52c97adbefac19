//! Frame transformation, normalization of the coupled equations, and the δβ₀
//! scaling transformation.
//!
//! In the normalized frame z = L·ζ and T = T_max·t, so ζ ∈ [0, 1] and
//! t ∈ [−1/2, 1/2]; the field is U = A/√P₀. The normalized residual for mode p
//! is
//!
//! ```text
//! i ∂ζU_p − a0 U_p + i a1 ∂tU_p + a2 ∂²tU_p
//!     + a_spm |U_p|² U_p + Σ_{n≠p} a_xpm[n] |U_n|² U_p = 0
//! ```
//!
//! with a0 = L·δβ₀, a1 = L·δβ₁/T_max, a2 = −L·β₂/(2T_max²), a_spm = L·γ_S·P₀
//! and a_xpm[n] = L·γ_C⁽ⁿ⁾·P₀. Written with the frame factors k₁ = L/L_D and
//! k₂ = T_max/T₀ these are a0 = k₁L_D·δβ₀, a2 = k₁c/k₂² (scaled by the mode's
//! β₂ relative to mode 1) and a_spm = k₁d.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{dispersion_length, CharacteristicLengths, FiberSpec, PulseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameFactors {
    pub k1: f64,
    pub k2: f64,
    /// k₁·L_D, the physical length ζ = 1 maps to.
    pub l_ref: f64,
    /// k₂·T₀, the physical width of the normalized window.
    pub t_ref: f64,
}

impl FrameFactors {
    pub fn z_of(&self, zeta: f64) -> f64 {
        self.l_ref * zeta
    }

    pub fn t_of(&self, t: f64) -> f64 {
        self.t_ref * t
    }

    pub fn zeta_of(&self, z: f64) -> f64 {
        z / self.l_ref
    }

    pub fn tn_of(&self, t_phys: f64) -> f64 {
        t_phys / self.t_ref
    }
}

/// k₁ = L_max/L_D, k₂ = T_max/T₀.
pub fn frame_factors(l_max: f64, l_d: f64, t_max: f64, t0: f64) -> Result<FrameFactors> {
    for (name, v) in [("l_max", l_max), ("l_d", l_d), ("t_max", t_max), ("t0", t0)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(name, "must be finite and > 0"));
        }
    }
    let k1 = l_max / l_d;
    let k2 = t_max / t0;
    Ok(FrameFactors {
        k1,
        k2,
        l_ref: k1 * l_d,
        t_ref: k2 * t0,
    })
}

/// Frame for a fiber/pulse pair: L_max = fiber length, T_max = time window.
pub fn frame_for(fiber: &FiberSpec, pulse: &PulseSpec) -> Result<FrameFactors> {
    let l_d = dispersion_length(pulse.t0, fiber.modes[0].beta2)?;
    frame_factors(fiber.length, l_d, pulse.time_window, pulse.t0)
}

/// Result of shrinking δβ₀ by whole periods 2π/z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledBeta0 {
    pub original: f64,
    pub scaled: f64,
    /// Number of periods added, so that scaled = original + (2π/z)·periods.
    pub periods: i64,
    pub z_ref: f64,
}

/// Replace δβ₀ by δβ₀ + (2π/z)·l′ with l′ = −trunc(δβ₀·z/2π), leaving
/// |scaled| < 2π/z. The field at z is unchanged by this substitution, and |A|
/// is unchanged everywhere along the fiber.
pub fn scale_beta0(delta_beta0: f64, z: f64) -> Result<ScaledBeta0> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::domain("z", "must be finite and > 0"));
    }
    let periods = -(delta_beta0 * z / (2.0 * PI)).trunc();
    if periods.abs() > 2f64.powi(53) {
        return Err(Error::domain("delta_beta0", "too many periods to represent exactly"));
    }
    let periods = periods as i64;
    Ok(ScaledBeta0 {
        original: delta_beta0,
        scaled: periodic_shift_equivalence(delta_beta0, z, periods),
        periods,
        z_ref: z,
    })
}

/// δβ₀ + (2π/z)·l: a coefficient producing the same field at z.
pub fn periodic_shift_equivalence(delta_beta0: f64, z: f64, l: i64) -> f64 {
    (2.0 * PI / z).mul_add(l as f64, delta_beta0)
}

/// Field for the true δβ₀ from the field computed with δβ₀ = 0: rotation by
/// φ = −δβ₀·z.
pub fn restore_phase(re0: f64, im0: f64, delta_beta0: f64, z: f64) -> (f64, f64) {
    let (s, c) = (-delta_beta0 * z).sin_cos();
    (re0 * c - im0 * s, re0 * s + im0 * c)
}

/// Normalized coefficients for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMode {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a_spm: f64,
    /// Indexed by mode (0-based); the entry for this mode is zero.
    pub a_xpm: Vec<f64>,
    /// Peak of the initial condition, √(energy fraction).
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSystem {
    pub modes: Vec<NormalizedMode>,
    /// −sign(β₂)/2 of mode 1.
    pub c: f64,
    /// L_D/L_NL; zero in a linear run.
    pub d: f64,
    pub frame: FrameFactors,
    pub lengths: CharacteristicLengths,
    /// Present when δβ₀ scaling was applied.
    pub scaling: Option<Vec<ScaledBeta0>>,
}

impl NormalizedSystem {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// k₂·T₀/T₀, the inverse normalized width of the launched Gaussian.
    pub fn k2(&self) -> f64 {
        self.frame.k2
    }

    /// Largest |coefficient| over all terms, a stiffness indicator.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.modes
            .iter()
            .flat_map(|m| [m.a0, m.a1, m.a2, m.a_spm].into_iter().chain(m.a_xpm.iter().copied()))
            .fold(0.0, |acc: f64, x| acc.max(x.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    #[default]
    Off,
    On,
}

/// Assemble the normalized system. With `Scaling::On`, every δβ₀ is replaced
/// by its scaled value at z = L before normalization.
pub fn normalized_coefficients(
    fiber: &FiberSpec,
    pulse: &PulseSpec,
    frame: &FrameFactors,
    scaling: Scaling,
) -> Result<NormalizedSystem> {
    fiber.validate()?;
    pulse.validate(fiber.n_modes())?;
    let lengths = CharacteristicLengths::of(fiber, pulse)?;
    let beta2_ref = fiber.modes[0].beta2;
    let c = -beta2_ref.signum() / 2.0;
    let d = if lengths.nonlinear_length.is_finite() {
        lengths.dispersion_length / lengths.nonlinear_length
    } else {
        0.0
    };
    let l = frame.l_ref;
    let t_max = frame.t_ref;
    let p0 = pulse.peak_power;

    let scaled = match scaling {
        Scaling::Off => None,
        Scaling::On => Some(
            fiber
                .modes
                .iter()
                .map(|m| scale_beta0(m.delta_beta0, fiber.length))
                .collect::<Result<Vec<_>>>()?,
        ),
    };

    let n = fiber.n_modes();
    let modes = fiber
        .modes
        .iter()
        .enumerate()
        .map(|(p, m)| {
            let db0 = scaled.as_ref().map_or(m.delta_beta0, |s| s[p].scaled);
            NormalizedMode {
                a0: l * db0,
                a1: l * m.delta_beta1 / t_max,
                // −L·β₂/(2T_max²); equals k₁c/k₂² for mode 1.
                a2: -frame.k1 / (2.0 * frame.k2 * frame.k2) * (m.beta2 / beta2_ref.abs()),
                a_spm: l * m.gamma_s * p0,
                a_xpm: (0..n).map(|q| l * m.gamma_c_for(q + 1) * p0).collect(),
                amplitude: pulse.mode_amplitude(p),
            }
        })
        .collect();

    Ok(NormalizedSystem {
        modes,
        c,
        d,
        frame: *frame,
        lengths,
        scaling: scaled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{self, canonical_fiber, T0, TIME_WINDOW};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn frame_factor_examples() {
        let f = frame_factors(5.0, 18.8, 100.0, 0.6007).unwrap();
        assert!(rel(f.k1, 0.2660) < 1e-3);
        assert!(rel(f.k2, 166.5) < 1e-3);
        assert!(rel(f.k1 * -0.5 / (f.k2 * f.k2), -4.8e-6) < 0.01);
        let f = frame_factors(18.8, 18.8, 0.6007, 0.6007).unwrap();
        assert_eq!((f.k1, f.k2), (1.0, 1.0));
        let f = frame_factors(100.0, 18.8, 100.0, 0.6007).unwrap();
        assert!(rel(f.k1, 5.319) < 1e-3);
        assert!(frame_factors(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn scale_beta0_reproduces_reference_values() {
        // (δβ₀, z, printed scaled, printed |l′|); p = 2 at L = 100 sits one
        // period away from the truncation rule.
        let cases = [
            (-11328.0841, 100.0, -0.0036, 180292_i64),
            (-5662.25183, 5.0, -1.10186823, 4505),
            (-11328.0841, 5.0, -0.75762821, 9014),
        ];
        for (b, z, printed, l) in cases {
            let s = scale_beta0(b, z).unwrap();
            assert_eq!(s.periods, l, "{b} {z}");
            assert!((s.scaled - printed).abs() < 1e-4, "{} vs {printed}", s.scaled);
        }
        let s = scale_beta0(-11328.0841, 100.0).unwrap();
        assert!((s.scaled - -0.00364598).abs() < 1e-8);
        let s = scale_beta0(-5662.25183, 100.0).unwrap();
        assert!((s.periods - 90116).abs() <= 1);
        let alt = periodic_shift_equivalence(-5662.25183, 100.0, 90116);
        assert!((alt - -0.09655858).abs() < 1e-7);
        assert_eq!(scale_beta0(0.0, 7.0).unwrap().scaled, 0.0);
        assert_eq!(scale_beta0(0.0, 7.0).unwrap().periods, 0);
        assert!(scale_beta0(1.0, 0.0).is_err());
        assert!(scale_beta0(1.0, -1.0).is_err());
    }

    #[test]
    fn restore_phase_examples() {
        assert_eq!(restore_phase(1.0, 0.0, 0.0, 3.0), (1.0, 0.0));
        let z = 2.0;
        let (re, im) = restore_phase(1.0, 0.0, -PI / 2.0 / z, z);
        assert!(re.abs() < 1e-15 && (im - 1.0).abs() < 1e-15);
    }

    #[test]
    fn restore_phase_matches_multimode_closed_form() {
        use crate::analytic::{linear_multimode, linear_single_mode, AnalyticQuery};
        let (b2, db0) = (0.0191641, -11328.0841);
        for &(z, t) in &[(3.0, 0.1), (17.0, -0.4), (100.0, 1.3), (0.5, 0.0)] {
            let q = AnalyticQuery::new(z, t, T0, b2, 0.0);
            let a0 = linear_single_mode(&q);
            let (re, im) = restore_phase(a0.re, a0.im, db0, z);
            let direct = linear_multimode(&AnalyticQuery { delta_beta0: db0, ..q });
            assert!((re - direct.re).abs() < 1e-12 && (im - direct.im).abs() < 1e-12);
        }
    }

    #[test]
    fn table_row_coefficients() {
        let fiber = canonical_fiber(5.0);
        let pulse = PulseSpec::gaussian(10.0, T0, TIME_WINDOW, 3).unwrap();
        let frame = frame_for(&fiber, &pulse).unwrap();
        let sys = normalized_coefficients(&fiber, &pulse, &frame, Scaling::Off).unwrap();
        let m3 = &sys.modes[2];
        // Dimensionally consistent a0 = k₁·L_D·δβ₀ = L·δβ₀.
        assert!(rel(m3.a0, 5.0 * presets::DELTA_BETA0[2]) < 1e-12);
        assert!(rel(m3.a0 / sys.lengths.dispersion_length, -3009.0) < 0.01);
        assert!(rel(sys.modes[0].a2, -4.8e-6) < 0.01);
        assert!(rel(m3.a1 * T0 / sys.lengths.dispersion_length, 1.3e-5) < 0.05);
        assert!(rel(m3.a_spm, 53.85) < 0.10);
        let max_xpm = sys.modes.iter().flat_map(|m| m.a_xpm.iter()).fold(0.0f64, |a, b| a.max(*b));
        assert!(rel(max_xpm, 107.7) < 0.10);
        assert!(sys.modes.iter().enumerate().all(|(p, m)| m.a_xpm[p] == 0.0));
        assert_eq!(sys.c, -0.5);
        assert!((sys.modes[0].amplitude - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn linear_run_has_no_kerr_terms() {
        let fiber = canonical_fiber(5.0).linear();
        let pulse = PulseSpec::gaussian(10.0, T0, TIME_WINDOW, 3).unwrap();
        let frame = frame_for(&fiber, &pulse).unwrap();
        let sys = normalized_coefficients(&fiber, &pulse, &frame, Scaling::Off).unwrap();
        assert_eq!(sys.d, 0.0);
        assert!(sys.modes.iter().all(|m| m.a_spm == 0.0 && m.a_xpm.iter().all(|x| *x == 0.0)));
        assert!(sys.lengths.nonlinear_length.is_infinite());
    }

    #[test]
    fn scaling_bounds_a0_by_one_normalized_period() {
        for l in [5.0, 19.0, 100.0, 300.0] {
            let fiber = canonical_fiber(l);
            let pulse = PulseSpec::gaussian(10.0, T0, TIME_WINDOW, 3).unwrap();
            let frame = frame_for(&fiber, &pulse).unwrap();
            let sys = normalized_coefficients(&fiber, &pulse, &frame, Scaling::On).unwrap();
            for m in &sys.modes {
                assert!(m.a0.abs() < 2.0 * PI, "L={l} a0={}", m.a0);
            }
            let off = normalized_coefficients(&fiber, &pulse, &frame, Scaling::Off).unwrap();
            for (a, b) in sys.modes.iter().zip(&off.modes) {
                // Shift of a0 is a whole number of 2π.
                let k = (a.a0 - b.a0) / (2.0 * PI);
                assert!((k - k.round()).abs() < 1e-6, "{k}");
            }
        }
    }

    #[test]
    fn a2_sign_follows_beta2() {
        let mut fiber = canonical_fiber(5.0).linear();
        let pulse = PulseSpec::gaussian(10.0, T0, TIME_WINDOW, 3).unwrap();
        let frame = frame_for(&fiber, &pulse).unwrap();
        let pos = normalized_coefficients(&fiber, &pulse, &frame, Scaling::Off).unwrap();
        for m in &mut fiber.modes {
            m.beta2 = -m.beta2;
        }
        let neg = normalized_coefficients(&fiber, &pulse, &frame, Scaling::Off).unwrap();
        for (a, b) in pos.modes.iter().zip(&neg.modes) {
            assert!(a.a2 < 0.0 && b.a2 > 0.0);
            assert!(rel(a.a2, -b.a2) < 1e-15);
        }
        assert_eq!(neg.c, 0.5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shift_is_exact_multiple_of_period(b in -2e4f64..2e4, z in 0.1f64..500.0, l in -200_000i64..200_000) {
                let shifted = periodic_shift_equivalence(b, z, l);
                let period = 2.0 * PI / z;
                let dominant = b.abs().max((period * l as f64).abs()).max(shifted.abs());
                let ulp = dominant * f64::EPSILON;
                prop_assert!(((shifted - b) - period * l as f64).abs() <= 2.0 * ulp);
            }

            #[test]
            fn scaled_is_below_one_period(b in -2e4f64..2e4, z in 0.1f64..500.0) {
                let s = scale_beta0(b, z).unwrap();
                prop_assert!(s.scaled.abs() < 2.0 * PI / z);
            }

            #[test]
            fn restore_phase_is_isometry(re in -10f64..10.0, im in -10f64..10.0, b in -2e4f64..2e4, z in 0.0f64..300.0) {
                let (r, i) = restore_phase(re, im, b, z);
                let n0 = re * re + im * im;
                prop_assert!((r * r + i * i - n0).abs() <= 8.0 * f64::EPSILON * n0.max(1e-300));
            }
        }
    }
}
