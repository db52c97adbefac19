//! Closed-form solutions of the linear single-mode and multimode equations
//! for a Gaussian launch.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::transforms::NormalizedSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticQuery {
    pub z: f64,
    pub t: f64,
    pub t0: f64,
    pub beta2: f64,
    /// Zero for the single-mode solution.
    pub delta_beta0: f64,
    /// Group-delay offset; the pulse walks off to T − δβ₁·z.
    pub delta_beta1: f64,
}

impl AnalyticQuery {
    pub fn new(z: f64, t: f64, t0: f64, beta2: f64, delta_beta0: f64) -> Self {
        AnalyticQuery {
            z,
            t,
            t0,
            beta2,
            delta_beta0,
            delta_beta1: 0.0,
        }
    }

    pub fn with_walk_off(self, delta_beta1: f64) -> Self {
        AnalyticQuery { delta_beta1, ..self }
    }
}

/// T₀/√(T₀² − iβ₂z) · exp[−T²/(2(T₀² − iβ₂z))], principal square root.
///
/// `delta_beta0` is ignored; the group delay shifts T to T − δβ₁·z.
pub fn linear_single_mode(q: &AnalyticQuery) -> Complex64 {
    let w = Complex64::new(q.t0 * q.t0, -q.beta2 * q.z);
    let t = q.t - q.delta_beta1 * q.z;
    // Re w > 0, so w never touches the branch cut on the negative real axis.
    q.t0 / w.sqrt() * (-(t * t) / (2.0 * w)).exp()
}

/// exp{−iδβ₀z} times the single-mode solution.
pub fn linear_multimode(q: &AnalyticQuery) -> Complex64 {
    let phase = Complex64::from_polar(1.0, -q.delta_beta0 * q.z);
    phase * linear_single_mode(q)
}

/// T₀·exp(−T₀²ω²/2). The transform ∫A(0,T)e^{iωT}dT of the unit Gaussian is
/// √(2π) times this.
pub fn gaussian_spectrum(omega: f64, t0: f64) -> f64 {
    t0 * (-t0 * t0 * omega * omega / 2.0).exp()
}

/// Probe lattice for [`normalized_residual_of_analytic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualProbe {
    pub n_zeta: usize,
    pub n_t: usize,
    /// Probes span t ∈ [−t_extent, t_extent].
    pub t_extent: f64,
    pub h_zeta: f64,
    pub h_t: f64,
}

impl ResidualProbe {
    /// 64×64 probes over ζ ∈ [0, 1] and the part of the window the pulse
    /// occupies, with finite-difference steps scaled to the pulse width.
    pub fn around_pulse(sys: &NormalizedSystem) -> Self {
        let k1 = sys.frame.k1;
        let width = (1.0 + k1 * k1).sqrt() / sys.frame.k2;
        let walk = sys.modes.iter().map(|m| m.a1.abs()).fold(0.0, f64::max);
        ResidualProbe {
            n_zeta: 64,
            n_t: 64,
            t_extent: (6.0 * width + walk).min(0.5),
            h_zeta: 1e-3,
            h_t: 1e-3 / sys.frame.k2,
        }
    }
}

/// Max |residual| of the normalized linear operator applied to the closed-form
/// solution of mode `mode`, using fourth-order central differences.
///
/// `q` supplies T₀, β₂, δβ₀ and δβ₁ of the physical problem; `z` and `t` in
/// it are ignored. A correctly assembled `sys` is annihilated up to
/// finite-difference error.
pub fn normalized_residual_of_analytic(
    sys: &NormalizedSystem,
    mode: usize,
    q: &AnalyticQuery,
    probe: &ResidualProbe,
) -> f64 {
    let m = &sys.modes[mode];
    let frame = sys.frame;
    let u = |zeta: f64, t: f64| {
        m.amplitude
            * linear_multimode(&AnalyticQuery {
                z: frame.z_of(zeta),
                t: frame.t_of(t),
                ..*q
            })
    };
    let (hz, ht) = (probe.h_zeta, probe.h_t);
    let mut worst = 0.0f64;
    for iz in 0..probe.n_zeta {
        let zeta = iz as f64 / (probe.n_zeta - 1) as f64;
        for it in 0..probe.n_t {
            let t = -probe.t_extent + 2.0 * probe.t_extent * it as f64 / (probe.n_t - 1) as f64;
            let c = u(zeta, t);
            let u_z = (-u(zeta + 2.0 * hz, t) + 8.0 * u(zeta + hz, t) - 8.0 * u(zeta - hz, t)
                + u(zeta - 2.0 * hz, t))
                / (12.0 * hz);
            let (tp1, tp2, tm1, tm2) = (u(zeta, t + ht), u(zeta, t + 2.0 * ht), u(zeta, t - ht), u(zeta, t - 2.0 * ht));
            let u_t = (-tp2 + 8.0 * tp1 - 8.0 * tm1 + tm2) / (12.0 * ht);
            let u_tt = (-tp2 + 16.0 * tp1 - 30.0 * c + 16.0 * tm1 - tm2) / (12.0 * ht * ht);
            let i = Complex64::i();
            let r = i * u_z - m.a0 * c + i * m.a1 * u_t + m.a2 * u_tt;
            worst = worst.max(r.norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{BETA2, T0};
    use std::f64::consts::PI;

    const B2: f64 = BETA2[0];

    fn ld() -> f64 {
        T0 * T0 / B2
    }

    #[test]
    fn initial_condition_is_real_gaussian() {
        for t in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let a = linear_single_mode(&AnalyticQuery::new(0.0, t, T0, B2, 0.0));
            assert!((a.re - crate::fiber::gaussian_pulse(t, T0)).abs() < 1e-15);
            assert_eq!(a.im, 0.0);
        }
    }

    #[test]
    fn peak_at_one_dispersion_length() {
        let a = linear_single_mode(&AnalyticQuery::new(ld(), 0.0, T0, B2, 0.0));
        assert!((a.norm() - 2f64.powf(-0.25)).abs() < 1e-12);
    }

    #[test]
    fn energy_is_independent_of_z() {
        let energy = |z: f64| {
            let n = 40_000;
            let (a, b) = (-40.0 * T0, 40.0 * T0);
            let h = (b - a) / n as f64;
            (0..=n)
                .map(|j| {
                    let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                    w * linear_single_mode(&AnalyticQuery::new(z, a + j as f64 * h, T0, B2, 0.0)).norm_sqr()
                })
                .sum::<f64>()
                * h
        };
        let e0 = energy(0.0);
        assert!((e0 - PI.sqrt() * T0).abs() < 1e-12);
        assert!(((energy(ld()) - e0) / e0).abs() < 1e-10);
    }

    #[test]
    fn on_axis_broadening_law() {
        for k in [0.0, 0.5, 1.0, 3.0, 10.0] {
            let z = k * ld();
            let a = linear_single_mode(&AnalyticQuery::new(z, 0.0, T0, B2, 0.0));
            let expect = (1.0 + k * k).powf(-0.25);
            assert!((a.norm() - expect).abs() < 1e-13, "{k}");
        }
    }

    #[test]
    fn symmetric_in_time() {
        for z in [0.0, 3.0, 40.0] {
            for t in [0.1, 1.0, 2.5] {
                let p = linear_single_mode(&AnalyticQuery::new(z, t, T0, B2, 0.0));
                let m = linear_single_mode(&AnalyticQuery::new(z, -t, T0, B2, 0.0));
                assert_eq!(p, m);
            }
        }
    }

    #[test]
    fn continuous_in_z_over_ten_dispersion_lengths() {
        let n = 20_000;
        let mut prev = linear_single_mode(&AnalyticQuery::new(0.0, 0.2, T0, B2, 0.0));
        for j in 1..=n {
            let z = 10.0 * ld() * j as f64 / n as f64;
            let cur = linear_single_mode(&AnalyticQuery::new(z, 0.2, T0, B2, 0.0));
            assert!((cur - prev).norm() < 1e-3, "jump at z={z}");
            prev = cur;
        }
    }

    #[test]
    fn multimode_examples() {
        let q = AnalyticQuery::new(12.0, 0.3, T0, B2, 0.0);
        assert_eq!(linear_multimode(&q), linear_single_mode(&q));
        let z = 12.0;
        let full = AnalyticQuery {
            delta_beta0: 2.0 * PI / z,
            ..q
        };
        assert!((linear_multimode(&full) - linear_single_mode(&q)).norm() < 1e-14);

        let db0 = -11328.0841;
        let q = AnalyticQuery::new(100.0, 0.0, T0, B2, db0);
        let a = linear_multimode(&q);
        let a0 = linear_single_mode(&q);
        assert!((a.norm() - a0.norm()).abs() < 1e-15);
        let dphi = (a.arg() - a0.arg()).rem_euclid(2.0 * PI);
        let expect = (-db0 * 100.0).rem_euclid(2.0 * PI);
        let diff = (dphi - expect).abs();
        assert!(diff.min(2.0 * PI - diff) < 1e-9, "{dphi} vs {expect}");
    }

    #[test]
    fn walk_off_shifts_the_peak() {
        let q = AnalyticQuery::new(50.0, 50.0 * 0.0079, T0, B2, 0.0).with_walk_off(0.0079);
        let centered = AnalyticQuery::new(50.0, 0.0, T0, B2, 0.0);
        assert!((linear_single_mode(&q) - linear_single_mode(&centered)).norm() < 1e-15);
    }

    #[test]
    fn spectrum_examples() {
        assert_eq!(gaussian_spectrum(0.0, 0.7), 0.7);
        assert!((gaussian_spectrum(1.0 / 0.7, 0.7) - 0.7 * (-0.5f64).exp()).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn magnitude_independent_of_delta_beta0(z in 0.0f64..300.0, t in -5.0f64..5.0, db0 in -2e4f64..2e4) {
            let a = linear_multimode(&AnalyticQuery::new(z, t, T0, B2, db0));
            let b = linear_single_mode(&AnalyticQuery::new(z, t, T0, B2, 0.0));
            proptest::prop_assert!((a.norm() - b.norm()).abs() <= 1e-14 * b.norm().max(1e-300) + 1e-300);
        }
    }
}
