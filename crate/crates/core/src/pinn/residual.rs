//! Residual assembly for the normalized coupled equations.
//!
//! Outputs are ordered (Re U₁, Im U₁, Re U₂, Im U₂, …). With U = u + iv and
//! g_p = a_spm|U_p|² + Σ_n a_xpm[n]|U_n|², the residual of mode p splits into
//!
//! ```text
//! r_re = −v_ζ − a0·u − a1·v_t + a2·u_tt + g_p·u
//! r_im =  u_ζ − a0·v + a1·u_t + a2·v_tt + g_p·v
//! ```

use crate::net::{Jet, Point, PointLoss};
use crate::transforms::NormalizedSystem;

/// Per-mode (r_re, r_im).
pub fn pde_components(sys: &NormalizedSystem, jets: &[Jet]) -> Vec<(f64, f64)> {
    let power: Vec<f64> = jets.chunks_exact(2).map(|m| m[0].value.powi(2) + m[1].value.powi(2)).collect();
    sys.modes
        .iter()
        .zip(jets.chunks_exact(2))
        .enumerate()
        .map(|(p, (m, uv))| {
            let (u, v) = (uv[0], uv[1]);
            let g = m.a_spm * power[p] + m.a_xpm.iter().zip(&power).map(|(a, q)| a * q).sum::<f64>();
            let re = -v.d_zeta - m.a0 * u.value - m.a1 * v.d_t + m.a2 * u.d_tt + g * u.value;
            let im = u.d_zeta - m.a0 * v.value + m.a1 * u.d_t + m.a2 * v.d_tt + g * v.value;
            (re, im)
        })
        .collect()
}

/// Σ_p r_re² + r_im² at one point.
pub fn pde_residual(sys: &NormalizedSystem, jets: &[Jet]) -> f64 {
    pde_components(sys, jets).iter().map(|(a, b)| a * a + b * b).sum()
}

/// Initial-condition target for mode p at normalized time t.
pub fn ic_target(amplitude: f64, k2: f64, t: f64) -> f64 {
    amplitude * (-(k2 * t).powi(2) / 2.0).exp()
}

/// Σ_p (Re U_p − √split_p·exp(−(k₂t)²/2))² + (Im U_p)² at one point.
pub fn ic_residual(sys: &NormalizedSystem, t: f64, outputs: &[f64]) -> f64 {
    sys.modes
        .iter()
        .zip(outputs.chunks_exact(2))
        .map(|(m, uv)| (uv[0] - ic_target(m.amplitude, sys.k2(), t)).powi(2) + uv[1].powi(2))
        .sum()
}

/// `scale · pde_residual`, with its adjoint.
pub struct PdeLoss<'a> {
    pub sys: &'a NormalizedSystem,
    pub scale: f64,
}

impl PointLoss for PdeLoss<'_> {
    fn eval(&self, _: Point, jets: &[Jet], adjoint: Option<&mut [Jet]>) -> f64 {
        let r = pde_components(self.sys, jets);
        let value: f64 = r.iter().map(|(a, b)| a * a + b * b).sum();
        if let Some(adj) = adjoint {
            let s = self.scale;
            let power: Vec<f64> = jets.chunks_exact(2).map(|m| m[0].value.powi(2) + m[1].value.powi(2)).collect();
            // ∂loss/∂g_q.
            let rho: Vec<f64> = r
                .iter()
                .zip(jets.chunks_exact(2))
                .map(|((re, im), uv)| 2.0 * (re * uv[0].value + im * uv[1].value))
                .collect();
            for (p, m) in self.sys.modes.iter().enumerate() {
                let (re, im) = r[p];
                let (u, v) = (jets[2 * p].value, jets[2 * p + 1].value);
                let g = m.a_spm * power[p] + m.a_xpm.iter().zip(&power).map(|(a, q)| a * q).sum::<f64>();
                // ∂loss/∂|U_p|²: own SPM plus every other mode's XPM coupling.
                let dpow = rho[p] * m.a_spm
                    + self.sys.modes.iter().zip(&rho).map(|(mq, rq)| rq * mq.a_xpm[p]).sum::<f64>();
                adj[2 * p] = Jet {
                    value: s * (2.0 * re * (g - m.a0) + 2.0 * dpow * u),
                    d_t: s * 2.0 * im * m.a1,
                    d_tt: s * 2.0 * re * m.a2,
                    d_zeta: s * 2.0 * im,
                };
                adj[2 * p + 1] = Jet {
                    value: s * (2.0 * im * (g - m.a0) + 2.0 * dpow * v),
                    d_t: -s * 2.0 * re * m.a1,
                    d_tt: s * 2.0 * im * m.a2,
                    d_zeta: -s * 2.0 * re,
                };
            }
        }
        self.scale * value
    }
}

/// `scale · ic_residual`, with its adjoint.
pub struct IcLoss<'a> {
    pub sys: &'a NormalizedSystem,
    pub scale: f64,
}

impl PointLoss for IcLoss<'_> {
    fn eval(&self, point: Point, jets: &[Jet], adjoint: Option<&mut [Jet]>) -> f64 {
        let k2 = self.sys.k2();
        let mut value = 0.0;
        let mut adj = adjoint;
        for (p, m) in self.sys.modes.iter().enumerate() {
            let du = jets[2 * p].value - ic_target(m.amplitude, k2, point.t);
            let v = jets[2 * p + 1].value;
            value += du * du + v * v;
            if let Some(a) = adj.as_deref_mut() {
                a[2 * p].value = self.scale * 2.0 * du;
                a[2 * p + 1].value = self.scale * 2.0 * v;
            }
        }
        self.scale * value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::PulseSpec;
    use crate::presets::{canonical_fiber, T0, TIME_WINDOW};
    use crate::transforms::{frame_for, normalized_coefficients, Scaling};

    fn system(energy: f64, nonlinear: bool) -> NormalizedSystem {
        let fiber = if nonlinear { canonical_fiber(5.0) } else { canonical_fiber(5.0).linear() };
        let pulse = PulseSpec::gaussian(energy, T0, TIME_WINDOW, 3).unwrap();
        let frame = frame_for(&fiber, &pulse).unwrap();
        normalized_coefficients(&fiber, &pulse, &frame, Scaling::On).unwrap()
    }

    fn jet(value: f64) -> Jet {
        Jet { value, ..Jet::default() }
    }

    #[test]
    fn zero_field_has_zero_residual() {
        let sys = system(10.0, true);
        assert_eq!(pde_residual(&sys, &[Jet::default(); 6]), 0.0);
    }

    #[test]
    fn constant_unit_field_leaves_only_phase_term() {
        let sys = system(10.0, false);
        let jets: Vec<Jet> = (0..6).map(|k| jet(if k % 2 == 0 { 1.0 } else { 0.0 })).collect();
        let expect: f64 = sys.modes.iter().map(|m| m.a0 * m.a0).sum();
        assert!((pde_residual(&sys, &jets) - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn ic_examples() {
        let sys = {
            let fiber = crate::presets::single_mode_fiber(5.0).linear();
            let pulse = PulseSpec::gaussian(1.0, T0, TIME_WINDOW, 1).unwrap();
            let frame = frame_for(&fiber, &pulse).unwrap();
            normalized_coefficients(&fiber, &pulse, &frame, Scaling::Off).unwrap()
        };
        assert_eq!(ic_residual(&sys, 0.0, &[0.0, 0.0]), 1.0);
        assert_eq!(ic_residual(&sys, 0.0, &[1.0, 0.0]), 0.0);
        let three = system(1.0, false);
        for m in &three.modes {
            assert!((ic_target(m.amplitude, three.k2(), 0.0) - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        }
    }

    fn fd_check(loss: &dyn PointLoss, point: Point, jets: &[Jet]) {
        let mut adj = vec![Jet::default(); jets.len()];
        loss.eval(point, jets, Some(&mut adj));
        let h = 1e-6;
        for k in 0..jets.len() {
            for c in 0..4 {
                let bump = |d: f64| {
                    let mut j = jets.to_vec();
                    let f = match c {
                        0 => &mut j[k].value,
                        1 => &mut j[k].d_t,
                        2 => &mut j[k].d_tt,
                        _ => &mut j[k].d_zeta,
                    };
                    *f += d;
                    loss.eval(point, &j, None)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let a = [adj[k].value, adj[k].d_t, adj[k].d_tt, adj[k].d_zeta][c];
                assert!((a - fd).abs() <= 1e-5 * (fd.abs() + 1.0), "output {k} comp {c}: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn adjoints_match_finite_differences() {
        let sys = system(10.0, true);
        let jets: Vec<Jet> = (0..6)
            .map(|k| {
                let x = k as f64 * 0.3;
                Jet { value: 0.2 + 0.1 * x, d_t: -0.4 + x, d_tt: 0.7 - x, d_zeta: 0.05 * x }
            })
            .collect();
        let p = Point::new(0.01, 0.3);
        fd_check(&PdeLoss { sys: &sys, scale: 0.5 }, p, &jets);
        fd_check(&IcLoss { sys: &sys, scale: 0.5 }, p, &jets);
    }

    #[test]
    fn even_field_gives_even_residual_without_walk_off() {
        let mut sys = system(10.0, true);
        sys.modes.iter_mut().for_each(|m| m.a1 = 0.0);
        let field = |t: f64| -> Vec<Jet> {
            (0..6)
                .map(|k| {
                    let a = 0.3 + 0.1 * k as f64;
                    let e = (-(a * t).powi(2)).exp();
                    Jet { value: e, d_t: -2.0 * a * a * t * e, d_tt: (4.0 * a.powi(4) * t * t - 2.0 * a * a) * e, d_zeta: 0.1 * e }
                })
                .collect()
        };
        for t in [0.05, 0.1, 0.3] {
            let (a, b) = (pde_residual(&sys, &field(t)), pde_residual(&sys, &field(-t)));
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
