//! Network-vs-reference error metrics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::{linear_multimode, AnalyticQuery};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::fiber::{FiberSpec, PulseSpec};
use crate::net::engine::predict;
use crate::net::{NetworkState, Point};
use crate::spectral::TimeGrid;
use crate::ssf::ComplexFieldGrid;
use crate::transforms::{restore_phase, NormalizedSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeError {
    /// 1-based.
    pub mode: usize,
    pub mse_abs: f64,
    pub mse_re: f64,
    pub mse_im: f64,
    /// max |U − U_ref|.
    pub max_err: f64,
}

fn describe(f: &ComplexFieldGrid) -> String {
    format!("{} modes × {} z × {} T over {} ps", f.n_modes(), f.n_z(), f.n_t(), f.grid.t_max)
}

/// Per-mode errors of `a` against `b`, both divided by `scale`.
pub fn field_errors(a: &ComplexFieldGrid, b: &ComplexFieldGrid, scale: f64) -> Result<Vec<ModeError>> {
    let same_z = a.z.len() == b.z.len() && a.z.iter().zip(&b.z).all(|(x, y)| (x - y).abs() <= 1e-9 * y.abs().max(1.0));
    let same_t = a.grid.n_t == b.grid.n_t && (a.grid.t_max - b.grid.t_max).abs() <= 1e-9 * b.grid.t_max;
    if a.n_modes() != b.n_modes() || !same_z || !same_t {
        return Err(Error::GridMismatch(format!("{} vs {}", describe(a), describe(b))));
    }
    Ok(a.data
        .iter()
        .zip(&b.data)
        .enumerate()
        .map(|(p, (x, y))| {
            let n = x.len() as f64;
            let (mut abs, mut re, mut im, mut max) = (0.0, 0.0, 0.0, 0.0f64);
            for (u, v) in x.iter().zip(y) {
                let (u, v) = (u / scale, v / scale);
                abs += (u.norm() - v.norm()).powi(2);
                re += (u.re - v.re).powi(2);
                im += (u.im - v.im).powi(2);
                max = max.max((u - v).norm());
            }
            ModeError {
                mode: p + 1,
                mse_abs: abs / n,
                mse_re: re / n,
                mse_im: im / n,
                max_err: max,
            }
        })
        .collect())
}

/// Network prediction on a physical (z, T) lattice, in √W. With `restore`,
/// fields trained with scaled δβ₀ are rotated back to the original δβ₀.
pub fn network_field(
    state: &NetworkState,
    sys: &NormalizedSystem,
    peak_power: f64,
    grid: TimeGrid,
    z: &[f64],
    restore: bool,
    exec: ExecPolicy,
) -> Result<ComplexFieldGrid> {
    let frame = sys.frame;
    if (grid.t_max - frame.t_ref).abs() > 1e-9 * frame.t_ref {
        return Err(Error::GridMismatch(format!(
            "reference window {} ps differs from the normalized window {} ps",
            grid.t_max, frame.t_ref
        )));
    }
    if z.iter().any(|&z| z < 0.0 || z > frame.l_ref * (1.0 + 1e-9)) {
        return Err(Error::GridMismatch(format!("reference z beyond the trained length {} m", frame.l_ref)));
    }
    if state.spec.n_modes() != sys.n_modes() {
        return Err(Error::domain("network.n_outputs", "mode count differs from the system"));
    }
    let times = grid.times();
    let points: Vec<Point> = z
        .iter()
        .flat_map(|&zz| times.iter().map(move |&t| Point::new(frame.tn_of(t), frame.zeta_of(zz))))
        .collect();
    let out = predict(state, &points, exec)?;
    let amp = peak_power.sqrt();
    let data = (0..sys.n_modes())
        .map(|p| {
            let shift = match (&sys.scaling, restore) {
                (Some(s), true) => s[p].original - s[p].scaled,
                _ => 0.0,
            };
            points
                .iter()
                .zip(&out)
                .map(|(pt, o)| {
                    let (re, im) = restore_phase(o[2 * p], o[2 * p + 1], shift, frame.z_of(pt.zeta));
                    Complex64::new(amp * re, amp * im)
                })
                .collect()
        })
        .collect();
    ComplexFieldGrid::new(grid, z.to_vec(), data)
}

/// Per-mode MSE of the network's |U| (and Re, Im) against `reference`, in
/// normalized units U = A/√P₀. The network field is phase-restored to the
/// original δβ₀ before comparison.
pub fn mse_vs_reference(
    state: &NetworkState,
    reference: &ComplexFieldGrid,
    sys: &NormalizedSystem,
    pulse: &PulseSpec,
    exec: ExecPolicy,
) -> Result<Vec<ModeError>> {
    if reference.n_modes() != sys.n_modes() {
        return Err(Error::GridMismatch(format!(
            "reference has {} modes, network has {}",
            reference.n_modes(),
            sys.n_modes()
        )));
    }
    let net = network_field(state, sys, pulse.peak_power, reference.grid, &reference.z, true, exec)?;
    field_errors(&net, reference, pulse.peak_power.sqrt())
}

/// Closed-form linear field (√W) of every mode on a (z, T) lattice, with
/// the original δβ₀ and walk-off.
pub fn analytic_reference(fiber: &FiberSpec, pulse: &PulseSpec, grid: TimeGrid, z: &[f64]) -> Result<ComplexFieldGrid> {
    fiber.validate()?;
    pulse.validate(fiber.n_modes())?;
    let times = grid.times();
    let data = fiber
        .modes
        .iter()
        .enumerate()
        .map(|(p, m)| {
            let amp = (pulse.peak_power * pulse.energy_split[p]).sqrt();
            z.iter()
                .flat_map(|&zz| {
                    times.iter().map(move |&t| {
                        amp * linear_multimode(&AnalyticQuery::new(zz, t, pulse.t0, m.beta2, m.delta_beta0).with_walk_off(m.delta_beta1))
                    })
                })
                .collect()
        })
        .collect();
    ComplexFieldGrid::new(grid, z.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetworkState;
    use crate::net::NetworkSpec;
    use crate::presets::{single_mode_fiber, T0};
    use crate::transforms::{frame_for, normalized_coefficients, Scaling};

    fn setup() -> (FiberSpec, PulseSpec, NormalizedSystem, ComplexFieldGrid) {
        let fiber = single_mode_fiber(19.0).linear();
        let pulse = PulseSpec::gaussian(1.0, T0, 10.0, 1).unwrap();
        let sys = normalized_coefficients(&fiber, &pulse, &frame_for(&fiber, &pulse).unwrap(), Scaling::On).unwrap();
        let z: Vec<f64> = (0..5).map(|i| 19.0 * i as f64 / 4.0).collect();
        let reference = analytic_reference(&fiber, &pulse, TimeGrid::new(64, 10.0).unwrap(), &z).unwrap();
        (fiber, pulse, sys, reference)
    }

    #[test]
    fn identical_fields_have_zero_error() {
        let (_, pulse, _, r) = setup();
        for e in field_errors(&r, &r, pulse.peak_power.sqrt()).unwrap() {
            assert_eq!((e.mse_abs, e.mse_re, e.mse_im, e.max_err), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn zero_network_scores_mean_reference_power() {
        let (_, pulse, sys, r) = setup();
        let net = NetworkState::zeros(NetworkSpec::new(1, 4, 1));
        let e = mse_vs_reference(&net, &r, &sys, &pulse, ExecPolicy::Sequential).unwrap();
        let p0 = pulse.peak_power;
        let expect = r.data[0].iter().map(|a| a.norm_sqr() / p0).sum::<f64>() / r.data[0].len() as f64;
        assert!((e[0].mse_abs - expect).abs() < 1e-14, "{} vs {expect}", e[0].mse_abs);
    }

    #[test]
    fn mismatches_are_named() {
        let (fiber, pulse, sys, r) = setup();
        let other = analytic_reference(&fiber, &pulse, TimeGrid::new(32, 10.0).unwrap(), &r.z).unwrap();
        let err = field_errors(&r, &other, 1.0).unwrap_err();
        assert!(err.to_string().contains("64 T") && err.to_string().contains("32 T"));
        let net = NetworkState::zeros(NetworkSpec::new(1, 4, 3));
        assert!(mse_vs_reference(&net, &r, &sys, &pulse, ExecPolicy::Sequential).is_err());
        let wide = analytic_reference(&fiber, &pulse, TimeGrid::new(64, 20.0).unwrap(), &r.z).unwrap();
        let net = NetworkState::zeros(NetworkSpec::new(1, 4, 1));
        assert!(mse_vs_reference(&net, &wide, &sys, &pulse, ExecPolicy::Sequential).is_err());
    }
}
