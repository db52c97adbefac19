//! Symmetric split-step Fourier propagation of the coupled equations
//!
//! ```text
//! ∂A_p/∂z = −iδβ₀A_p − δβ₁∂A_p/∂T − i(β₂/2)∂²A_p/∂T²
//!           + iγ_S|A_p|²A_p + iΣ_{n≠p}γ_C⁽ⁿ⁾|A_n|²A_p
//! ```
//!
//! Every sub-step is a pure phase rotation (in frequency for the linear part,
//! pointwise in time for the Kerr part), so the discrete L2 norm is conserved
//! up to FFT round-off.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecPolicy};
use crate::fiber::{gaussian_pulse, CharacteristicLengths, FiberSpec, ModeParams, PulseSpec};
use crate::spectral::{Dft, TimeGrid};

pub const DEFAULT_N_T: usize = 4096;
pub const MIN_STEPS: usize = 1000;
pub const MAX_STEPS: usize = 200_000;
/// Field magnitude at the window edge, relative to the peak, above which the
/// periodic boundary is considered to interfere.
pub const EDGE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsfConfig {
    pub n_z: usize,
    pub n_t: usize,
    /// Store the field every `checkpoint_stride` steps (plus z = 0 and z = L).
    pub checkpoint_stride: usize,
    #[serde(default)]
    pub exec: ExecPolicy,
}

impl SsfConfig {
    /// n_z = ⌈20·L/min(L_D, L_NL)⌉ clamped to [1000, 200000], n_t = 4096, and
    /// about 100 checkpoints.
    pub fn for_problem(fiber: &FiberSpec, pulse: &PulseSpec) -> Result<Self> {
        let lengths = CharacteristicLengths::of(fiber, pulse)?;
        let scale = lengths.dispersion_length.min(lengths.nonlinear_length);
        let n_z = ((20.0 * fiber.length / scale).ceil() as usize).clamp(MIN_STEPS, MAX_STEPS);
        Ok(SsfConfig {
            n_z,
            n_t: DEFAULT_N_T,
            checkpoint_stride: (n_z / 100).max(1),
            exec: ExecPolicy::default(),
        })
    }

    /// z positions `propagate` stores for a fiber of `length`.
    pub fn checkpoints(&self, length: f64) -> Vec<f64> {
        let h = length / self.n_z as f64;
        let mut z = vec![0.0];
        z.extend((1..=self.n_z).filter(|s| s % self.checkpoint_stride == 0 || *s == self.n_z).map(|s| {
            if s == self.n_z {
                length
            } else {
                s as f64 * h
            }
        }));
        z
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_z < 1 {
            return Err(Error::domain("ssf.n_z", "must be >= 1"));
        }
        if self.checkpoint_stride < 1 {
            return Err(Error::domain("ssf.checkpoint_stride", "must be >= 1"));
        }
        Ok(())
    }
}

/// Per-mode complex envelopes on a (z checkpoint × T) lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFieldGrid {
    pub grid: TimeGrid,
    pub z: Vec<f64>,
    /// `data[p][iz * n_t + j]`.
    pub data: Vec<Vec<Complex64>>,
    /// Runtime diagnostics (window-edge leakage); not serialized.
    pub warnings: Vec<String>,
}

impl ComplexFieldGrid {
    pub fn new(grid: TimeGrid, z: Vec<f64>, data: Vec<Vec<Complex64>>) -> Result<Self> {
        if z.is_empty() || z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("z", "checkpoints must be non-empty and strictly increasing"));
        }
        for d in &data {
            if d.len() != z.len() * grid.n_t {
                return Err(Error::LengthMismatch {
                    expected: z.len() * grid.n_t,
                    got: d.len(),
                });
            }
        }
        Ok(ComplexFieldGrid {
            grid,
            z,
            data,
            warnings: Vec::new(),
        })
    }

    pub fn n_modes(&self) -> usize {
        self.data.len()
    }

    pub fn n_z(&self) -> usize {
        self.z.len()
    }

    pub fn n_t(&self) -> usize {
        self.grid.n_t
    }

    pub fn slice(&self, mode: usize, iz: usize) -> &[Complex64] {
        let n = self.grid.n_t;
        &self.data[mode][iz * n..(iz + 1) * n]
    }

    pub fn last(&self, mode: usize) -> &[Complex64] {
        self.slice(mode, self.n_z() - 1)
    }

    /// Σ_p Σ_j |A_p(z_i, T_j)|² at every checkpoint.
    pub fn l2_history(&self) -> Vec<f64> {
        (0..self.n_z())
            .map(|iz| {
                (0..self.n_modes())
                    .map(|p| self.slice(p, iz).iter().map(|a| a.norm_sqr()).sum::<f64>())
                    .sum()
            })
            .collect()
    }

    /// Largest relative deviation of the L2 norm from its value at z = 0.
    pub fn l2_drift(&self) -> f64 {
        let h = self.l2_history();
        h.iter().map(|e| ((e - h[0]) / h[0]).abs()).fold(0.0, f64::max)
    }

    /// Same lattice with every sample divided by `s`.
    pub fn scaled(&self, s: f64) -> ComplexFieldGrid {
        ComplexFieldGrid {
            grid: self.grid,
            z: self.z.clone(),
            data: self.data.iter().map(|d| d.iter().map(|a| a / s).collect()).collect(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Launch condition √(P₀·split_p)·exp(−T²/2T₀²) for every mode.
pub fn gaussian_initial(fiber: &FiberSpec, pulse: &PulseSpec, grid: &TimeGrid) -> Vec<Vec<Complex64>> {
    (0..fiber.n_modes())
        .map(|p| {
            let amp = (pulse.peak_power * pulse.energy_split[p]).sqrt();
            grid.times()
                .iter()
                .map(|&t| Complex64::from(amp * gaussian_pulse(t, pulse.t0)))
                .collect()
        })
        .collect()
}

/// exp{h·i(−δβ₀ + δβ₁ω + β₂ω²/2)} on every frequency bin.
pub fn linear_factors(mode: &ModeParams, grid: &TimeGrid, h: f64) -> Vec<Complex64> {
    (0..grid.n_t)
        .map(|k| {
            let w = grid.omega(k);
            // δβ₀ kept out of the dispersive phase so its magnitude does not
            // swamp the ω-dependent part in rounding.
            let dispersion = h * (mode.delta_beta1 * w + 0.5 * mode.beta2 * w * w);
            Complex64::from_polar(1.0, -h * mode.delta_beta0) * Complex64::from_polar(1.0, dispersion)
        })
        .collect()
}

/// Advance the spectra of every mode by `h` under the linear operator.
pub fn linear_half_step(spectra: &mut [Vec<Complex64>], h: f64, modes: &[ModeParams], grid: &TimeGrid) {
    for (spec, mode) in spectra.iter_mut().zip(modes) {
        for (a, f) in spec.iter_mut().zip(linear_factors(mode, grid, h)) {
            *a *= f;
        }
    }
}

/// Advance every mode by `h` under the Kerr terms (exact: |A_p| is frozen).
pub fn nonlinear_step(fields: &mut [Vec<Complex64>], h: f64, modes: &[ModeParams]) {
    let intensity: Vec<Vec<f64>> = fields
        .iter()
        .map(|f| f.iter().map(|a| a.norm_sqr()).collect())
        .collect();
    for (p, field) in fields.iter_mut().enumerate() {
        apply_kerr(field, p, &intensity, h, &modes[p]);
    }
}

fn apply_kerr(field: &mut [Complex64], p: usize, intensity: &[Vec<f64>], h: f64, mode: &ModeParams) {
    let cross: Vec<(usize, f64)> = (0..intensity.len())
        .filter(|&n| n != p)
        .map(|n| (n, mode.gamma_c_for(n + 1)))
        .filter(|(_, g)| *g != 0.0)
        .collect();
    if mode.gamma_s == 0.0 && cross.is_empty() {
        return;
    }
    for (j, a) in field.iter_mut().enumerate() {
        let mut rate = mode.gamma_s * intensity[p][j];
        for &(n, g) in &cross {
            rate += g * intensity[n][j];
        }
        *a *= Complex64::from_polar(1.0, h * rate);
    }
}

struct ModeWork {
    field: Vec<Complex64>,
    half: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

/// Propagate `initial` (one array per mode, length n_t) through `fiber`.
///
/// Each step is half linear, full nonlinear, half linear. The result holds
/// the field at z = 0, every `checkpoint_stride` steps, and z = L.
pub fn propagate(
    initial: &[Vec<Complex64>],
    fiber: &FiberSpec,
    grid: &TimeGrid,
    cfg: &SsfConfig,
) -> Result<ComplexFieldGrid> {
    fiber.validate()?;
    cfg.validate()?;
    if grid.n_t != cfg.n_t {
        return Err(Error::GridMismatch(format!("grid has n_t = {}, config has {}", grid.n_t, cfg.n_t)));
    }
    if initial.len() != fiber.n_modes() {
        return Err(Error::LengthMismatch {
            expected: fiber.n_modes(),
            got: initial.len(),
        });
    }
    for a in initial {
        if a.len() != grid.n_t {
            return Err(Error::LengthMismatch {
                expected: grid.n_t,
                got: a.len(),
            });
        }
    }

    let h = fiber.length / cfg.n_z as f64;
    let dft = Dft::new(grid.n_t);
    let linear = !fiber.modes.iter().any(|m| m.gamma_s != 0.0 || m.gamma_c.iter().any(|g| *g != 0.0));
    let mut work: Vec<ModeWork> = initial
        .iter()
        .zip(&fiber.modes)
        .map(|(a, m)| ModeWork {
            field: a.clone(),
            half: linear_factors(m, grid, h / 2.0),
            scratch: vec![Complex64::default(); dft.scratch_len()],
        })
        .collect();

    let mut z = vec![0.0];
    let mut data: Vec<Vec<Complex64>> = initial.to_vec();
    let peak0 = initial
        .iter()
        .flat_map(|a| a.iter().map(|x| x.norm()))
        .fold(0.0, f64::max);
    let mut edge = edge_ratio(initial, peak0);

    let half_linear = |w: &mut ModeWork| {
        dft.forward_with_scratch(&mut w.field, &mut w.scratch).expect("length checked");
        for (a, f) in w.field.iter_mut().zip(&w.half) {
            *a *= f;
        }
        dft.inverse_with_scratch(&mut w.field, &mut w.scratch).expect("length checked");
    };

    for step in 1..=cfg.n_z {
        exec::for_each_mut(cfg.exec, &mut work, |_, w| half_linear(w));
        if !linear {
            let intensity: Vec<Vec<f64>> = work
                .iter()
                .map(|w| w.field.iter().map(|a| a.norm_sqr()).collect())
                .collect();
            exec::for_each_mut(cfg.exec, &mut work, |p, w| {
                apply_kerr(&mut w.field, p, &intensity, h, &fiber.modes[p])
            });
        }
        exec::for_each_mut(cfg.exec, &mut work, |_, w| half_linear(w));

        for (p, w) in work.iter().enumerate() {
            if !w.field.iter().map(|a| a.norm_sqr()).sum::<f64>().is_finite() {
                return Err(Error::NonFiniteField { step, mode: p + 1 });
            }
        }

        if step % cfg.checkpoint_stride == 0 || step == cfg.n_z {
            let zc = if step == cfg.n_z { fiber.length } else { step as f64 * h };
            z.push(zc);
            for (d, w) in data.iter_mut().zip(&work) {
                d.extend_from_slice(&w.field);
            }
            let fields: Vec<Vec<Complex64>> = work.iter().map(|w| w.field.clone()).collect();
            edge = edge.max(edge_ratio(&fields, peak0));
        }
    }

    let mut out = ComplexFieldGrid::new(*grid, z, data)?;
    if edge > EDGE_TOLERANCE {
        out.warnings.push(format!(
            "field at the window edge reaches {edge:.2e} of the launch peak; widen the time window"
        ));
    }
    Ok(out)
}

fn edge_ratio(fields: &[Vec<Complex64>], peak: f64) -> f64 {
    if peak == 0.0 {
        return 0.0;
    }
    fields
        .iter()
        .map(|a| a[0].norm().max(a[a.len() - 1].norm()) / peak)
        .fold(0.0, f64::max)
}
