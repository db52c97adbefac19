//! Time grid and the discrete Fourier pair used by the propagator.
//!
//! Synthesis uses the kernel e^{−iωT}: A(T) = (1/2π)∫Â(ω)e^{−iωT}dω, so that
//! ∂/∂T ↦ −iω. The discrete forward transform is therefore
//! X_k = Σ_j x_j e^{+2πi jk/N} and the inverse carries the 1/N.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_t: usize,
    /// Window width in ps; samples cover [−T_max/2, T_max/2).
    pub t_max: f64,
}

impl TimeGrid {
    pub fn new(n_t: usize, t_max: f64) -> Result<Self> {
        if n_t < 16 || !n_t.is_power_of_two() {
            return Err(Error::domain("n_t", format!("must be a power of two >= 16, got {n_t}")));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::domain("t_max", "must be finite and > 0"));
        }
        Ok(TimeGrid { n_t, t_max })
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_t as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        -self.t_max / 2.0 + j as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t).map(|j| self.t(j)).collect()
    }

    /// Signed frequency index of bin k, in [−N/2, N/2).
    pub fn signed_index(&self, k: usize) -> i64 {
        if k < self.n_t / 2 {
            k as i64
        } else {
            k as i64 - self.n_t as i64
        }
    }

    /// Angular frequency of bin k in rad/ps.
    pub fn omega(&self, k: usize) -> f64 {
        2.0 * PI * self.signed_index(k) as f64 / self.t_max
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.n_t).map(|k| self.omega(k)).collect()
    }
}

/// Planned transform pair for one length.
#[derive(Clone)]
pub struct Dft {
    n: usize,
    // rustfft's Inverse direction has the e^{+i} kernel we call forward.
    plus: Arc<dyn Fft<f64>>,
    minus: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("n", &self.n).finish()
    }
}

impl Dft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Dft {
            n,
            plus: planner.plan_fft_inverse(n),
            minus: planner.plan_fft_forward(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn scratch_len(&self) -> usize {
        self.plus.get_inplace_scratch_len().max(self.minus.get_inplace_scratch_len())
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    pub fn forward_with_scratch(&self, data: &mut [Complex64], scratch: &mut [Complex64]) -> Result<()> {
        self.check(data.len())?;
        self.plus.process_with_scratch(data, scratch);
        Ok(())
    }

    pub fn inverse_with_scratch(&self, data: &mut [Complex64], scratch: &mut [Complex64]) -> Result<()> {
        self.check(data.len())?;
        self.minus.process_with_scratch(data, scratch);
        let s = 1.0 / self.n as f64;
        data.iter_mut().for_each(|x| *x *= s);
        Ok(())
    }

    pub fn forward(&self, data: &mut [Complex64]) -> Result<()> {
        let mut scratch = vec![Complex64::default(); self.scratch_len()];
        self.forward_with_scratch(data, &mut scratch)
    }

    pub fn inverse(&self, data: &mut [Complex64]) -> Result<()> {
        let mut scratch = vec![Complex64::default(); self.scratch_len()];
        self.inverse_with_scratch(data, &mut scratch)
    }
}

/// Forward transform of a field sampled on `grid`.
pub fn dft_forward(grid: &TimeGrid, field: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut out = field.to_vec();
    Dft::new(grid.n_t).forward(&mut out)?;
    Ok(out)
}

pub fn dft_inverse(grid: &TimeGrid, spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut out = spectrum.to_vec();
    Dft::new(grid.n_t).inverse(&mut out)?;
    Ok(out)
}

/// Riemann approximation of ∫A(T)e^{iω_kT}dT from the discrete spectrum:
/// ΔT·e^{iω_k T_start}·X_k, where e^{iω_k T_start} = (−1)^k.
pub fn continuous_spectrum(grid: &TimeGrid, spectrum: &[Complex64]) -> Vec<Complex64> {
    spectrum
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let sign = if grid.signed_index(k).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            x * (sign * grid.dt())
        })
        .collect()
}
