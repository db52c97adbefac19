//! Canonical three-mode fiber (LP01, LP11a, LP21a at 1030 nm) and the named
//! experiment presets built on it.

use serde::{Deserialize, Serialize};

use crate::fiber::{FiberSpec, ModeParams, PulseSpec};

pub const WAVELENGTH_NM: f64 = 1030.0;
/// Pulse half-width in ps. Chosen so that L_D = 18.8 m and P₀(10 nJ) = 9393 W.
pub const T0: f64 = 0.6007;
pub const TIME_WINDOW: f64 = 100.0;
pub const GAMMA_S: f64 = 0.0011;
/// Cross-phase coefficient; twice γ_S, the ratio every normalized XPM entry
/// of the reference coefficient table carries.
pub const GAMMA_C: f64 = 2.0 * GAMMA_S;

pub const DELTA_BETA0: [f64; 3] = [0.0, -5662.25183, -11328.0841];
pub const DELTA_BETA1: [f64; 3] = [0.0, 0.00295601, 0.00791849];
pub const BETA2: [f64; 3] = [0.01916410, 0.01916082, 0.01915536];

/// The canonical fiber with SPM and XPM enabled.
pub fn canonical_fiber(length: f64) -> FiberSpec {
    let modes = (0..3)
        .map(|p| ModeParams {
            index: p + 1,
            delta_beta0: DELTA_BETA0[p],
            delta_beta1: DELTA_BETA1[p],
            beta2: BETA2[p],
            gamma_s: GAMMA_S,
            gamma_c: vec![GAMMA_C; 2],
        })
        .collect();
    FiberSpec {
        length,
        wavelength_nm: WAVELENGTH_NM,
        modes,
    }
}

/// Fundamental mode alone.
pub fn single_mode_fiber(length: f64) -> FiberSpec {
    FiberSpec {
        length,
        wavelength_nm: WAVELENGTH_NM,
        modes: vec![ModeParams {
            index: 1,
            delta_beta0: 0.0,
            delta_beta1: 0.0,
            beta2: BETA2[0],
            gamma_s: GAMMA_S,
            gamma_c: vec![],
        }],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    Linear,
    SpmOnly,
    SpmXpm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePreset {
    pub name: &'static str,
    pub description: &'static str,
    pub energy: f64,
    pub length: f64,
    pub n_modes: usize,
    pub nonlinearity: Nonlinearity,
    pub time_window: f64,
    /// Collocation points the full-budget run uses.
    pub n_interior: usize,
}

impl CasePreset {
    pub fn fiber(&self) -> FiberSpec {
        let base = if self.n_modes == 1 {
            single_mode_fiber(self.length)
        } else {
            canonical_fiber(self.length)
        };
        match self.nonlinearity {
            Nonlinearity::Linear => base.linear(),
            Nonlinearity::SpmOnly => base.spm_only(),
            Nonlinearity::SpmXpm => base,
        }
    }

    pub fn pulse(&self) -> PulseSpec {
        PulseSpec::gaussian(self.energy, T0, self.time_window, self.n_modes)
            .expect("preset pulse parameters are positive")
    }
}

pub const PRESETS: &[CasePreset] = &[
    CasePreset {
        name: "case1",
        description: "three-mode linear, E = 10 nJ, L = 100 m",
        energy: 10.0,
        length: 100.0,
        n_modes: 3,
        nonlinearity: Nonlinearity::Linear,
        time_window: TIME_WINDOW,
        n_interior: 240_000,
    },
    CasePreset {
        name: "case2",
        description: "three-mode linear, E = 10 nJ, L = 300 m",
        energy: 10.0,
        length: 300.0,
        n_modes: 3,
        nonlinearity: Nonlinearity::Linear,
        time_window: TIME_WINDOW,
        n_interior: 240_000,
    },
    CasePreset {
        name: "case3",
        description: "three-mode SPM, E = 10 nJ, L = 5 m",
        energy: 10.0,
        length: 5.0,
        n_modes: 3,
        nonlinearity: Nonlinearity::SpmOnly,
        time_window: TIME_WINDOW,
        n_interior: 240_000,
    },
    CasePreset {
        name: "case4",
        description: "three-mode SPM + XPM, E = 10 nJ, L = 5 m",
        energy: 10.0,
        length: 5.0,
        n_modes: 3,
        nonlinearity: Nonlinearity::SpmXpm,
        time_window: TIME_WINDOW,
        n_interior: 240_000,
    },
    CasePreset {
        name: "case5",
        description: "three-mode SPM + XPM, E = 0.1 nJ, L = 100 m",
        energy: 0.1,
        length: 100.0,
        n_modes: 3,
        nonlinearity: Nonlinearity::SpmXpm,
        time_window: TIME_WINDOW,
        n_interior: 240_000,
    },
    CasePreset {
        name: "case6",
        description: "three-mode SPM + XPM, E = 0.1 nJ, L = 300 m",
        energy: 0.1,
        length: 300.0,
        n_modes: 3,
        nonlinearity: Nonlinearity::SpmXpm,
        time_window: TIME_WINDOW,
        n_interior: 880_000,
    },
    CasePreset {
        name: "desk-single",
        description: "single-mode linear, L = 19 m (about one L_D), 10 ps window; desk-scale PINN target",
        energy: 10.0,
        length: 19.0,
        n_modes: 1,
        nonlinearity: Nonlinearity::Linear,
        time_window: 10.0,
        n_interior: 20_000,
    },
];

pub fn preset(name: &str) -> Option<&'static CasePreset> {
    PRESETS.iter().find(|p| p.name == name)
}
