//! Recomputation of the normalized-coefficient table and the δβ₀ scaling
//! table from the canonical parameter set, cell by cell against the printed
//! values.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::Result;
use crate::fiber::{dispersion_length, nonlinear_length, peak_power};
use crate::presets::{BETA2, DELTA_BETA0, DELTA_BETA1, GAMMA_C, GAMMA_S, T0};
use crate::transforms::{frame_factors, periodic_shift_equivalence, scale_beta0};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tolerance {
    /// |computed − printed| ≤ rel·|printed|.
    Relative { rel: f64 },
    /// Relative, or within half a unit of the printed last digit.
    RelativeOrHalfDigit { rel: f64 },
    Absolute { abs: f64 },
    /// Within `units` of the printed last digit (truncated printing).
    LastDigit { units: f64 },
    /// Absolute after shifting by any of −1, 0, +1 whole periods.
    PeriodSlack { abs: f64, period: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub table: u8,
    pub row: String,
    pub column: &'static str,
    pub computed: f64,
    /// As printed, so the last-digit unit is recoverable.
    pub printed: &'static str,
    pub tolerance: Tolerance,
    /// False for cells reported but excluded from the pass/fail verdict.
    pub gated: bool,
    pub note: &'static str,
}

/// Value of one unit in the last printed digit of `s`.
pub fn last_digit_unit(s: &str) -> f64 {
    let s = s.trim().trim_start_matches(['-', '+']);
    let (mantissa, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().unwrap_or(0)),
        None => (s, 0),
    };
    let decimals = mantissa.split_once('.').map_or(0, |(_, d)| d.len()) as i32;
    10f64.powi(exp - decimals)
}

impl TableCell {
    pub fn printed_value(&self) -> f64 {
        self.printed.parse().expect("printed cells are numeric")
    }

    /// |computed − printed| / |printed|.
    pub fn relative_deviation(&self) -> f64 {
        let p = self.printed_value();
        (self.computed - p).abs() / p.abs()
    }

    pub fn passes(&self) -> bool {
        let p = self.printed_value();
        let diff = (self.computed - p).abs();
        match self.tolerance {
            Tolerance::Relative { rel } => diff <= rel * p.abs(),
            Tolerance::RelativeOrHalfDigit { rel } => diff <= rel * p.abs() || diff <= 0.5 * last_digit_unit(self.printed),
            Tolerance::Absolute { abs } => diff <= abs,
            Tolerance::LastDigit { units } => diff <= units * last_digit_unit(self.printed),
            Tolerance::PeriodSlack { abs, period } => [-1.0, 0.0, 1.0].iter().any(|k| (self.computed + k * period - p).abs() <= abs),
        }
    }
}

struct Table2Row {
    energy: f64,
    length: f64,
    /// Window implied by the row's dispersion and walk-off cells.
    t_max: f64,
    p0: &'static str,
    p0_gated: bool,
    l_d: &'static str,
    l_nl: &'static str,
    k1_db0: &'static str,
    k1_db1_k2: &'static str,
    k1_c_k2: &'static str,
    k1_d: &'static str,
    k1_d_xpm: &'static str,
}

const TABLE2: [Table2Row; 4] = [
    Table2Row { energy: 10.0, length: 5.0, t_max: 100.0, p0: "9393", p0_gated: true, l_d: "18.8", l_nl: "0.09", k1_db0: "-3009", k1_db1_k2: "1.3e-5", k1_c_k2: "-4.8e-6", k1_d: "53.85", k1_d_xpm: "107.7" },
    Table2Row { energy: 0.1, length: 100.0, t_max: 100.0, p0: "93", p0_gated: true, l_d: "18.8", l_nl: "9.28", k1_db0: "-60182", k1_db1_k2: "2.5e-4", k1_c_k2: "-9.6e-5", k1_d: "10.77", k1_d_xpm: "21.54" },
    Table2Row { energy: 1e-3, length: 1000.0, t_max: 300.0, p0: "0.93", p0_gated: true, l_d: "18.8", l_nl: "928", k1_db0: "-601829", k1_db1_k2: "8.4e-4", k1_c_k2: "-1e-4", k1_d: "1.077", k1_d_xpm: "2.154" },
    Table2Row { energy: 1e-6, length: 1000.0, t_max: 300.0, p0: "9.3e-3", p0_gated: false, l_d: "18.8", l_nl: "928475", k1_db0: "-601829", k1_db1_k2: "8.4e-4", k1_c_k2: "-1e-4", k1_d: "1e-3", k1_d_xpm: "2.1e-3" },
];

/// Normalized-coefficient table. δβ₀ and δβ₁ columns use the largest-offset
/// mode, printed as k₁δβ₀ and k₁δβ₁/k₂ (the table's own convention).
pub fn table2() -> Result<Vec<TableCell>> {
    let mode = 2;
    let l_d = dispersion_length(T0, BETA2[0])?;
    let c = -BETA2[0].signum() / 2.0;
    let mut cells = Vec::new();
    for r in &TABLE2 {
        let row = format!("E={} nJ, L={} m", r.energy, r.length);
        let p0 = peak_power(r.energy, T0)?;
        let l_nl = nonlinear_length(GAMMA_S, p0)?;
        let f = frame_factors(r.length, l_d, r.t_max, T0)?;
        let d = l_d / l_nl;
        let cell = |column, computed, printed, tolerance, gated, note| TableCell {
            table: 2,
            row: row.clone(),
            column,
            computed,
            printed,
            tolerance,
            gated,
            note,
        };
        let one = Tolerance::Relative { rel: 0.01 };
        let five = Tolerance::RelativeOrHalfDigit { rel: 0.05 };
        let ten = Tolerance::Relative { rel: 0.10 };
        let p0_note = if r.p0_gated { "" } else { "printed value is 10x the energy-consistent P0 and the row's own L_NL; excluded" };
        cells.extend([
            cell("P0 [W]", p0, r.p0, one, r.p0_gated, p0_note),
            cell("L_D [m]", l_d, r.l_d, one, true, ""),
            cell("L_NL [m]", l_nl, r.l_nl, ten, true, ""),
            cell("k1*db0", f.k1 * DELTA_BETA0[mode], r.k1_db0, one, true, ""),
            cell("k1*db1/k2", f.k1 * DELTA_BETA1[mode] / f.k2, r.k1_db1_k2, five, true, ""),
            cell("k1*c/k2^2", f.k1 * c / (f.k2 * f.k2), r.k1_c_k2, five, true, ""),
            cell("k1*d", f.k1 * d, r.k1_d, ten, true, ""),
            cell("k1*d*gC/gS", f.k1 * d * GAMMA_C / GAMMA_S, r.k1_d_xpm, ten, true, ""),
        ]);
    }
    Ok(cells)
}

/// (p, L, printed scaled δβ₀, printed period count, off by one period).
const TABLE3: [(usize, f64, &str, &str, bool); 4] = [
    (2, 100.0, "-0.09655", "90116", true),
    (2, 5.0, "-1.10186", "4505", false),
    (3, 100.0, "-0.0036", "180292", false),
    (3, 5.0, "-0.7576", "9014", false),
];

/// δβ₀ scaling table; the (p = 2, L = 100) row is printed one period away
/// from the truncation rule and is checked with one-period slack.
pub fn table3() -> Result<Vec<TableCell>> {
    let mut cells = Vec::new();
    for (p, l, scaled, periods, slack) in TABLE3 {
        let s = scale_beta0(DELTA_BETA0[p - 1], l)?;
        let row = format!("p={p}, L={l} m");
        let (tol, per_tol, note) = if slack {
            (
                Tolerance::PeriodSlack { abs: 1e-4, period: 2.0 * PI / l },
                Tolerance::PeriodSlack { abs: 0.0, period: 1.0 },
                "printed one period from trunc(db0*L/2pi); equivalent at z = L",
            )
        } else {
            (Tolerance::Absolute { abs: 1e-4 }, Tolerance::Absolute { abs: 0.0 }, "")
        };
        cells.push(TableCell { table: 3, row: row.clone(), column: "scaled db0 [1/m]", computed: s.scaled, printed: scaled, tolerance: tol, gated: true, note });
        cells.push(TableCell { table: 3, row, column: "periods", computed: s.periods.abs() as f64, printed: periods, tolerance: per_tol, gated: true, note });
    }
    Ok(cells)
}

/// Scaled δβ₀ to eight digits as listed with the case parameters; the
/// (p = 2, L = 100) entry corresponds to one period fewer.
pub fn scaled_parameter_cells() -> Result<Vec<TableCell>> {
    let rows: [(usize, f64, &str, i64); 4] = [(2, 100.0, "-0.09655858", -1), (3, 100.0, "-0.00364598", 0), (2, 5.0, "-1.10186823", 0), (3, 5.0, "-0.75762821", 0)];
    rows.iter()
        .map(|&(p, l, printed, shift)| {
            let s = scale_beta0(DELTA_BETA0[p - 1], l)?;
            Ok(TableCell {
                table: 4,
                row: format!("p={p}, L={l} m"),
                column: "scaled db0 [1/m]",
                computed: periodic_shift_equivalence(DELTA_BETA0[p - 1], l, s.periods + shift),
                printed,
                tolerance: Tolerance::LastDigit { units: 1.0 },
                gated: true,
                note: if shift != 0 { "one period below the truncation rule" } else { "" },
            })
        })
        .collect()
}

/// Every reproduced cell.
pub fn reproduce_tables() -> Result<Vec<TableCell>> {
    let mut v = table2()?;
    v.extend(table3()?);
    v.extend(scaled_parameter_cells()?);
    Ok(v)
}

/// Gated cells outside their tolerance.
pub fn failures(cells: &[TableCell]) -> Vec<&TableCell> {
    cells.iter().filter(|c| c.gated && !c.passes()).collect()
}
