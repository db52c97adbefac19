//! On-disk layouts for field histories.
//!
//! CSV: header `z,T,mode,re,im`, one row per (mode, z, T) sample, modes
//! 1-based, rows ordered mode-major then z then T.
//!
//! Binary (little endian):
//!
//! | offset | type        | content                               |
//! |--------|-------------|---------------------------------------|
//! | 0      | `[u8; 8]`   | magic `MMNLSEF\0`                     |
//! | 8      | `u32`       | format version (1)                    |
//! | 12     | `u32`       | n_modes                               |
//! | 16     | `u32`       | n_z                                   |
//! | 20     | `u32`       | n_t                                   |
//! | 24     | `f64`       | T_max (ps)                            |
//! | 32     | `f64 × n_z` | z checkpoints (m)                     |
//! | …      | `f64 × 2·n_modes·n_z·n_t` | (re, im) row-major over (mode, z, T) |

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::TimeGrid;
use crate::ssf::ComplexFieldGrid;

pub const FIELD_MAGIC: [u8; 8] = *b"MMNLSEF\0";
pub const FIELD_VERSION: u32 = 1;

pub fn write_field_binary<W: Write>(mut w: W, f: &ComplexFieldGrid) -> Result<()> {
    w.write_all(&FIELD_MAGIC)?;
    for v in [FIELD_VERSION, f.n_modes() as u32, f.n_z() as u32, f.n_t() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&f.grid.t_max.to_le_bytes())?;
    for z in &f.z {
        w.write_all(&z.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(16 * f.n_t());
    for mode in &f.data {
        for chunk in mode.chunks(f.n_t()) {
            buf.clear();
            for a in chunk {
                buf.extend_from_slice(&a.re.to_le_bytes());
                buf.extend_from_slice(&a.im.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

pub fn read_field_binary<R: Read>(mut r: R) -> Result<ComplexFieldGrid> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != FIELD_MAGIC {
        return Err(Error::Format("not a field history file (bad magic)".into()));
    }
    let mut u = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut u)?;
        Ok(u32::from_le_bytes(u))
    };
    let version = read_u32(&mut r)?;
    if version != FIELD_VERSION {
        return Err(Error::Format(format!("unsupported field format version {version}")));
    }
    let n_modes = read_u32(&mut r)? as usize;
    let n_z = read_u32(&mut r)? as usize;
    let n_t = read_u32(&mut r)? as usize;
    let mut f8 = [0u8; 8];
    let mut read_f64 = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut f8)?;
        Ok(f64::from_le_bytes(f8))
    };
    let t_max = read_f64(&mut r)?;
    let grid = TimeGrid::new(n_t, t_max)?;
    let z = (0..n_z).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(n_modes);
    for _ in 0..n_modes {
        let mut mode = Vec::with_capacity(n_z * n_t);
        for _ in 0..n_z * n_t {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            mode.push(Complex64::new(re, im));
        }
        data.push(mode);
    }
    ComplexFieldGrid::new(grid, z, data)
}

pub fn write_field_csv<W: Write>(w: W, f: &ComplexFieldGrid) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let fmt = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(["z", "T", "mode", "re", "im"]).map_err(fmt)?;
    let times = f.grid.times();
    for p in 0..f.n_modes() {
        for (iz, z) in f.z.iter().enumerate() {
            for (a, t) in f.slice(p, iz).iter().zip(&times) {
                out.write_record(&[
                    z.to_string(),
                    t.to_string(),
                    (p + 1).to_string(),
                    a.re.to_string(),
                    a.im.to_string(),
                ])
                .map_err(fmt)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Parse a CSV written by [`write_field_csv`]. The time grid is rebuilt from
/// the first two distinct T values.
pub fn read_field_csv<R: Read>(r: R) -> Result<ComplexFieldGrid> {
    let mut rdr = csv::Reader::from_reader(r);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    let header = rdr.headers().map_err(fmt)?.clone();
    if header.iter().collect::<Vec<_>>() != ["z", "T", "mode", "re", "im"] {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    let mut rows: Vec<(f64, f64, usize, f64, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(fmt)?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| Error::Format(format!("column {i}: {e}")))
        };
        let mode: usize = rec[2].parse().map_err(|e| Error::Format(format!("mode: {e}")))?;
        rows.push((num(0)?, num(1)?, mode, num(3)?, num(4)?));
    }
    let n_modes = rows.iter().map(|r| r.2).max().unwrap_or(0);
    let mut z: Vec<f64> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for r in rows.iter().filter(|r| r.2 == 1) {
        if z.last() != Some(&r.0) {
            z.push(r.0);
        }
        if z.len() == 1 {
            times.push(r.1);
        }
    }
    let n_t = times.len();
    if n_t < 2 {
        return Err(Error::Format("CSV holds fewer than two time samples".into()));
    }
    let t_max = (times[1] - times[0]) * n_t as f64;
    let grid = TimeGrid::new(n_t, t_max)?;
    if rows.len() != n_modes * z.len() * n_t {
        return Err(Error::Format(format!(
            "expected {} rows for {n_modes} modes x {} z x {n_t} T, found {}",
            n_modes * z.len() * n_t,
            z.len(),
            rows.len()
        )));
    }
    let mut data = vec![Vec::with_capacity(z.len() * n_t); n_modes];
    for r in &rows {
        data[r.2 - 1].push(Complex64::new(r.3, r.4));
    }
    ComplexFieldGrid::new(grid, z, data)
}

pub fn save_field(path: &Path, f: &ComplexFieldGrid) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => write_field_csv(file, f),
        _ => write_field_binary(file, f),
    }
}

pub fn load_field(path: &Path) -> Result<ComplexFieldGrid> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_field_csv(file),
        _ => read_field_binary(file),
    }
}
