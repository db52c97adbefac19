//! Network checkpoints.
//!
//! Binary parameter file (little endian):
//!
//! | offset | type           | content                                   |
//! |--------|----------------|-------------------------------------------|
//! | 0      | `[u8; 8]`      | magic `MMNLSEN\0`                         |
//! | 8      | `u32`          | format version (1)                        |
//! | 12     | `[u8; 8]`      | spec hash: first 8 bytes of SHA-256 of the spec JSON |
//! | 20     | `u64`          | init seed                                 |
//! | 28     | `u64`          | n_params                                  |
//! | 36     | `f64 × n_params` | flat parameters in layer order          |
//!
//! A JSON sidecar ([`CheckpointMeta`]) carries the spec, seed, iteration,
//! loss and learning rate. Loading checks the binary against the sidecar's
//! spec hash and parameter count.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{NetworkSpec, NetworkState};
use crate::error::{Error, Result};

pub const NET_MAGIC: [u8; 8] = *b"MMNLSEN\0";
pub const NET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: NetworkSpec,
    pub seed: u64,
    pub iteration: usize,
    pub loss: f64,
    pub lr: f64,
    /// Hex form of the spec hash stored in the binary header.
    pub spec_hash: String,
}

pub fn spec_hash(spec: &NetworkSpec) -> [u8; 8] {
    let json = serde_json::to_vec(spec).expect("spec serializes");
    let digest = Sha256::digest(&json);
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_params<W: Write>(mut w: W, state: &NetworkState) -> Result<()> {
    w.write_all(&NET_MAGIC)?;
    w.write_all(&NET_VERSION.to_le_bytes())?;
    w.write_all(&spec_hash(&state.spec))?;
    w.write_all(&state.seed.to_le_bytes())?;
    w.write_all(&(state.params.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * state.params.len());
    for p in &state.params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Read a parameter file for a network of shape `spec`.
pub fn read_params<R: Read>(mut r: R, spec: NetworkSpec) -> Result<NetworkState> {
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    if b8 != NET_MAGIC {
        return Err(Error::Format("not a network checkpoint (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != NET_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    r.read_exact(&mut b8)?;
    if b8 != spec_hash(&spec) {
        return Err(Error::Format(format!(
            "checkpoint spec hash {} does not match expected {}",
            hex(&b8),
            hex(&spec_hash(&spec))
        )));
    }
    r.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    if n != spec.n_params() {
        return Err(Error::LengthMismatch { expected: spec.n_params(), got: n });
    }
    let mut raw = vec![0u8; 8 * n];
    r.read_exact(&mut raw)?;
    let params = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let state = NetworkState { spec, params, seed };
    state.validate()?;
    Ok(state)
}

/// Write `<stem>.bin` and `<stem>.json` next to each other.
pub fn save(stem: &Path, state: &NetworkState, iteration: usize, loss: f64, lr: f64) -> Result<()> {
    let meta = CheckpointMeta {
        spec: state.spec,
        seed: state.seed,
        iteration,
        loss,
        lr,
        spec_hash: hex(&spec_hash(&state.spec)),
    };
    let bin = std::io::BufWriter::new(std::fs::File::create(stem.with_extension("bin"))?);
    write_params(bin, state)?;
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(stem.with_extension("json"), json)?;
    Ok(())
}

pub fn load(stem: &Path) -> Result<(NetworkState, CheckpointMeta)> {
    let json = std::fs::read_to_string(stem.with_extension("json"))?;
    let meta: CheckpointMeta = serde_json::from_str(&json).map_err(|e| Error::Format(e.to_string()))?;
    meta.spec.validate()?;
    let bin = std::io::BufReader::new(std::fs::File::open(stem.with_extension("bin"))?);
    let state = read_params(bin, meta.spec)?;
    if state.seed != meta.seed {
        return Err(Error::Format("checkpoint seed disagrees with its metadata".into()));
    }
    Ok((state, meta))
}
