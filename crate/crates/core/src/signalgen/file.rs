//! `GSNP` snapshot files and their JSON sidecars.
//!
//! Layout: magic `GSNP`, version `u16`, then 1024 x 34 little-endian `f32`
//! row-major by channel. The sidecar next to it (same stem, `.json`) holds
//! the id and the [`JammerSpec`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{JammerSpec, Snapshot, CELLS};
use crate::error::io_at;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"GSNP";
pub const SNAPSHOT_FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 6;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    id: u64,
    spec: Option<JammerSpec>,
}

pub fn snapshot_to_bytes(snap: &Snapshot) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + CELLS * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SNAPSHOT_FORMAT_VERSION.to_le_bytes());
    for &value in snap.data() {
        out.extend_from_slice(&(value as f32).to_le_bytes());
    }
    out
}

/// Decodes the binary payload. The result carries no metadata.
pub fn snapshot_from_bytes(id: u64, bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated snapshot header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected GSNP"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SNAPSHOT_FORMAT_VERSION {
        return Err(Error::format(4, format!("unsupported snapshot version {version}")));
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != CELLS * 4 {
        return Err(Error::format(
            bytes.len() as u64,
            format!("expected {} payload bytes, found {}", CELLS * 4, payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    Snapshot::new(id, data, None)
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    fs::write(path, snapshot_to_bytes(snap)).map_err(io_at(path))?;
    let sidecar = Sidecar {
        id: snap.id,
        spec: snap.meta,
    };
    let sidecar_path = path.with_extension("json");
    fs::write(&sidecar_path, serde_json::to_vec_pretty(&sidecar)?).map_err(io_at(&sidecar_path))?;
    Ok(())
}

/// Reads a snapshot and, when present, its sidecar. Without a sidecar the id
/// is parsed from the file stem (0 if it is not numeric).
pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    let sidecar_path = path.with_extension("json");
    let (id, meta) = match fs::read(&sidecar_path) {
        Ok(raw) => {
            let sidecar: Sidecar = serde_json::from_slice(&raw)?;
            (sidecar.id, sidecar.spec)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            (id, None)
        }
        Err(e) => return Err(io_at(&sidecar_path)(e)),
    };
    let snap = snapshot_from_bytes(id, &bytes)?;
    Snapshot::new(snap.id, snap.data().to_vec(), meta)
}
