//! Native `ZSG1` grid files: magic, `n_samples` and `n_traces` as `u32`,
//! `dt` as `f64`, then row-major `f32` amplitudes, all little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gather::Gather;

const MAGIC: &[u8; 4] = b"ZSG1";
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

pub fn encode_grid(g: &Gather) -> Vec<u8> {
    let (ns, nt) = g.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * ns * nt);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(ns as u32).to_le_bytes());
    out.extend_from_slice(&(nt as u32).to_le_bytes());
    out.extend_from_slice(&g.dt.to_le_bytes());
    for v in g.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_grid(bytes: &[u8]) -> Result<Gather> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            detail: "file shorter than the ZSG1 header".into(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            detail: "missing ZSG1 magic".into(),
        });
    }
    let ns = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let nt = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dt = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let expected = HEADER_LEN + 4 * ns * nt;
    if bytes.len() != expected {
        return Err(Error::Parse {
            offset: bytes.len().min(expected) as u64,
            detail: format!(
                "{ns}x{nt} grid needs {expected} bytes, file has {}",
                bytes.len()
            ),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Gather::new(ns, nt, dt, data)
}

pub fn read_grid(path: &Path) -> Result<Gather> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut g = parse_grid(&bytes)?;
    g.meta.line_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(g)
}

pub fn write_grid(g: &Gather, path: &Path) -> Result<()> {
    std::fs::write(path, encode_grid(g)).map_err(|e| Error::io(path, e))
}
