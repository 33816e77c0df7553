//! File formats and the array preparation steps around training.

mod grid;
mod prep;
mod segy;
mod tiles;

use std::path::Path;

use crate::error::Result;
use crate::gather::Gather;

pub use grid::{encode_grid, parse_grid, read_grid, write_grid};
pub use prep::{crop, denormalize, normalize, normalize_with_mask, pad_to_multiple, Padding};
pub use segy::{
    encode_segy, f32_to_ibm, ibm_to_f32, parse_segy, read_segy, write_segy, SampleFormat,
};
pub use tiles::{plan_tiles, stitch, TilePlan, TileRect};

/// Read a gather, choosing the format from the extension (`.sgy`/`.segy`
/// for SEG-Y, anything else ZSG1).
pub fn read_gather(path: &Path) -> Result<Gather> {
    if is_segy(path) {
        read_segy(path)
    } else {
        read_grid(path)
    }
}

/// Write a gather; SEG-Y output uses IEEE samples.
pub fn write_gather(g: &Gather, path: &Path) -> Result<()> {
    if is_segy(path) {
        write_segy(g, path, SampleFormat::Ieee32)
    } else {
        write_grid(g, path)
    }
}

fn is_segy(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("sgy" | "segy")
    )
}
