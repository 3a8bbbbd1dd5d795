//! Sparse occupancy files (`LDOC`).
//!
//! Layout, little-endian: magic `LDOC`, `u32` version 1, grid as 9 `f64`
//! (min xyz, max xyz, voxel size xyz), 3 `u32` dims, `u64` non-empty count,
//! then 10-byte records `u32 linear index, u16 label, f32 weight` in strictly
//! ascending index order. Only non-empty voxels are stored.

use std::fs;
use std::path::Path;

use super::{GridSpec, LdoGrid};
use crate::ingest::IngestError;
use crate::wire::{FormatError, Reader};
use crate::EMPTY;

pub const OCC_MAGIC: [u8; 4] = *b"LDOC";
pub const OCC_VERSION: u32 = 1;
pub const OCC_HEADER_LEN: usize = 4 + 4 + 9 * 8 + 3 * 4 + 8;
pub const OCC_RECORD_LEN: usize = 10;

pub fn encode_occupancy(grid: &LdoGrid) -> Vec<u8> {
    let spec = grid.spec();
    let nnz = grid.occupied_count();
    let mut out = Vec::with_capacity(OCC_HEADER_LEN + nnz * OCC_RECORD_LEN);
    out.extend_from_slice(&OCC_MAGIC);
    out.extend_from_slice(&OCC_VERSION.to_le_bytes());
    for v in spec.min().into_iter().chain(spec.max()).chain(spec.voxel_size()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for d in spec.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(nnz as u64).to_le_bytes());
    for (index, label, weight) in grid.occupied() {
        out.extend_from_slice(&(index as u32).to_le_bytes());
        out.extend_from_slice(&label.to_le_bytes());
        out.extend_from_slice(&weight.to_le_bytes());
    }
    out
}

pub fn decode_occupancy(bytes: &[u8]) -> Result<LdoGrid, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(OCC_MAGIC)?;
    r.version(OCC_VERSION)?;
    let mut f = [0f64; 9];
    for v in f.iter_mut() {
        *v = r.f64()?;
    }
    let dims = [r.u32()?, r.u32()?, r.u32()?];
    let nnz = r.u64()?;
    let spec = GridSpec::new([f[0], f[1], f[2]], [f[3], f[4], f[5]], [f[6], f[7], f[8]])
        .map_err(|e| FormatError::invalid("grid", e.to_string()))?;
    if spec.dims().map(|d| d as u32) != dims {
        return Err(FormatError::invalid(
            "dims",
            format!("stored {dims:?} but grid implies {:?}", spec.dims()),
        ));
    }
    let voxels = spec.voxel_count();
    if nnz > voxels as u64 {
        return Err(FormatError::invalid(
            "nnz",
            format!("{nnz} exceeds {voxels} voxels"),
        ));
    }
    r.expect_records(nnz, OCC_RECORD_LEN)?;

    let mut labels = vec![EMPTY; voxels];
    let mut weights = vec![0f32; voxels];
    let mut prev: Option<u32> = None;
    for i in 0..nnz {
        let index = r.u32()?;
        let label = r.u16()?;
        let weight = r.f32()?;
        if index as usize >= voxels {
            return Err(FormatError::invalid(
                format!("records[{i}].index"),
                format!("{index} out of range for {voxels} voxels"),
            ));
        }
        if prev.is_some_and(|p| index <= p) {
            return Err(FormatError::invalid(
                format!("records[{i}].index"),
                "indices must be strictly ascending",
            ));
        }
        if label == EMPTY {
            return Err(FormatError::invalid(
                format!("records[{i}].label"),
                "EMPTY voxels are not stored",
            ));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(FormatError::invalid(
                format!("records[{i}].weight"),
                format!("{weight} must be finite and > 0"),
            ));
        }
        labels[index as usize] = label;
        weights[index as usize] = weight;
        prev = Some(index);
    }
    r.finish()?;
    Ok(LdoGrid::from_parts(spec, labels, weights).expect("records were validated"))
}

pub fn read_occupancy(path: &Path) -> Result<LdoGrid, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_occupancy(&bytes).map_err(|e| IngestError::from_format(path, e))
}

pub fn write_occupancy(path: &Path, grid: &LdoGrid) -> Result<(), IngestError> {
    fs::write(path, encode_occupancy(grid)).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
