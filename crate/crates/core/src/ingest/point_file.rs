//! Packed binary point payloads (`LDOP`).
//!
//! Layout, little-endian: magic `LDOP`, `u32` version 1, `u64` record count,
//! then 18-byte records `f32 x, f32 y, f32 z, f32 intensity, u16 label`.

use crate::wire::{FormatError, Reader};

pub const POINT_MAGIC: [u8; 4] = *b"LDOP";
pub const POINT_VERSION: u32 = 1;
pub const POINT_HEADER_LEN: usize = 16;
pub const POINT_RECORD_LEN: usize = 18;

/// Label carried by points that have no semantic annotation.
pub const UNLABELED: u16 = 0xFFFF;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
    pub label: u16,
}

impl RawPoint {
    pub fn new(xyz: [f32; 3], intensity: f32, label: u16) -> Self {
        Self {
            x: xyz[0],
            y: xyz[1],
            z: xyz[2],
            intensity,
            label,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

pub fn encode_points(points: &[RawPoint]) -> Vec<u8> {
    let mut out = Vec::with_capacity(POINT_HEADER_LEN + points.len() * POINT_RECORD_LEN);
    out.extend_from_slice(&POINT_MAGIC);
    out.extend_from_slice(&POINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for p in points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&p.label.to_le_bytes());
    }
    out
}

/// Decodes a point payload. Non-finite coordinates or intensities are rejected;
/// label ranges depend on the scene's class count and are checked by the caller.
pub fn decode_points(bytes: &[u8]) -> Result<Vec<RawPoint>, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(POINT_MAGIC)?;
    r.version(POINT_VERSION)?;
    let count = r.u64()?;
    r.expect_records(count, POINT_RECORD_LEN)?;
    let mut points = Vec::with_capacity(count as usize);
    for i in 0..count {
        let p = RawPoint {
            x: r.f32()?,
            y: r.f32()?,
            z: r.f32()?,
            intensity: r.f32()?,
            label: r.u16()?,
        };
        if !p.is_finite() {
            return Err(FormatError::invalid(
                format!("points[{i}]"),
                "non-finite coordinate or intensity",
            ));
        }
        points.push(p);
    }
    Ok(points)
}
