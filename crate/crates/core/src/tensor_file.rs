//! Named tensor bundles (`LDOT`) for forward-pass parameters.
//!
//! Layout, little-endian: magic `LDOT`, `u32` version 1, `u32` tensor count,
//! then per tensor `u32` name length, UTF-8 name, `u8` rank, rank × `u32`
//! dims, and the `f32` payload in row-major order.

use crate::feature::{FeatureError, FeatureGrid};
use crate::wire::{FormatError, Reader};

pub const TENSOR_MAGIC: [u8; 4] = *b"LDOT";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorBundle {
    tensors: Vec<(String, FeatureGrid)>,
}

impl TensorBundle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces `name`, keeping first-insertion order.
    pub fn insert(&mut self, name: impl Into<String>, tensor: FeatureGrid) {
        let name = name.into();
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.tensors.push((name, tensor)),
        }
    }

    pub fn get(&self, name: &str) -> Result<&FeatureGrid, FeatureError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| FeatureError::MissingTensor(name.to_string()))
    }

    /// A rank-1 tensor as a plain vector.
    pub fn vector(&self, name: &str) -> Result<Vec<f32>, FeatureError> {
        let t = self.get(name)?;
        t.expect_rank(name, 1)?;
        Ok(t.data().to_vec())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

pub fn encode_tensors(bundle: &TensorBundle) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(bundle.tensors.len() as u32).to_le_bytes());
    for (name, t) in &bundle.tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_tensors(bytes: &[u8]) -> Result<TensorBundle, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(TENSOR_MAGIC)?;
    r.version(TENSOR_VERSION)?;
    let count = r.u32()?;
    let mut bundle = TensorBundle::new();
    for i in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| FormatError::invalid(format!("tensors[{i}].name"), e.to_string()))?
            .to_string();
        if bundle.get(&name).is_ok() {
            return Err(FormatError::invalid(
                format!("tensors[{i}].name"),
                format!("duplicate tensor {name:?}"),
            ));
        }
        let rank = r.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
            .ok_or_else(|| {
                FormatError::invalid(
                    format!("tensors[{i}].dims"),
                    format!("{dims:?} exceeds the remaining {} bytes", r.remaining()),
                )
            })?;
        let payload = r.take(len * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = FeatureGrid::new(dims, data)
            .map_err(|e| FormatError::invalid(format!("tensors[{i}]"), e.to_string()))?;
        bundle.insert(name, tensor);
    }
    r.finish()?;
    Ok(bundle)
}
