//! Little-endian cursor shared by the binary decoders.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("unsupported version {found} (expected {expected})")]
    BadVersion { expected: u32, found: u32 },
    #[error("truncated: needed {expected} bytes, have {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("{trailing} unexpected trailing bytes after the last record")]
    TrailingBytes { trailing: u64 },
    #[error("invalid {field}: {detail}")]
    Invalid { field: String, detail: String },
}

impl FormatError {
    pub(crate) fn invalid(field: impl Into<String>, detail: impl Into<String>) -> Self {
        FormatError::Invalid {
            field: field.into(),
            detail: detail.into(),
        }
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated {
                expected: (self.pos as u64).saturating_add(n as u64),
                actual: self.buf.len() as u64,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let found = &self.buf[..self.buf.len().min(4)];
        if found != expected {
            return Err(FormatError::BadMagic {
                expected,
                found: found.to_vec(),
            });
        }
        self.pos += 4;
        Ok(())
    }

    pub fn version(&mut self, expected: u32) -> Result<(), FormatError> {
        let found = self.u32()?;
        if found != expected {
            return Err(FormatError::BadVersion { expected, found });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// Checks that exactly `count` records of `record_len` bytes remain.
    pub fn expect_records(&self, count: u64, record_len: usize) -> Result<(), FormatError> {
        let need = count
            .checked_mul(record_len as u64)
            .and_then(|n| n.checked_add(self.pos as u64))
            .ok_or_else(|| FormatError::invalid("record_count", format!("{count} overflows")))?;
        let have = self.buf.len() as u64;
        if have < need {
            return Err(FormatError::Truncated {
                expected: need,
                actual: have,
            });
        }
        if have > need {
            return Err(FormatError::TrailingBytes {
                trailing: have - need,
            });
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<(), FormatError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes { trailing: n as u64 }),
        }
    }
}
