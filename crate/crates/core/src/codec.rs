//! Little-endian header + matrix encoding shared by every model file.
//!
//! Layout: 4-byte magic, `u32` version, then whatever `u64` dimensions and
//! `f64` payload the model declares, in order, with no padding and no
//! trailing bytes.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FORMAT_VERSION: u32 = 1;

pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Encoder { buf }
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64s(&mut self, values: &[f64]) -> &mut Self {
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self
    }

    pub fn matrix(&mut self, m: &Matrix) -> &mut Self {
        self.f64s(m.as_slice())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Decoder<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Decoder<'a> {
    /// Checks magic and version.
    pub fn new(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        let mut d = Decoder { bytes, offset: 0 };
        let found = d.take(4, "magic")?;
        if found != magic {
            return Err(d.corrupt_at(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(found),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let version = u32::from_le_bytes(d.take(4, "version")?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(d.corrupt_at(4, format!("unsupported version {version}")));
        }
        Ok(d)
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn corrupt(&self, reason: impl Into<String>) -> Error {
        self.corrupt_at(self.offset, reason)
    }

    fn corrupt_at(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::CorruptModelFile {
            offset,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.offset.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(s)
            }
            None => Err(self.corrupt(format!(
                "truncated while reading {what}: need {n} bytes, {} remain",
                self.bytes.len() - self.offset
            ))),
        }
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// A dimension field, bounded so the payload size cannot overflow.
    pub fn dim(&mut self, what: &str) -> Result<usize> {
        let at = self.offset;
        let v = self.u64(what)?;
        if v == 0 || v > (1 << 24) {
            return Err(self.corrupt_at(at, format!("implausible {what} = {v}")));
        }
        Ok(v as usize)
    }

    pub fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let at = self.offset;
        let len = n
            .checked_mul(8)
            .ok_or_else(|| self.corrupt(format!("{what} size overflows")))?;
        let raw = self.take(len, what)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(self.corrupt_at(at + 8 * i, format!("non-finite value in {what}")));
        }
        Ok(values)
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
        let values = self.f64s(rows * cols, what)?;
        Matrix::from_vec(rows, cols, values)
    }

    pub fn finish(self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(self.corrupt(format!(
                "{} trailing bytes after payload; declared dimensions do not match file size",
                self.bytes.len() - self.offset
            )));
        }
        Ok(())
    }
}
