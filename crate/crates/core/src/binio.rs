//! Little-endian byte helpers shared by the dataset and checkpoint formats.

use crate::error::{Result, ScnError};

pub(crate) struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self { buf: Vec::new() }
    }
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    pub fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize, record: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(ScnError::parse(
                record,
                format!("truncated: needed {n} bytes at offset {}, {} left", self.pos, self.buf.len() - self.pos),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self, record: &str) -> Result<u8> {
        Ok(self.take(1, record)?[0])
    }
    pub fn u32(&mut self, record: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, record)?.try_into().unwrap()))
    }
    pub fn u64(&mut self, record: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, record)?.try_into().unwrap()))
    }
    pub fn f64(&mut self, record: &str) -> Result<f64> {
        Ok(f64::from_bits(self.u64(record)?))
    }
    pub fn f64s(&mut self, n: usize, record: &str) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64(record)).collect()
    }
    /// Reads a `u64` count and checks it fits in the remaining bytes when
    /// each item takes at least `min_item_bytes`.
    pub fn count(&mut self, min_item_bytes: usize, record: &str) -> Result<usize> {
        let n = self.u64(record)?;
        let left = (self.buf.len() - self.pos) as u64;
        if min_item_bytes > 0 && n > left / min_item_bytes as u64 {
            return Err(ScnError::parse(record, format!("count {n} exceeds remaining payload")));
        }
        Ok(n as usize)
    }
    pub fn finish(&self, record: &str) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(ScnError::parse(
                record,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}
