//! Versioned little-endian binary container shared by the model formats.
//!
//! Layout: an 8-byte magic, a u32 format version, then a sequence of
//! records written with the helpers below. Strings are a u32 byte length
//! followed by UTF-8; tensors are a name, a u32 rank, u64 dimensions and the
//! f64 values in row-major order.

use std::io::{Read, Write};

use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub fn new(mut inner: W, magic: &[u8; 8]) -> Result<Self> {
        inner.write_all(magic)?;
        inner.write_all(&FORMAT_VERSION.to_le_bytes())?;
        Ok(Writer { inner })
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.inner.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn strings(&mut self, items: &[String]) -> Result<()> {
        self.u64(items.len() as u64)?;
        items.iter().try_for_each(|s| self.str(s))
    }

    pub fn tensor(&mut self, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.str(name)?;
        self.u32(shape.len() as u32)?;
        for &d in shape {
            self.u64(d as u64)?;
        }
        for x in data {
            self.inner.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    /// Checks magic and version.
    pub fn new(mut inner: R, magic: &[u8; 8]) -> Result<Self> {
        let mut m = [0u8; 8];
        inner
            .read_exact(&mut m)
            .map_err(|_| Error::Format("file too short".into()))?;
        if &m != magic {
            return Err(Error::Format(format!(
                "bad magic: expected {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let mut r = Reader { inner };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        Ok(r)
    }

    pub fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::Format("truncated file".into()))?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::Format("truncated file".into()))?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Format("truncated file".into()))?;
        String::from_utf8(buf).map_err(|_| Error::Format("string is not UTF-8".into()))
    }

    pub fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.u64()?;
        (0..n).map(|_| self.str()).collect()
    }

    /// Reads a tensor and checks its name and shape.
    pub fn tensor(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let found = self.str()?;
        if found != name {
            return Err(Error::Format(format!(
                "expected tensor `{name}`, found `{found}`"
            )));
        }
        let rank = self.u32()? as usize;
        let dims: Vec<usize> = (0..rank)
            .map(|_| self.u64().map(|d| d as usize))
            .collect::<Result<_>>()?;
        if dims != shape {
            return Err(Error::Format(format!(
                "tensor `{name}` has shape {dims:?}, expected {shape:?}"
            )));
        }
        let mut data = vec![0.0; shape.iter().product()];
        let mut b = [0u8; 8];
        for x in data.iter_mut() {
            self.inner
                .read_exact(&mut b)
                .map_err(|_| Error::Format("truncated file".into()))?;
            *x = f64::from_le_bytes(b);
        }
        Ok(data)
    }
}
