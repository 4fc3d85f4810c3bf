//! Binary checkpoint container.
//!
//! ```text
//! magic   8 bytes  "RDGCKPT\0"
//! version u32 LE
//! count   u32 LE
//! count x entry:
//!     name_len u16 LE, name (UTF-8)
//!     dtype    u8   (1 = f32, 2 = f64, 3 = raw bytes, 4 = u64)
//!     ndim     u8,  dims u64 LE x ndim
//!     data     product(dims) elements, little-endian
//! crc32   u32 LE over every preceding byte
//! ```

use std::path::Path;

use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RDGCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum EntryData {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
    Bytes(Vec<u8>),
    U64(Vec<u64>),
}

impl EntryData {
    fn dtype(&self) -> u8 {
        match self {
            EntryData::F32(_) => 1,
            EntryData::F64(_) => 2,
            EntryData::Bytes(_) => 3,
            EntryData::U64(_) => 4,
        }
    }
}

/// Ordered named entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    entries: Vec<(String, EntryData)>,
}

impl Container {
    pub fn new() -> Self {
        Container::default()
    }

    pub fn entries(&self) -> &[(String, EntryData)] {
        &self.entries
    }

    /// Inserts or replaces.
    pub fn put(&mut self, name: impl Into<String>, data: EntryData) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = data,
            None => self.entries.push((name, data)),
        }
    }

    pub fn put_tensor<T: Scalar>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        let data = if T::DTYPE == 1 {
            EntryData::F32(t.cast())
        } else {
            EntryData::F64(t.cast())
        };
        self.put(name, data);
    }

    pub fn put_str(&mut self, name: impl Into<String>, s: &str) {
        self.put(name, EntryData::Bytes(s.as_bytes().to_vec()));
    }

    pub fn put_u64s(&mut self, name: impl Into<String>, v: &[u64]) {
        self.put(name, EntryData::U64(v.to_vec()));
    }

    pub fn get(&self, name: &str) -> Result<&EntryData> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d)
            .ok_or_else(|| Error::Format(format!("missing entry '{name}'")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| n == name)
    }

    /// Tensor entry converted to `T`; stored precision must match exactly.
    pub fn tensor<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        match (self.get(name)?, T::DTYPE) {
            (EntryData::F32(t), 1) => Ok(t.cast()),
            (EntryData::F64(t), 2) => Ok(t.cast()),
            (EntryData::F32(_) | EntryData::F64(_), _) => {
                Err(Error::Format(format!("entry '{name}' has a different float precision")))
            }
            _ => Err(Error::Format(format!("entry '{name}' is not a tensor"))),
        }
    }

    pub fn str(&self, name: &str) -> Result<String> {
        match self.get(name)? {
            EntryData::Bytes(b) => String::from_utf8(b.clone())
                .map_err(|_| Error::Format(format!("entry '{name}' is not UTF-8"))),
            _ => Err(Error::Format(format!("entry '{name}' is not text"))),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64]> {
        match self.get(name)? {
            EntryData::U64(v) => Ok(v),
            _ => Err(Error::Format(format!("entry '{name}' is not u64"))),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, data) in &self.entries {
            let nb = name.as_bytes();
            if nb.len() > u16::MAX as usize {
                return Err(Error::Format(format!("entry name too long: {name}")));
            }
            out.extend_from_slice(&(nb.len() as u16).to_le_bytes());
            out.extend_from_slice(nb);
            out.push(data.dtype());
            let dims: Vec<usize> = match data {
                EntryData::F32(t) => t.shape().to_vec(),
                EntryData::F64(t) => t.shape().to_vec(),
                EntryData::Bytes(b) => vec![b.len()],
                EntryData::U64(v) => vec![v.len()],
            };
            if dims.len() > u8::MAX as usize {
                return Err(Error::Format(format!("too many dimensions in {name}")));
            }
            out.push(dims.len() as u8);
            for d in dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match data {
                EntryData::F32(t) => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                EntryData::F64(t) => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                EntryData::Bytes(b) => out.extend_from_slice(b),
                EntryData::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 12 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Format("CRC mismatch (file truncated or corrupted)".into()));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut c = Container::new();
        for _ in 0..count {
            let nlen = r.u16()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec())
                .map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
            let dtype = r.u8()?;
            let ndim = r.u8()? as usize;
            let dims = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("{name}: dimension overflow")))?;
            let data = match dtype {
                1 => {
                    let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?;
                    let v = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
                    EntryData::F32(Tensor::new(dims, v)?)
                }
                2 => {
                    let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
                    let v = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
                    EntryData::F64(Tensor::new(dims, v)?)
                }
                3 => EntryData::Bytes(r.take(n)?.to_vec()),
                4 => {
                    let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
                    EntryData::U64(raw.chunks_exact(8).map(|b| u64::from_le_bytes(b.try_into().unwrap())).collect())
                }
                d => return Err(Error::Format(format!("{name}: unknown dtype {d}"))),
            };
            c.entries.push((name, data));
        }
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes after last entry".into()));
        }
        Ok(c)
    }

    /// Writes atomically via a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFiles(vec![path.to_path_buf()])
            } else {
                Error::io(path, e)
            }
        })?;
        Container::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(e) => {
                let s = &self.buf[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::Format("unexpected end of data".into())),
        }
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
