//! Sectioned binary parameter container.
//!
//! ```text
//! magic      b"STCK"
//! version    u16
//! arch_id    u16 length + UTF-8
//! n_meta     u32, then n_meta x (u16 length + key, u32 length + value)
//! n_tensors  u32, then n_tensors x (u16 length + name, u8 ndim,
//!            ndim x u32 extent, numel x f32)
//! ```
//! All integers and floats are little-endian.

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"STCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub arch_id: String,
    pub metadata: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor<f32>>,
}

fn err(msg: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(err(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
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
    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| err("invalid UTF-8 string"))
    }
}

fn put_str16(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len: u16 = s.len().try_into().map_err(|_| err("string too long"))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

impl Checkpoint {
    pub fn new(arch_id: impl Into<String>) -> Self {
        Self {
            arch_id: arch_id.into(),
            ..Default::default()
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str16(&mut out, &self.arch_id)?;
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str16(&mut out, k)?;
            out.extend_from_slice(&(v.len() as u32).to_le_bytes());
            out.extend_from_slice(v.as_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str16(&mut out, name)?;
            let ndim: u8 = t.ndim().try_into().map_err(|_| err("too many dimensions"))?;
            out.push(ndim);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(err("bad magic"));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let n = r.u16()? as usize;
        let arch_id = r.string(n)?;
        let mut metadata = BTreeMap::new();
        for _ in 0..r.u32()? {
            let kl = r.u16()? as usize;
            let k = r.string(kl)?;
            let vl = r.u32()? as usize;
            let v = r.string(vl)?;
            metadata.insert(k, v);
        }
        let mut tensors = BTreeMap::new();
        for _ in 0..r.u32()? {
            let nl = r.u16()? as usize;
            let name = r.string(nl)?;
            let ndim = r.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let numel: usize = shape.iter().product();
            let bytes = r.take(numel * 4)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.insert(name, Tensor::new(shape, data)?);
        }
        if r.pos != buf.len() {
            return Err(err("trailing bytes after last section"));
        }
        Ok(Self {
            arch_id,
            metadata,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
