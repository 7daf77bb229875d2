//! `VOLB` raw container: magic, u16 version, 3×u32 dims, 16×f64 affine
//! (row-major), f32 payload; all little-endian.

use crate::error::{Result, VolumeError};
use crate::volume::{Affine, Volume};

pub const VOLB_MAGIC: &[u8; 4] = b"VOLB";
pub const VOLB_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 12 + 128;

pub fn write_volb(v: &Volume) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * v.len());
    out.extend_from_slice(VOLB_MAGIC);
    out.extend_from_slice(&VOLB_VERSION.to_le_bytes());
    for d in v.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for row in v.affine() {
        for x in row {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    for x in v.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn read_volb(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_LEN {
        return Err(VolumeError::Truncated {
            needed: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != VOLB_MAGIC {
        return Err(VolumeError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VOLB_VERSION {
        return Err(VolumeError::Invalid(format!("unsupported VOLB version {version}")));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let dims = [u32_at(6), u32_at(10), u32_at(14)];
    let mut affine: Affine = [[0.0; 4]; 4];
    for (n, x) in affine.iter_mut().flatten().enumerate() {
        let at = 18 + 8 * n;
        *x = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    }
    let n: usize = dims.iter().product();
    let needed = HEADER_LEN + 4 * n;
    if bytes.len() < needed {
        return Err(VolumeError::Truncated {
            needed,
            got: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(VolumeError::Invalid(format!("{} trailing bytes", bytes.len() - needed)));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Volume::new(dims, affine, data)
}
