//! Single-file NIfTI-1 reader (`.nii`, `.nii.gz`).

use crate::error::{Result, VolumeError};
use crate::volume::{Affine, Volume};
use flate2::read::GzDecoder;
use std::io::Read;

pub const HEADER_SIZE: usize = 348;
const MIN_FILE_SIZE: usize = 352;

pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;
pub const DT_FLOAT64: i16 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Nifti1Header {
    pub byte_order: ByteOrder,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub magic: [u8; 4],
}

struct Reader<'a> {
    buf: &'a [u8],
    order: ByteOrder,
}

impl Reader<'_> {
    fn bytes<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut b: [u8; N] = self.buf[at..at + N].try_into().unwrap();
        if self.order == ByteOrder::Big {
            b.reverse();
        }
        b
    }

    fn i16(&self, at: usize) -> i16 {
        i16::from_le_bytes(self.bytes(at))
    }

    fn f32(&self, at: usize) -> f32 {
        f32::from_le_bytes(self.bytes(at))
    }

    fn f64(&self, at: usize) -> f64 {
        f64::from_le_bytes(self.bytes(at))
    }

    fn f32s<const N: usize>(&self, at: usize) -> [f32; N] {
        std::array::from_fn(|i| self.f32(at + 4 * i))
    }
}

/// Inflates gzip input (detected by its `1f 8b` prefix); other input is
/// returned unchanged.
pub fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes).read_to_end(&mut out).map_err(VolumeError::Gzip)?;
        Ok(out.into())
    } else {
        Ok(bytes.into())
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<Nifti1Header> {
    if bytes.len() < HEADER_SIZE {
        return Err(VolumeError::Truncated {
            needed: HEADER_SIZE,
            got: bytes.len(),
        });
    }
    let raw = i32::from_le_bytes(bytes[..4].try_into().unwrap());
    let order = if raw == HEADER_SIZE as i32 {
        ByteOrder::Little
    } else if raw.swap_bytes() == HEADER_SIZE as i32 {
        ByteOrder::Big
    } else {
        return Err(VolumeError::HeaderSize(raw));
    };
    let r = Reader { buf: bytes, order };
    let magic: [u8; 4] = bytes[344..348].try_into().unwrap();
    match &magic {
        b"n+1\0" => {}
        b"ni1\0" => return Err(VolumeError::HeaderPair),
        _ => return Err(VolumeError::BadMagic(magic)),
    }
    Ok(Nifti1Header {
        byte_order: order,
        dim: std::array::from_fn(|i| r.i16(40 + 2 * i)),
        datatype: r.i16(70),
        bitpix: r.i16(72),
        pixdim: r.f32s(76),
        vox_offset: r.f32(108),
        scl_slope: r.f32(112),
        scl_inter: r.f32(116),
        qform_code: r.i16(252),
        sform_code: r.i16(254),
        srow_x: r.f32s(280),
        srow_y: r.f32s(296),
        srow_z: r.f32s(312),
        magic,
    })
}

impl Nifti1Header {
    /// Spatial extents with trailing unit dimensions squeezed away.
    pub fn spatial_dims(&self) -> Result<[usize; 3]> {
        let d = self.dim;
        let ok = match d[0] {
            3 => true,
            4 => d[4] == 1,
            _ => false,
        };
        if !ok || d[1..4].iter().any(|&n| n < 1) {
            return Err(VolumeError::BadDims(d));
        }
        Ok([d[1] as usize, d[2] as usize, d[3] as usize])
    }

    pub fn bytes_per_voxel(&self) -> Result<usize> {
        match self.datatype {
            DT_INT16 => Ok(2),
            DT_FLOAT32 => Ok(4),
            DT_FLOAT64 => Ok(8),
            other => Err(VolumeError::UnsupportedDatatype(other)),
        }
    }

    pub fn sform(&self) -> Result<Affine> {
        if self.sform_code <= 0 {
            return Err(VolumeError::MissingSform);
        }
        let row = |r: [f32; 4]| r.map(f64::from);
        Ok([row(self.srow_x), row(self.srow_y), row(self.srow_z), [0.0, 0.0, 0.0, 1.0]])
    }
}

/// Parses a single-file NIfTI-1 volume. Values are scaled by
/// `scl_slope`/`scl_inter` when the slope is nonzero and stored as f32.
pub fn parse_nifti1(bytes: &[u8]) -> Result<Volume> {
    let bytes = maybe_gunzip(bytes)?;
    let hdr = parse_header(&bytes)?;
    let bpv = hdr.bytes_per_voxel()?;
    let dims = hdr.spatial_dims()?;
    let affine = hdr.sform()?;
    if bytes.len() < MIN_FILE_SIZE {
        return Err(VolumeError::Truncated {
            needed: MIN_FILE_SIZE,
            got: bytes.len(),
        });
    }
    let offset = (hdr.vox_offset.max(MIN_FILE_SIZE as f32)) as usize;
    let n: usize = dims.iter().product();
    let needed = offset + n * bpv;
    if bytes.len() < needed {
        return Err(VolumeError::Truncated {
            needed,
            got: bytes.len(),
        });
    }
    let r = Reader {
        buf: &bytes[offset..needed],
        order: hdr.byte_order,
    };
    let (slope, inter) = if hdr.scl_slope != 0.0 && hdr.scl_slope.is_finite() {
        (hdr.scl_slope as f64, if hdr.scl_inter.is_finite() { hdr.scl_inter as f64 } else { 0.0 })
    } else {
        (1.0, 0.0)
    };
    let [nx, ny, nz] = dims;
    let mut data = vec![0f32; n];
    // File order is i fastest; volume order is k fastest.
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let src = i + nx * (j + ny * k);
                let raw = match hdr.datatype {
                    DT_INT16 => r.i16(src * 2) as f64,
                    DT_FLOAT32 => r.f32(src * 4) as f64,
                    _ => r.f64(src * 8),
                };
                data[(i * ny + j) * nz + k] = (raw * slope + inter) as f32;
            }
        }
    }
    Volume::new(dims, affine, data)
}
