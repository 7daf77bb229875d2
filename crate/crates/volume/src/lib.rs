//! Statistic-map volumes: NIfTI-1 input, a raw `VOLB` container, and the
//! resample → normalize → mask preprocessing chain.

mod error;
mod nifti;
mod preprocess;
mod volb;
mod volume;

pub use error::{Result, VolumeError};
pub use nifti::{maybe_gunzip, parse_header, parse_nifti1, ByteOrder, Nifti1Header, DT_FLOAT32, DT_FLOAT64, DT_INT16, HEADER_SIZE};
pub use preprocess::{
    apply_mask, centered_affine, ellipsoid_mask, minmax_normalize, preprocess, resample_trilinear,
    DEFAULT_TARGET_DIMS, DEFAULT_VOXEL_MM,
};
pub use volb::{read_volb, write_volb, VOLB_MAGIC, VOLB_VERSION};
pub use volume::{identity_affine, Affine, Stage, Volume};

use std::path::Path;

/// Reads a `VOLB` container or a (possibly gzipped) NIfTI-1 file, chosen by
/// content rather than extension.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(VOLB_MAGIC) {
        read_volb(&bytes)
    } else {
        parse_nifti1(&bytes)
    }
}

pub fn save_volb(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_volb(v))?;
    Ok(())
}
