use crate::error::{Result, VolumeError};
use crate::volume::{check_affine, to_matrix, Affine, Stage, Volume};
use nalgebra::Vector4;

/// Default target grid: the decoding grid's extents at 4 mm isotropic.
pub const DEFAULT_TARGET_DIMS: [usize; 3] = [48, 56, 48];
pub const DEFAULT_VOXEL_MM: f64 = 4.0;

/// Isotropic affine whose grid center maps to the world origin.
pub fn centered_affine(dims: [usize; 3], voxel_mm: f64) -> Affine {
    let mut a = [[0.0; 4]; 4];
    for ax in 0..3 {
        a[ax][ax] = voxel_mm;
        a[ax][3] = -voxel_mm * (dims[ax] as f64 - 1.0) / 2.0;
    }
    a[3][3] = 1.0;
    a
}

const EDGE_TOL: f64 = 1e-6;

fn sample(v: &Volume, p: [f64; 3]) -> f32 {
    let dims = v.dims();
    let mut base = [0usize; 3];
    let mut frac = [0f64; 3];
    for ax in 0..3 {
        let top = (dims[ax] - 1) as f64;
        if p[ax] < -EDGE_TOL || p[ax] > top + EDGE_TOL {
            return 0.0;
        }
        let q = p[ax].clamp(0.0, top);
        let f = q.floor();
        base[ax] = (f as usize).min(dims[ax].saturating_sub(2));
        frac[ax] = q - base[ax] as f64;
    }
    let mut acc = 0.0;
    for corner in 0..8 {
        let mut w = 1.0;
        let mut idx = [0usize; 3];
        for ax in 0..3 {
            let hi = (corner >> ax) & 1 == 1;
            w *= if hi { frac[ax] } else { 1.0 - frac[ax] };
            idx[ax] = base[ax] + hi as usize;
        }
        if w != 0.0 {
            acc += w * v.get(idx[0], idx[1], idx[2]) as f64;
        }
    }
    acc as f32
}

/// Trilinear resampling onto `(target_dims, target_affine)`. Samples falling
/// outside the source grid are 0.
pub fn resample_trilinear(src: &Volume, target_dims: [usize; 3], target_affine: &Affine) -> Result<Volume> {
    src.check_order(Stage::Resampled)?;
    check_affine(target_affine)?;
    let inv = to_matrix(src.affine()).try_inverse().ok_or(VolumeError::SingularAffine)?;
    let map = inv * to_matrix(target_affine);
    let out = Volume::from_fn(target_dims, *target_affine, |i, j, k| {
        let p = map * Vector4::new(i as f64, j as f64, k as f64, 1.0);
        sample(src, [p[0], p[1], p[2]])
    })?;
    let mut provenance = src.provenance().to_vec();
    provenance.push(Stage::Resampled);
    Ok(Volume::from_parts(target_dims, *target_affine, out.into_data(), provenance))
}

/// Maps values linearly so that the minimum over in-mask voxels becomes -1
/// and the maximum becomes 1. Without a mask every voxel counts.
pub fn minmax_normalize(v: &Volume, mask: Option<&Volume>) -> Result<Volume> {
    if let Some(m) = mask {
        if m.dims() != v.dims() {
            return Err(VolumeError::DimMismatch(v.dims(), m.dims()));
        }
    }
    let inside = |n: usize| mask.is_none_or(|m| m.data()[n] > 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (n, &x) in v.data().iter().enumerate() {
        if inside(n) {
            lo = lo.min(x as f64);
            hi = hi.max(x as f64);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(VolumeError::Invalid("no finite in-mask voxels".into()));
    }
    if hi <= lo {
        return Err(VolumeError::DegenerateRange(lo));
    }
    let range = hi - lo;
    let data = v
        .data()
        .iter()
        .map(|&x| (2.0 * ((x as f64 - lo) / range) - 1.0) as f32)
        .collect();
    v.with_data(data, Stage::Normalized)
}

/// Zeroes voxels where `mask <= 0`.
pub fn apply_mask(v: &Volume, mask: &Volume) -> Result<Volume> {
    if mask.dims() != v.dims() {
        return Err(VolumeError::DimMismatch(v.dims(), mask.dims()));
    }
    let data = v
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&x, &m)| if m > 0.0 { x } else { 0.0 })
        .collect();
    v.with_data(data, Stage::Masked)
}

/// Binary ellipsoid filling `fill` (0..=1) of each half-extent, centered on
/// the grid.
pub fn ellipsoid_mask(dims: [usize; 3], affine: Affine, fill: f64) -> Result<Volume> {
    let c = dims.map(|d| (d as f64 - 1.0) / 2.0);
    let r = dims.map(|d| (d as f64 / 2.0 * fill).max(0.5));
    Volume::from_fn(dims, affine, |i, j, k| {
        let q = [i, j, k]
            .iter()
            .enumerate()
            .map(|(ax, &x)| ((x as f64 - c[ax]) / r[ax]).powi(2))
            .sum::<f64>();
        if q <= 1.0 {
            1.0
        } else {
            0.0
        }
    })
}

/// Resample, normalize (statistics over in-mask voxels), then mask.
pub fn preprocess(src: &Volume, target_dims: [usize; 3], target_affine: &Affine, mask: &Volume) -> Result<Volume> {
    let r = resample_trilinear(src, target_dims, target_affine)?;
    let n = minmax_normalize(&r, Some(mask))?;
    apply_mask(&n, mask)
}
