use crate::error::{Result, VolumeError};
use nalgebra::Matrix4;

pub type Affine = [[f64; 4]; 4];

/// Preprocessing steps recorded on a volume, listed in their required order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Resampled,
    Normalized,
    Masked,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Resampled => "resample",
            Stage::Normalized => "normalize",
            Stage::Masked => "mask",
        }
    }
}

/// Dense 3D grid, row-major over `(i, j, k)` (k fastest), with an affine
/// from voxel indices to world millimeters.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    affine: Affine,
    data: Vec<f32>,
    provenance: Vec<Stage>,
}

pub fn identity_affine() -> Affine {
    let mut a = [[0.0; 4]; 4];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    a
}

pub(crate) fn to_matrix(a: &Affine) -> Matrix4<f64> {
    Matrix4::from_fn(|r, c| a[r][c])
}

pub(crate) fn check_affine(a: &Affine) -> Result<()> {
    let m = to_matrix(a);
    let lin = m.fixed_view::<3, 3>(0, 0).into_owned();
    let det = lin.determinant();
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(VolumeError::SingularAffine);
    }
    Ok(())
}

impl Volume {
    pub fn new(dims: [usize; 3], affine: Affine, data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(VolumeError::Invalid(format!("zero extent in {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(VolumeError::Invalid(format!(
                "{} values for dims {dims:?} ({n} expected)",
                data.len()
            )));
        }
        check_affine(&affine)?;
        Ok(Self {
            dims,
            affine,
            data,
            provenance: Vec::new(),
        })
    }

    pub fn filled(dims: [usize; 3], affine: Affine, value: f32) -> Result<Self> {
        Self::new(dims, affine, vec![value; dims.iter().product()])
    }

    pub fn from_fn(dims: [usize; 3], affine: Affine, f: impl Fn(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(dims, affine, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    pub fn provenance(&self) -> &[Stage] {
        &self.provenance
    }

    /// True when the full resample, normalize, mask chain was applied once
    /// each and in that order.
    pub fn is_preprocessed(&self) -> bool {
        self.provenance == [Stage::Resampled, Stage::Normalized, Stage::Masked]
    }

    pub(crate) fn with_data(&self, data: Vec<f32>, stage: Stage) -> Result<Self> {
        self.check_order(stage)?;
        let mut provenance = self.provenance.clone();
        provenance.push(stage);
        Ok(Self {
            dims: self.dims,
            affine: self.affine,
            data,
            provenance,
        })
    }

    pub(crate) fn check_order(&self, stage: Stage) -> Result<()> {
        match self.provenance.iter().find(|&&p| p > stage) {
            Some(prior) => Err(VolumeError::PipelineOrder {
                step: stage.name(),
                prior: prior.name(),
            }),
            None => Ok(()),
        }
    }

    pub(crate) fn from_parts(dims: [usize; 3], affine: Affine, data: Vec<f32>, provenance: Vec<Stage>) -> Self {
        Self {
            dims,
            affine,
            data,
            provenance,
        }
    }
}
