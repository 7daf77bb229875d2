use crate::error::{Result, TrainError};
use selftaught_core::Tensor;
use selftaught_curation::DatasetManifest;
use std::path::Path;

/// Equally-sized volumes held contiguously, with optional class labels and
/// a shared evaluation mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MapSet {
    dims: [usize; 3],
    ids: Vec<String>,
    data: Vec<f32>,
    labels: Option<Vec<usize>>,
    n_classes: usize,
    mask: Option<Vec<f32>>,
}

impl MapSet {
    pub fn new(dims: [usize; 3], ids: Vec<String>, data: Vec<f32>) -> Result<Self> {
        let voxels = dims.iter().product::<usize>();
        if voxels == 0 || data.len() != ids.len() * voxels {
            return Err(TrainError::Config(format!(
                "{} values do not hold {} maps of {dims:?}",
                data.len(),
                ids.len()
            )));
        }
        Ok(Self {
            dims,
            ids,
            data,
            labels: None,
            n_classes: 0,
            mask: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(TrainError::Config(format!("{} labels for {} maps", labels.len(), self.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(TrainError::Config(format!("label {bad} out of range for {n_classes} classes")));
        }
        self.labels = Some(labels);
        self.n_classes = n_classes;
        Ok(self)
    }

    pub fn with_mask(mut self, mask: Vec<f32>) -> Result<Self> {
        if mask.len() != self.voxels() {
            return Err(TrainError::Config(format!("mask has {} voxels, maps have {}", mask.len(), self.voxels())));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    /// Loads every manifest row's `file_path` (relative paths resolve
    /// against `base`). Labels are attached when the manifest has them.
    pub fn from_manifest(manifest: &DatasetManifest, base: &Path, dims: [usize; 3]) -> Result<Self> {
        let mut ids = Vec::with_capacity(manifest.len());
        let mut data = Vec::new();
        for row in &manifest.rows {
            let rel = row
                .file_path
                .as_ref()
                .ok_or_else(|| TrainError::Config(format!("row {} has no file_path", row.image_id)))?;
            let vol = selftaught_volume::load_volume(base.join(rel))?;
            if vol.dims() != dims {
                return Err(TrainError::Dims {
                    id: row.image_id.clone(),
                    expected: dims,
                    found: vol.dims(),
                });
            }
            ids.push(row.image_id.clone());
            data.extend_from_slice(vol.data());
        }
        let set = Self::new(dims, ids, data)?;
        if manifest.label_key.is_some() {
            set.with_labels(manifest.label_indices()?, manifest.n_classes())
        } else {
            Ok(set)
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn map(&self, i: usize) -> &[f32] {
        &self.data[i * self.voxels()..(i + 1) * self.voxels()]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn mask(&self) -> Option<&[f32]> {
        self.mask.as_deref()
    }

    /// Maps at `idx`, in that order, keeping labels and mask.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.voxels());
        for &i in idx {
            data.extend_from_slice(self.map(i));
        }
        Self {
            dims: self.dims,
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            data,
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            n_classes: self.n_classes,
            mask: self.mask.clone(),
        }
    }

    /// `(N, 1, D, H, W)` batch of the maps at `idx`.
    pub fn batch(&self, idx: &[usize]) -> Tensor<f32> {
        let mut data = Vec::with_capacity(idx.len() * self.voxels());
        for &i in idx {
            data.extend_from_slice(self.map(i));
        }
        let [d, h, w] = self.dims;
        Tensor::new(vec![idx.len(), 1, d, h, w], data).expect("batch length matches shape")
    }

    pub fn batch_labels(&self, idx: &[usize]) -> Result<Vec<usize>> {
        let l = self.labels.as_ref().ok_or(TrainError::Unlabeled)?;
        Ok(idx.iter().map(|&i| l[i]).collect())
    }
}
