use crate::error::{CurationError, Result};
use crate::record::MapRecord;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKey {
    Contrast,
    Task,
    OneContrastTask,
    Concept,
}

impl LabelKey {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "contrast" => Some(Self::Contrast),
            "task" => Some(Self::Task),
            "one_contrast_task" => Some(Self::OneContrastTask),
            "concept" => Some(Self::Concept),
            _ => None,
        }
    }
}

/// One manifest line; `label` is the class string under the manifest's
/// label key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image_id: String,
    pub subject_id: Option<String>,
    pub study_id: Option<String>,
    pub label: Option<String>,
    pub file_path: Option<String>,
}

impl ManifestRow {
    pub fn unlabeled(r: &MapRecord) -> Self {
        Self {
            image_id: r.image_id.clone(),
            subject_id: r.subject_id.clone(),
            study_id: r.study_id.clone(),
            label: None,
            file_path: r.file_path.clone(),
        }
    }

    pub fn labeled(r: &MapRecord, label: impl Into<String>) -> Self {
        Self {
            label: Some(label.into()),
            ..Self::unlabeled(r)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Sidecar {
    label_key: Option<LabelKey>,
    class_vocabulary: Vec<String>,
    provenance: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    /// `None` for unlabeled pre-training manifests.
    pub label_key: Option<LabelKey>,
    pub class_vocabulary: Vec<String>,
    pub provenance: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn new(label_key: Option<LabelKey>, class_vocabulary: Vec<String>, rows: Vec<ManifestRow>) -> Self {
        Self {
            rows,
            label_key,
            class_vocabulary,
            provenance: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_vocabulary.len()
    }

    /// Class index of each row.
    pub fn label_indices(&self) -> Result<Vec<usize>> {
        let index: BTreeMap<&str, usize> = self
            .class_vocabulary
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        self.rows
            .iter()
            .map(|r| {
                let l = r
                    .label
                    .as_deref()
                    .ok_or_else(|| CurationError::Manifest(format!("row {} has no label", r.image_id)))?;
                index
                    .get(l)
                    .copied()
                    .ok_or_else(|| CurationError::Manifest(format!("label `{l}` not in vocabulary")))
            })
            .collect()
    }

    /// Checks id uniqueness, vocabulary membership and, for labeled
    /// manifests, presence of subject and study ids.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.rows {
            if !seen.insert(r.image_id.as_str()) {
                return Err(CurationError::Manifest(format!("duplicate image id {}", r.image_id)));
            }
            if self.label_key.is_some() {
                if r.subject_id.is_none() || r.study_id.is_none() {
                    return Err(CurationError::Manifest(format!(
                        "row {} lacks subject or study id",
                        r.image_id
                    )));
                }
            }
        }
        if self.label_key.is_some() {
            self.label_indices()?;
        }
        Ok(())
    }

    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        let mut s = csv_path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes `path` (CSV) and `path.json` (vocabulary and provenance).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["image_id", "subject_id", "study_id", "label", "file_path"])?;
        for r in &self.rows {
            let o = |v: &Option<String>| v.clone().unwrap_or_default();
            w.write_record([
                r.image_id.clone(),
                o(&r.subject_id),
                o(&r.study_id),
                o(&r.label),
                o(&r.file_path),
            ])?;
        }
        w.flush()?;
        let side = Sidecar {
            label_key: self.label_key,
            class_vocabulary: self.class_vocabulary.clone(),
            provenance: self.provenance.clone(),
        };
        std::fs::write(Self::sidecar_path(path), serde_json::to_vec_pretty(&side)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side: Sidecar = serde_json::from_slice(&std::fs::read(Self::sidecar_path(path))?)?;
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["image_id", "subject_id", "study_id", "label", "file_path"] {
            return Err(CurationError::Manifest(format!("unexpected header {headers:?}")));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let o = |i: usize| Some(rec[i].to_string()).filter(|s| !s.is_empty());
            rows.push(ManifestRow {
                image_id: rec[0].to_string(),
                subject_id: o(1),
                study_id: o(2),
                label: o(3),
                file_path: o(4),
            });
        }
        let m = Self {
            rows,
            label_key: side.label_key,
            class_vocabulary: side.class_vocabulary,
            provenance: side.provenance,
        };
        m.validate()?;
        Ok(m)
    }
}
