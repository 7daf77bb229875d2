use crate::error::{Result, SplitError};
use selftaught_curation::{DatasetManifest, ManifestRow};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Half {
    Validation,
    Test,
}

impl Half {
    pub const BOTH: [Half; 2] = [Half::Validation, Half::Test];
}

/// How manifest rows map to plan keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectKeying {
    /// `subject_id`.
    Subject,
    /// `study_id/subject_id`, for corpora where subject ids repeat across studies.
    StudySubject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub half: Half,
    pub fold: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent_operation: String,
    pub parent_seed: u64,
    pub parent_subjects: usize,
}

/// Reproducible subject → (half, fold) assignment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub operation: String,
    pub seed: u64,
    pub k: usize,
    pub keying: SubjectKeying,
    pub lineage: Option<Lineage>,
    pub assignments: BTreeMap<String, Assignment>,
}

pub fn subject_key(row: &ManifestRow, keying: SubjectKeying) -> Result<String> {
    let subject = row
        .subject_id
        .as_deref()
        .ok_or_else(|| SplitError::MissingSubject(row.image_id.clone()))?;
    Ok(match keying {
        SubjectKeying::Subject => subject.to_string(),
        SubjectKeying::StudySubject => {
            let study = row
                .study_id
                .as_deref()
                .ok_or_else(|| SplitError::MissingStudy(row.image_id.clone()))?;
            format!("{study}/{subject}")
        }
    })
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<Assignment> {
        self.assignments.get(key).copied()
    }

    pub fn subjects(&self, half: Half) -> BTreeSet<String> {
        self.assignments
            .iter()
            .filter(|(_, a)| a.half == half)
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn fold(&self, half: Half, fold: usize) -> BTreeSet<String> {
        self.assignments
            .iter()
            .filter(|(_, a)| a.half == half && a.fold == fold)
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn fold_sizes(&self, half: Half) -> Vec<usize> {
        (0..self.k).map(|f| self.fold(half, f).len()).collect()
    }

    /// Indices of manifest rows whose subject is in `half` and one of `folds`.
    pub fn rows(&self, manifest: &DatasetManifest, half: Half, folds: &[usize]) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (i, r) in manifest.rows.iter().enumerate() {
            let key = subject_key(r, self.keying)?;
            if let Some(a) = self.get(&key) {
                if a.half == half && folds.contains(&a.fold) {
                    out.push(i);
                }
            }
        }
        Ok(out)
    }

    /// `(train folds, held-out fold)` pairs for k-fold CV within `half`.
    pub fn cv_folds(&self) -> Vec<(Vec<usize>, usize)> {
        (0..self.k)
            .map(|t| ((0..self.k).filter(|&f| f != t).collect(), t))
            .collect()
    }

    /// Checks that fold indices are in range.
    pub fn validate(&self) -> Result<()> {
        if let Some((s, a)) = self.assignments.iter().find(|(_, a)| a.fold >= self.k) {
            return Err(SplitError::Invalid(format!("subject {s} has fold {} >= k = {}", a.fold, self.k)));
        }
        Ok(())
    }

    /// True when every subject here also appears in `parent` with the same
    /// half and fold.
    pub fn nests_in(&self, parent: &FoldPlan) -> bool {
        self.assignments
            .iter()
            .all(|(s, a)| parent.get(s) == Some(*a))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p: FoldPlan = serde_json::from_slice(&std::fs::read(path)?)?;
        p.validate()?;
        Ok(p)
    }
}

/// Subject keys shared by two row sets.
pub fn leaked_subjects(
    manifest: &DatasetManifest,
    keying: SubjectKeying,
    a: &[usize],
    b: &[usize],
) -> Result<Vec<String>> {
    let keys = |ix: &[usize]| -> Result<BTreeSet<String>> {
        ix.iter().map(|&i| subject_key(&manifest.rows[i], keying)).collect()
    };
    let (ka, kb) = (keys(a)?, keys(b)?);
    Ok(ka.intersection(&kb).cloned().collect())
}

pub fn assert_no_leakage(manifest: &DatasetManifest, keying: SubjectKeying, a: &[usize], b: &[usize]) -> Result<()> {
    let leaked = leaked_subjects(manifest, keying, a, b)?;
    if leaked.is_empty() {
        Ok(())
    } else {
        Err(SplitError::Leakage(leaked))
    }
}
