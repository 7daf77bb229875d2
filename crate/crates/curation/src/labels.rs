use crate::error::{CurationError, Result};
use crate::manifest::{DatasetManifest, LabelKey, ManifestRow};
use crate::record::MapRecord;
use std::collections::{BTreeMap, BTreeSet, HashSet};

/// HCP tasks and their contrasts.
pub const HCP_TASKS: [(&str, &[&str]); 7] = [
    ("WM", &["0BKBODY", "0BK-FACE", "0BKPLACE", "0BKTOOL", "2BKBODY", "2BK-FACE", "2BKPLACE", "2BKTOOL"]),
    ("GAMBLING", &["PUNISH", "REWARD"]),
    ("MOTOR", &["CUE", "LF", "LH", "RF", "RH"]),
    ("EMOTION", &["FACES", "SHAPES"]),
    ("LANGUAGE", &["MATH", "STORY"]),
    ("RELATIONAL", &["MATCH", "REL"]),
    ("SOCIAL", &["RANDOM", "TOM"]),
];

/// The single contrast kept per task for the one-contrast target.
pub const ONE_CONTRAST_PER_TASK: [(&str, &str); 7] = [
    ("WM", "2BKPLACE"),
    ("EMOTION", "FACES"),
    ("GAMBLING", "PUNISH"),
    ("RELATIONAL", "REL"),
    ("MOTOR", "RH"),
    ("LANGUAGE", "STORY"),
    ("SOCIAL", "TOM"),
];

pub fn hcp_contrasts() -> Vec<&'static str> {
    HCP_TASKS.iter().flat_map(|(_, cs)| cs.iter().copied()).collect()
}

pub fn hcp_task_names() -> Vec<&'static str> {
    HCP_TASKS.iter().map(|(t, _)| *t).collect()
}

pub fn task_of_contrast(contrast: &str) -> Option<&'static str> {
    HCP_TASKS
        .iter()
        .find(|(_, cs)| cs.contains(&contrast))
        .map(|(t, _)| *t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HcpMode {
    Contrast,
    Task,
    OneContrastTask,
}

impl HcpMode {
    pub fn label_key(self) -> LabelKey {
        match self {
            HcpMode::Contrast => LabelKey::Contrast,
            HcpMode::Task => LabelKey::Task,
            HcpMode::OneContrastTask => LabelKey::OneContrastTask,
        }
    }
}

fn record_err(r: &MapRecord, msg: impl Into<String>) -> CurationError {
    CurationError::Record {
        image_id: r.image_id.clone(),
        msg: msg.into(),
    }
}

/// Labels HCP-shaped records under one of the three HCP targets. Every
/// record must carry a known contrast consistent with its task (when the task
/// is present) along with subject and study ids.
pub fn build_hcp_labels(records: &[MapRecord], mode: HcpMode) -> Result<DatasetManifest> {
    let mut rows = Vec::new();
    let mut seen_pairs = HashSet::new();
    for r in records {
        let contrast = r.contrast.as_deref().ok_or_else(|| record_err(r, "missing contrast"))?;
        let task = task_of_contrast(contrast).ok_or_else(|| CurationError::UnknownContrast(contrast.to_string()))?;
        if let Some(t) = r.task.as_deref() {
            if t != task {
                return Err(record_err(r, format!("contrast {contrast} belongs to {task}, record says {t}")));
            }
        }
        if r.subject_id.is_none() || r.study_id.is_none() {
            return Err(record_err(r, "missing subject or study id"));
        }
        let label = match mode {
            HcpMode::Contrast => contrast,
            HcpMode::Task => task,
            HcpMode::OneContrastTask => {
                if !ONE_CONTRAST_PER_TASK.contains(&(task, contrast)) {
                    continue;
                }
                let subject = r.subject_id.as_deref().unwrap_or_default();
                if !seen_pairs.insert((subject.to_string(), task)) {
                    return Err(record_err(r, format!("second {task} map for subject {subject}")));
                }
                task
            }
        };
        rows.push(ManifestRow::labeled(r, label));
    }
    let vocab: Vec<String> = match mode {
        HcpMode::Contrast => hcp_contrasts().into_iter().map(String::from).collect(),
        _ => hcp_task_names().into_iter().map(String::from).collect(),
    };
    let mut m = DatasetManifest::new(Some(mode.label_key()), vocab, rows);
    m.provenance.insert("source".into(), "build_hcp_labels".into());
    m.validate()?;
    Ok(m)
}

/// Joins a multi-concept annotation into one composite class string.
pub fn composite_label(concepts: &[String]) -> String {
    concepts.join(", ")
}

/// Labels records by their composite concept string. The vocabulary is the
/// sorted set of composites present.
pub fn build_concept_labels(records: &[MapRecord]) -> Result<DatasetManifest> {
    let mut rows = Vec::with_capacity(records.len());
    let mut vocab = BTreeSet::new();
    for r in records {
        let concepts = r
            .concepts
            .as_deref()
            .filter(|c| !c.is_empty())
            .ok_or_else(|| record_err(r, "missing concepts"))?;
        let label = composite_label(concepts);
        vocab.insert(label.clone());
        rows.push(ManifestRow::labeled(r, label));
    }
    let mut m = DatasetManifest::new(Some(LabelKey::Concept), vocab.into_iter().collect(), rows);
    m.provenance.insert("source".into(), "build_concept_labels".into());
    m.validate()?;
    Ok(m)
}

/// Number of rows per class label.
pub fn class_counts(m: &DatasetManifest) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for r in &m.rows {
        if let Some(l) = &r.label {
            *out.entry(l.clone()).or_default() += 1;
        }
    }
    out
}
