use crate::manifest::{DatasetManifest, ManifestRow};
use crate::record::{MapRecord, RecordInput};
use std::collections::BTreeMap;

pub const REQUIRED_MODALITY: &str = "fMRI-BOLD";
pub const ACCEPTED_MAP_TYPES: [&str; 2] = ["T map", "Z map"];
/// Filename tokens marking contrast (not statistic) maps from AFNI, SPM and FSL.
pub const EXCLUDED_FILENAME_TOKENS: [&str; 4] = ["SetA_mean", "SetB_mean", "con", "cope"];

/// Rejection reasons, in the order they are tested.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Criterion {
    Malformed,
    Modality,
    Invalid,
    NotMni,
    MapType,
    Thresholded,
    Filename,
    DuplicateId,
}

impl Criterion {
    pub const ALL: [Criterion; 8] = [
        Criterion::Malformed,
        Criterion::Modality,
        Criterion::Invalid,
        Criterion::NotMni,
        Criterion::MapType,
        Criterion::Thresholded,
        Criterion::Filename,
        Criterion::DuplicateId,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Malformed => "malformed",
            Criterion::Modality => "modality",
            Criterion::Invalid => "is_valid",
            Criterion::NotMni => "not_mni",
            Criterion::MapType => "map_type",
            Criterion::Thresholded => "is_thresholded",
            Criterion::Filename => "filename",
            Criterion::DuplicateId => "duplicate_id",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub total: usize,
    pub kept: usize,
    /// Each rejected record is counted under its first failing criterion.
    pub rejections: BTreeMap<Criterion, usize>,
    pub malformed: Vec<crate::record::Malformed>,
}

impl FilterReport {
    pub fn rejected(&self) -> usize {
        self.rejections.values().sum()
    }

    pub fn count(&self, c: Criterion) -> usize {
        self.rejections.get(&c).copied().unwrap_or(0)
    }
}

fn is_token_char_left(c: char) -> bool {
    c.is_alphanumeric()
}

/// True when `token` occurs in `name` with no alphanumeric character right
/// before it and no letter right after it. Digits may follow, so `cope3`
/// and `con_0001` match while `context` and `icon` do not.
pub fn has_token(name: &str, token: &str) -> bool {
    let mut start = 0;
    while let Some(pos) = name[start..].find(token) {
        let at = start + pos;
        let end = at + token.len();
        let left_ok = name[..at].chars().next_back().is_none_or(|c| !is_token_char_left(c));
        let right_ok = name[end..].chars().next().is_none_or(|c| !c.is_alphabetic());
        if left_ok && right_ok {
            return true;
        }
        start = at + name[at..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

pub fn excluded_by_filename(filename: &str) -> bool {
    EXCLUDED_FILENAME_TOKENS.iter().any(|t| has_token(filename, t))
}

/// First failing criterion, or `None` when the record is eligible.
pub fn rejection_reason(r: &MapRecord) -> Option<Criterion> {
    if r.modality != REQUIRED_MODALITY {
        Some(Criterion::Modality)
    } else if !r.is_valid {
        Some(Criterion::Invalid)
    } else if r.not_mni {
        Some(Criterion::NotMni)
    } else if !ACCEPTED_MAP_TYPES.contains(&r.map_type.as_str()) {
        Some(Criterion::MapType)
    } else if r.is_thresholded {
        Some(Criterion::Thresholded)
    } else if excluded_by_filename(&r.filename) {
        Some(Criterion::Filename)
    } else {
        None
    }
}

/// Selects pre-training maps. Kept rows are ordered by image id, so the
/// result does not depend on input order; of several eligible records
/// sharing an id the one with the smallest serialized form is kept.
pub fn filter_pretraining_maps(records: impl IntoIterator<Item = RecordInput>) -> (DatasetManifest, FilterReport) {
    let mut report = FilterReport::default();
    let mut eligible: Vec<(String, MapRecord)> = Vec::new();
    for input in records {
        report.total += 1;
        match input {
            Err(m) => {
                log::warn!("skipping malformed record at {}: {}", m.location, m.reason);
                *report.rejections.entry(Criterion::Malformed).or_default() += 1;
                report.malformed.push(m);
            }
            Ok(r) => match rejection_reason(&r) {
                Some(c) => *report.rejections.entry(c).or_default() += 1,
                None => {
                    let key = serde_json::to_string(&r).unwrap_or_default();
                    eligible.push((key, r));
                }
            },
        }
    }
    eligible.sort_by(|a, b| a.1.image_id.cmp(&b.1.image_id).then_with(|| a.0.cmp(&b.0)));
    let mut rows: Vec<ManifestRow> = Vec::with_capacity(eligible.len());
    for (_, r) in eligible {
        if rows.last().is_some_and(|p| p.image_id == r.image_id) {
            *report.rejections.entry(Criterion::DuplicateId).or_default() += 1;
            continue;
        }
        rows.push(ManifestRow::unlabeled(&r));
    }
    report.kept = rows.len();
    let mut manifest = DatasetManifest::new(None, Vec::new(), rows);
    manifest.provenance.insert("source".into(), "filter_pretraining_maps".into());
    manifest.provenance.insert("total_records".into(), report.total.to_string());
    for c in Criterion::ALL {
        manifest.provenance.insert(format!("rejected.{}", c.name()), report.count(c).to_string());
    }
    (manifest, report)
}
