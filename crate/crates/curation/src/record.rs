use serde::{Deserialize, Deserializer, Serialize};

fn id_string<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Int(i64),
        Str(String),
    }
    Ok(match Id::deserialize(d)? {
        Id::Int(n) => n.to_string(),
        Id::Str(s) => s,
    })
}

fn opt_id_string<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Int(i64),
        Str(String),
    }
    Ok(Option::<Id>::deserialize(d)?.map(|id| match id {
        Id::Int(n) => n.to_string(),
        Id::Str(s) => s,
    }))
}

/// One statistic map's metadata, as exported by a NeuroVault-style API.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapRecord {
    #[serde(alias = "id", deserialize_with = "id_string")]
    pub image_id: String,
    #[serde(default, deserialize_with = "opt_id_string", skip_serializing_if = "Option::is_none")]
    pub collection_id: Option<String>,
    pub modality: String,
    pub map_type: String,
    pub is_valid: bool,
    pub not_mni: bool,
    pub is_thresholded: bool,
    pub filename: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cognitive_paradigm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast: Option<String>,
    /// Cognitive concepts (multi-label); flattened to one composite label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concepts: Option<Vec<String>>,
    #[serde(default, deserialize_with = "opt_id_string", skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<String>,
    #[serde(default, deserialize_with = "opt_id_string", skip_serializing_if = "Option::is_none")]
    pub study_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_path: Option<String>,
}

/// A line or page entry that could not be parsed as a [`MapRecord`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Malformed {
    /// Line number or page/index locator.
    pub location: String,
    pub reason: String,
}

pub type RecordInput = std::result::Result<MapRecord, Malformed>;

pub fn parse_record(value: serde_json::Value, location: impl Into<String>) -> RecordInput {
    serde_json::from_value(value).map_err(|e| Malformed {
        location: location.into(),
        reason: e.to_string(),
    })
}

/// Parses a JSON-lines metadata dump. Blank lines are ignored; anything else
/// that fails to parse is returned as [`Malformed`].
pub fn parse_jsonl(text: &str) -> Vec<RecordInput> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let loc = format!("line {}", n + 1);
            match serde_json::from_str::<serde_json::Value>(l) {
                Ok(v) => parse_record(v, loc),
                Err(e) => Err(Malformed {
                    location: loc,
                    reason: e.to_string(),
                }),
            }
        })
        .collect()
}
