//! Statistic-map metadata curation: record parsing, inclusion filtering,
//! paginated fetching and labeled manifests.

mod error;
mod fetch;
mod filter;
mod labels;
mod manifest;
mod record;

pub use error::{CurationError, Result};
pub use fetch::{fetch_metadata_pages, FetchOutcome, PageSource, RetryPolicy};
pub use filter::{
    excluded_by_filename, filter_pretraining_maps, has_token, rejection_reason, Criterion, FilterReport,
    ACCEPTED_MAP_TYPES, EXCLUDED_FILENAME_TOKENS, REQUIRED_MODALITY,
};
pub use labels::{
    build_concept_labels, build_hcp_labels, class_counts, composite_label, hcp_contrasts, hcp_task_names,
    task_of_contrast, HcpMode, HCP_TASKS, ONE_CONTRAST_PER_TASK,
};
pub use manifest::{DatasetManifest, LabelKey, ManifestRow};
pub use record::{parse_jsonl, parse_record, Malformed, MapRecord, RecordInput};
