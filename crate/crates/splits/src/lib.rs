//! Subject-aware splitting: 80/20 map splits, 50/50 subject halves, k-fold
//! CV, nested subsamples, per-study stratification and the reduced
//! multi-study corpus.

mod error;
mod ops;
mod plan;
mod rng;

pub use error::{Result, SplitError};
pub use ops::{
    build_fold_plan, build_small_brainpedia, kfold_by_subject, nested_subsample, split_maps_80_20,
    split_subjects_half, stratified_study_split, study_of_key, subject_keys, train_count_80_20, HalfSplit,
    SMALL_MIN_STUDY_SUBJECTS, SMALL_PER_FOLD,
};
pub use plan::{
    assert_no_leakage, leaked_subjects, subject_key, Assignment, FoldPlan, Half, Lineage, SubjectKeying,
    DEFAULT_FOLDS,
};
pub use rng::stream;
