use proptest::prelude::*;
use selftaught_curation::{DatasetManifest, LabelKey, ManifestRow};
use selftaught_splits::*;
use std::collections::BTreeSet;

fn manifest(studies: &[(usize, usize)]) -> DatasetManifest {
    // (subjects, maps per subject) per study; subject ids repeat across studies
    let mut rows = Vec::new();
    for (st, &(subjects, maps)) in studies.iter().enumerate() {
        for s in 0..subjects {
            for m in 0..maps {
                rows.push(ManifestRow {
                    image_id: format!("st{st}-s{s}-m{m}"),
                    subject_id: Some(format!("sub{s:03}")),
                    study_id: Some(format!("study{st:02}")),
                    label: Some(format!("c{}", (st + m) % 4)),
                    file_path: None,
                });
            }
        }
    }
    DatasetManifest::new(Some(LabelKey::Concept), (0..4).map(|c| format!("c{c}")).collect(), rows)
}

fn single_study(subjects: usize, maps: usize) -> DatasetManifest {
    manifest(&[(subjects, maps)])
}

#[test]
fn eighty_twenty_counts() {
    assert_eq!(train_count_80_20(28_532), 22_772);
    assert_eq!(28_532 - train_count_80_20(28_532), 5_760);
    let m = single_study(10, 1);
    let (tr, te) = split_maps_80_20(&m, 3).unwrap();
    assert_eq!((tr.len(), te.len()), (8, 2));
    let ids: BTreeSet<_> = tr.rows.iter().chain(&te.rows).map(|r| r.image_id.clone()).collect();
    assert_eq!(ids.len(), 10);
    let (tr2, te2) = split_maps_80_20(&m, 3).unwrap();
    assert_eq!((tr, te), (tr2, te2));
    assert!(split_maps_80_20(&DatasetManifest::new(None, vec![], vec![]), 0).is_err());
}

#[test]
fn half_split_sizes() {
    let h = split_subjects_half(&single_study(787, 1), 1).unwrap();
    assert_eq!((h.validation.len(), h.test.len()), (394, 393));
    let h = split_subjects_half(&single_study(2, 3), 1).unwrap();
    assert_eq!((h.validation.len(), h.test.len()), (1, 1));
}

#[test]
fn missing_subject_is_an_error() {
    let mut m = single_study(4, 1);
    m.rows[2].subject_id = None;
    assert!(matches!(split_subjects_half(&m, 0), Err(SplitError::MissingSubject(_))));
}

#[test]
fn kfold_sizes() {
    let subs = |n: usize| (0..n).map(|i| format!("s{i}")).collect::<Vec<_>>();
    let sizes = |n| kfold_by_subject(&subs(n), 5, 9, "t").unwrap().iter().map(Vec::len).collect::<Vec<_>>();
    assert_eq!(sizes(10), [2, 2, 2, 2, 2]);
    assert_eq!(sizes(11), [3, 2, 2, 2, 2]);
    assert!(matches!(kfold_by_subject(&subs(4), 5, 0, "t"), Err(SplitError::TooFewSubjects { .. })));
    let folds = kfold_by_subject(&subs(23), 5, 2, "t").unwrap();
    let union: BTreeSet<_> = folds.iter().flatten().cloned().collect();
    assert_eq!(union.len(), 23);
}

#[test]
fn hcp_sized_nesting() {
    let m = single_study(787, 2);
    let plan = build_fold_plan(&m, 42, 5).unwrap();
    assert_eq!(plan.fold_sizes(Half::Test), [79, 79, 79, 78, 78]);
    let chain = nested_subsample(&plan, Half::Test, &[200, 100, 50], 42).unwrap();
    assert_eq!(chain.iter().map(FoldPlan::len).collect::<Vec<_>>(), [200, 100, 50]);
    assert_eq!(chain[0].fold_sizes(Half::Test), [40; 5]);
    assert!(chain[0].nests_in(&plan));
    assert!(chain[1].nests_in(&chain[0]));
    assert!(chain[2].nests_in(&chain[1]));
    assert_eq!(chain[2].lineage.as_ref().unwrap().parent_subjects, 100);
    assert!(matches!(nested_subsample(&plan, Half::Test, &[201], 0), Err(SplitError::Indivisible { .. })));
    assert!(matches!(nested_subsample(&plan, Half::Test, &[400], 0), Err(SplitError::InsufficientFold { .. })));
}

#[test]
fn stratified_two_studies() {
    let m = manifest(&[(10, 2), (10, 1)]);
    let plan = stratified_study_split(&m, 5, 5).unwrap();
    for half in Half::BOTH {
        let subs = plan.subjects(half);
        for st in ["study00", "study01"] {
            assert_eq!(subs.iter().filter(|k| study_of_key(k) == st).count(), 5);
        }
        for f in 0..5 {
            let studies: BTreeSet<_> = plan.fold(half, f).iter().map(|k| study_of_key(k).to_string()).collect();
            assert_eq!(studies.len(), 2);
        }
    }
}

#[test]
fn stratified_skips_single_subject_studies() {
    let m = manifest(&[(12, 1), (1, 3)]);
    let plan = stratified_study_split(&m, 5, 5).unwrap();
    assert!(plan.assignments.keys().all(|k| study_of_key(k) == "study00"));
}

#[test]
fn small_brainpedia_from_29_studies() {
    let mut studies = vec![(24, 1); 11];
    studies.extend(vec![(12, 1); 18]);
    let m = manifest(&studies);
    let full = stratified_study_split(&m, 8, 5).unwrap();
    let (small, plan) = build_small_brainpedia(&full, &m, 8).unwrap();
    assert_eq!(plan.len(), 220);
    assert!(plan.nests_in(&full));
    for st in 0..11 {
        for half in Half::BOTH {
            let n = plan.subjects(half).iter().filter(|k| study_of_key(k) == format!("study{st:02}")).count();
            assert_eq!(n, 10);
        }
    }
    assert_eq!(small.len(), 220);
    assert!(small.class_vocabulary.iter().all(|c| m.class_vocabulary.contains(c)));
}

#[test]
fn plan_round_trips_and_is_reproducible() {
    let m = single_study(37, 2);
    let a = build_fold_plan(&m, 11, 5).unwrap();
    assert_eq!(a, build_fold_plan(&m, 11, 5).unwrap());
    assert_ne!(a, build_fold_plan(&m, 12, 5).unwrap());
    let mut reversed = m.clone();
    reversed.rows.reverse();
    assert_eq!(a, build_fold_plan(&reversed, 11, 5).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("plan.json");
    a.save(&p).unwrap();
    assert_eq!(FoldPlan::load(&p).unwrap(), a);
}

#[test]
fn streams_are_independent() {
    use rand::Rng;
    let a: u64 = stream(1, "x").random();
    let b: u64 = stream(1, "y").random();
    let c: u64 = stream(1, "x").random();
    assert_ne!(a, b);
    assert_eq!(a, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn no_leakage_anywhere(subjects in 10usize..80, maps in 1usize..4, seed in any::<u64>()) {
        let m = single_study(subjects, maps);
        let plan = build_fold_plan(&m, seed, 5).unwrap();
        let val = plan.rows(&m, Half::Validation, &[0, 1, 2, 3, 4]).unwrap();
        let test = plan.rows(&m, Half::Test, &[0, 1, 2, 3, 4]).unwrap();
        prop_assert_eq!(val.len() + test.len(), m.len());
        prop_assert!(leaked_subjects(&m, SubjectKeying::Subject, &val, &test).unwrap().is_empty());
        for half in Half::BOTH {
            for (train, held) in plan.cv_folds() {
                let tr = plan.rows(&m, half, &train).unwrap();
                let te = plan.rows(&m, half, &[held]).unwrap();
                prop_assert!(assert_no_leakage(&m, SubjectKeying::Subject, &tr, &te).is_ok());
            }
            let sizes = plan.fold_sizes(half);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn stratified_fold_balance(n_studies in 1usize..6, seed in any::<u64>()) {
        let studies: Vec<_> = (0..n_studies).map(|i| (10 + 3 * i, 1)).collect();
        let m = manifest(&studies);
        let plan = stratified_study_split(&m, seed, 5).unwrap();
        for half in Half::BOTH {
            let sizes = plan.fold_sizes(half);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= n_studies);
        }
    }
}
