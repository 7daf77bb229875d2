use crate::error::{Result, SplitError};
use crate::plan::{subject_key, Assignment, FoldPlan, Half, Lineage, SubjectKeying};
use crate::rng::shuffled;
use selftaught_curation::DatasetManifest;
use std::collections::{BTreeMap, BTreeSet};

/// Map count in the training side of the CAE split. The corpus the
/// architecture was tuned on (28,532 maps) is split 22,772 / 5,760; any
/// other size uses `floor(0.8 n)`.
pub fn train_count_80_20(n: usize) -> usize {
    if n == 28_532 {
        22_772
    } else {
        n * 4 / 5
    }
}

fn sub_manifest(m: &DatasetManifest, idx: &[usize], part: &str) -> DatasetManifest {
    let mut out = DatasetManifest::new(m.label_key, m.class_vocabulary.clone(), idx.iter().map(|&i| m.rows[i].clone()).collect());
    out.provenance = m.provenance.clone();
    out.provenance.insert("split".into(), part.into());
    out
}

/// Map-level 80/20 split (no subject constraint).
pub fn split_maps_80_20(m: &DatasetManifest, seed: u64) -> Result<(DatasetManifest, DatasetManifest)> {
    if m.is_empty() {
        return Err(SplitError::Empty);
    }
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&a, &b| m.rows[a].image_id.cmp(&m.rows[b].image_id).then(a.cmp(&b)));
    let ids: Vec<(String, usize)> = order.iter().map(|&i| (m.rows[i].image_id.clone(), i)).collect();
    let perm = shuffled(ids, seed, "split_maps_80_20");
    let n_train = train_count_80_20(m.len());
    let mut train: Vec<usize> = perm[..n_train].iter().map(|(_, i)| *i).collect();
    let mut test: Vec<usize> = perm[n_train..].iter().map(|(_, i)| *i).collect();
    train.sort_unstable();
    test.sort_unstable();
    Ok((sub_manifest(m, &train, "train"), sub_manifest(m, &test, "test")))
}

pub fn subject_keys(m: &DatasetManifest, keying: SubjectKeying) -> Result<BTreeSet<String>> {
    m.rows.iter().map(|r| subject_key(r, keying)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HalfSplit {
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

fn halve(subjects: impl IntoIterator<Item = String>, seed: u64, tag: &str) -> HalfSplit {
    let s = shuffled(subjects, seed, tag);
    let n_val = s.len().div_ceil(2);
    HalfSplit {
        validation: s[..n_val].to_vec(),
        test: s[n_val..].to_vec(),
    }
}

/// Subject-level 50/50 split; an odd subject goes to validation.
pub fn split_subjects_half(m: &DatasetManifest, seed: u64) -> Result<HalfSplit> {
    Ok(halve(subject_keys(m, SubjectKeying::Subject)?, seed, "split_subjects_half"))
}

/// Fold sizes differ by at most one, larger folds first.
fn deal(subjects: &[String], k: usize) -> Vec<Vec<String>> {
    let (base, extra) = (subjects.len() / k, subjects.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let n = base + usize::from(f < extra);
        out.push(subjects[at..at + n].to_vec());
        at += n;
    }
    out
}

/// Random subject-disjoint k-fold partition.
pub fn kfold_by_subject(subjects: &[String], k: usize, seed: u64, tag: &str) -> Result<Vec<Vec<String>>> {
    if k == 0 || subjects.len() < k {
        return Err(SplitError::TooFewSubjects { have: subjects.len(), k });
    }
    Ok(deal(&shuffled(subjects.iter().cloned(), seed, tag), k))
}

/// Half split followed by k-folding of each half.
pub fn build_fold_plan(m: &DatasetManifest, seed: u64, k: usize) -> Result<FoldPlan> {
    let halves = split_subjects_half(m, seed)?;
    let mut assignments = BTreeMap::new();
    for (half, subjects) in [(Half::Validation, &halves.validation), (Half::Test, &halves.test)] {
        let folds = kfold_by_subject(subjects, k, seed, &format!("kfold_by_subject/{half:?}"))?;
        for (f, members) in folds.into_iter().enumerate() {
            for s in members {
                assignments.insert(s, Assignment { half, fold: f });
            }
        }
    }
    Ok(FoldPlan {
        operation: "build_fold_plan".into(),
        seed,
        k,
        keying: SubjectKeying::Subject,
        lineage: None,
        assignments,
    })
}

/// Chain of nested plans inside `half` of `parent`: each size `S` draws
/// `S / k` subjects per fold from the immediately larger plan, keeping fold
/// indices.
pub fn nested_subsample(parent: &FoldPlan, half: Half, sizes: &[usize], seed: u64) -> Result<Vec<FoldPlan>> {
    let k = parent.k;
    let mut chain: Vec<FoldPlan> = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size % k != 0 {
            return Err(SplitError::Indivisible { size, k });
        }
        let from = chain.last().unwrap_or(parent);
        let per_fold = size / k;
        let mut assignments = BTreeMap::new();
        for f in 0..k {
            let pool = from.fold(half, f);
            if pool.len() < per_fold {
                return Err(SplitError::InsufficientFold {
                    fold: f,
                    have: pool.len(),
                    need: per_fold,
                    context: format!(" for size {size}"),
                });
            }
            for s in shuffled(pool, seed, &format!("nested_subsample/{size}/{f}")).into_iter().take(per_fold) {
                assignments.insert(s, Assignment { half, fold: f });
            }
        }
        let plan = FoldPlan {
            operation: format!("nested_subsample/{size}"),
            seed,
            k,
            keying: parent.keying,
            lineage: Some(Lineage {
                parent_operation: from.operation.clone(),
                parent_seed: from.seed,
                parent_subjects: from.len(),
            }),
            assignments,
        };
        chain.push(plan);
    }
    Ok(chain)
}

fn subjects_by_study(m: &DatasetManifest) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let mut by_study: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in &m.rows {
        let study = r.study_id.clone().ok_or_else(|| SplitError::MissingStudy(r.image_id.clone()))?;
        by_study
            .entry(study)
            .or_default()
            .insert(subject_key(r, SubjectKeying::StudySubject)?);
    }
    Ok(by_study)
}

/// Per-study half split and k-folding; the n-th folds of all studies are
/// pooled into fold n. Studies with fewer than two subjects are skipped.
/// Plan keys are `study/subject`.
pub fn stratified_study_split(m: &DatasetManifest, seed: u64, k: usize) -> Result<FoldPlan> {
    if k == 0 {
        return Err(SplitError::TooFewSubjects { have: 0, k });
    }
    let mut assignments = BTreeMap::new();
    for (study, subjects) in subjects_by_study(m)? {
        if subjects.len() < 2 {
            log::warn!("study {study} has {} subject(s); excluded from the stratified split", subjects.len());
            continue;
        }
        let halves = halve(subjects, seed, &format!("stratified_study_split/{study}"));
        for (half, members) in [(Half::Validation, halves.validation), (Half::Test, halves.test)] {
            let members = shuffled(members, seed, &format!("stratified_study_split/{study}/{half:?}"));
            for (f, fold) in deal(&members, k).into_iter().enumerate() {
                for s in fold {
                    assignments.insert(s, Assignment { half, fold: f });
                }
            }
        }
    }
    Ok(FoldPlan {
        operation: "stratified_study_split".into(),
        seed,
        k,
        keying: SubjectKeying::StudySubject,
        lineage: None,
        assignments,
    })
}

pub const SMALL_MIN_STUDY_SUBJECTS: usize = 20;
pub const SMALL_PER_FOLD: usize = 2;

pub fn study_of_key(key: &str) -> &str {
    key.split_once('/').map_or(key, |(s, _)| s)
}

/// Reduced corpus: studies with more than 20 subjects, two subjects drawn per
/// fold per study per half from `full`. Returns the filtered manifest (its
/// vocabulary restricted to the labels still present) and the nested plan.
pub fn build_small_brainpedia(full: &FoldPlan, m: &DatasetManifest, seed: u64) -> Result<(DatasetManifest, FoldPlan)> {
    if full.keying != SubjectKeying::StudySubject {
        return Err(SplitError::Invalid("expected a study-stratified plan".into()));
    }
    let eligible: Vec<String> = subjects_by_study(m)?
        .into_iter()
        .filter(|(_, s)| s.len() > SMALL_MIN_STUDY_SUBJECTS)
        .map(|(study, _)| study)
        .collect();
    let mut assignments = BTreeMap::new();
    for study in &eligible {
        for half in Half::BOTH {
            for f in 0..full.k {
                let pool: Vec<String> = full
                    .fold(half, f)
                    .into_iter()
                    .filter(|key| study_of_key(key) == study)
                    .collect();
                if pool.len() < SMALL_PER_FOLD {
                    return Err(SplitError::InsufficientFold {
                        fold: f,
                        have: pool.len(),
                        need: SMALL_PER_FOLD,
                        context: format!(" (study {study}, {half:?})"),
                    });
                }
                let tag = format!("build_small_brainpedia/{study}/{half:?}/{f}");
                for s in shuffled(pool, seed, &tag).into_iter().take(SMALL_PER_FOLD) {
                    assignments.insert(s, Assignment { half, fold: f });
                }
            }
        }
    }
    let plan = FoldPlan {
        operation: "build_small_brainpedia".into(),
        seed,
        k: full.k,
        keying: SubjectKeying::StudySubject,
        lineage: Some(Lineage {
            parent_operation: full.operation.clone(),
            parent_seed: full.seed,
            parent_subjects: full.len(),
        }),
        assignments,
    };
    let mut rows = Vec::new();
    for r in &m.rows {
        if plan.get(&subject_key(r, SubjectKeying::StudySubject)?).is_some() {
            rows.push(r.clone());
        }
    }
    let present: BTreeSet<&str> = rows.iter().filter_map(|r| r.label.as_deref()).collect();
    let vocab = m
        .class_vocabulary
        .iter()
        .filter(|c| present.contains(c.as_str()))
        .cloned()
        .collect();
    let mut small = DatasetManifest::new(m.label_key, vocab, rows);
    small.provenance = m.provenance.clone();
    small.provenance.insert("subset".into(), "small_brainpedia".into());
    Ok((small, plan))
}
