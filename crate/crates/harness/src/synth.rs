//! Seeded synthetic statistic maps: smooth class templates, smooth subject
//! fields and white noise, masked and min-max normalized.

use crate::error::{HarnessError, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use selftaught_curation::{DatasetManifest, LabelKey, ManifestRow};
use selftaught_splits::stream;
use selftaught_train::MapSet;
use selftaught_volume::{apply_mask, centered_affine, ellipsoid_mask, minmax_normalize, Volume, DEFAULT_VOXEL_MM};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const DESK_DIMS: [usize; 3] = [24, 28, 24];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_studies: usize,
    pub subjects_per_study: usize,
    pub classes: usize,
    /// Number of task groups; classes in one task share a base template.
    /// 0 gives every class its own template.
    pub tasks: usize,
    /// Classes covered by each study, assigned cyclically; 0 covers all.
    pub classes_per_study: usize,
    pub dims: [usize; 3],
    pub class_amplitude: f64,
    pub subject_amplitude: f64,
    pub noise_sigma: f64,
    /// Gaussian bumps per template (and per contrast offset).
    pub bumps_per_class: usize,
    /// Bump standard deviation in voxels of a 24-voxel-wide grid; scaled to
    /// the actual grid.
    pub bump_width: f64,
    /// Relative amplitude of contrast offsets on top of their task base.
    pub contrast_offset: f64,
    pub subject_bumps: usize,
    pub mask_fill: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_studies: 1,
            subjects_per_study: 40,
            classes: 4,
            tasks: 0,
            classes_per_study: 0,
            dims: DESK_DIMS,
            class_amplitude: 1.0,
            subject_amplitude: 0.5,
            noise_sigma: 0.3,
            bumps_per_class: 3,
            bump_width: 2.5,
            contrast_offset: 0.6,
            subject_bumps: 6,
            mask_fill: 0.95,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub name: String,
    pub task: Option<String>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        if self.classes < 2 {
            return bad(format!("{} classes; at least 2 needed", self.classes));
        }
        for (name, v) in [
            ("class_amplitude", self.class_amplitude),
            ("subject_amplitude", self.subject_amplitude),
            ("noise_sigma", self.noise_sigma),
            ("contrast_offset", self.contrast_offset),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be a non-negative number"));
            }
        }
        if self.n_studies == 0 || self.subjects_per_study == 0 {
            return bad("no studies or no subjects".into());
        }
        if self.tasks > self.classes {
            return bad(format!("{} tasks for {} classes", self.tasks, self.classes));
        }
        if self.classes_per_study > self.classes {
            return bad(format!("{} classes per study of {}", self.classes_per_study, self.classes));
        }
        if self.dims.contains(&0) {
            return bad(format!("grid {:?} is empty", self.dims));
        }
        if !(self.bump_width > 0.0) || !(self.mask_fill > 0.0 && self.mask_fill <= 1.0) {
            return bad("bump_width must be positive and mask_fill in (0, 1]".into());
        }
        Ok(())
    }

    /// Task index of class `c` (contiguous blocks).
    pub fn task_of(&self, c: usize) -> Option<usize> {
        (self.tasks > 0).then(|| c * self.tasks / self.classes)
    }

    pub fn class_info(&self) -> Vec<ClassInfo> {
        (0..self.classes)
            .map(|c| match self.task_of(c) {
                Some(t) => ClassInfo {
                    name: format!("task{t:02}_c{c:02}"),
                    task: Some(format!("task{t:02}")),
                },
                None => ClassInfo {
                    name: format!("class{c:02}"),
                    task: None,
                },
            })
            .collect()
    }

    /// Classes present in study `s`.
    pub fn study_classes(&self, s: usize) -> Vec<usize> {
        if self.classes_per_study == 0 {
            return (0..self.classes).collect();
        }
        let mut v: Vec<usize> = (0..self.classes_per_study)
            .map(|j| (s * self.classes_per_study + j) % self.classes)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn mask(&self) -> Result<Volume> {
        Ok(ellipsoid_mask(self.dims, self.affine(), self.mask_fill)?)
    }

    /// Isotropic affine whose world extent matches the 4 mm full grid.
    pub fn affine(&self) -> selftaught_volume::Affine {
        centered_affine(self.dims, DEFAULT_VOXEL_MM * 48.0 / self.dims[0] as f64)
    }

    fn sigma(&self) -> f64 {
        self.bump_width * self.dims[0] as f64 / 24.0
    }
}

#[derive(Clone, Copy, Debug)]
struct Bump {
    centre: [f64; 3],
    amp: f64,
    sigma: f64,
}

fn random_bumps(rng: &mut impl Rng, n: usize, dims: [usize; 3], sigma: f64, amp: impl Fn(&mut dyn FnMut() -> f64) -> f64) -> Vec<Bump> {
    (0..n)
        .map(|_| {
            // Centres stay in the inner 70% of each axis, inside the mask.
            let centre = [0, 1, 2].map(|a| (0.15 + 0.7 * rng.random::<f64>()) * (dims[a] as f64 - 1.0));
            let mut draw = || rng.random::<f64>();
            Bump {
                centre,
                amp: amp(&mut draw),
                sigma,
            }
        })
        .collect()
}

fn signed_unit(draw: &mut dyn FnMut() -> f64) -> f64 {
    let mag = 0.5 + 0.5 * draw();
    if draw() < 0.5 {
        -mag
    } else {
        mag
    }
}

fn render(bumps: &[Bump], dims: [usize; 3]) -> Vec<f64> {
    let mut out = vec![0.0; dims.iter().product()];
    for b in bumps {
        let inv = 1.0 / (2.0 * b.sigma * b.sigma);
        let axis = |a: usize| -> Vec<f64> {
            (0..dims[a]).map(|x| (-(x as f64 - b.centre[a]).powi(2) * inv).exp()).collect()
        };
        let (gi, gj, gk) = (axis(0), axis(1), axis(2));
        let mut n = 0;
        for &wi in &gi {
            for &wj in &gj {
                let wij = b.amp * wi * wj;
                for &wk in &gk {
                    out[n] += wij * wk;
                    n += 1;
                }
            }
        }
    }
    out
}

/// Class templates of `spec`; task bases are shared by their contrasts.
pub fn class_templates(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    let mut rng = stream(spec.seed, "templates");
    let sigma = spec.sigma();
    let bases: Vec<Vec<Bump>> = (0..spec.tasks)
        .map(|_| random_bumps(&mut rng, spec.bumps_per_class, spec.dims, sigma, signed_unit))
        .collect();
    (0..spec.classes)
        .map(|c| {
            let own = random_bumps(&mut rng, spec.bumps_per_class, spec.dims, sigma, signed_unit);
            match spec.task_of(c) {
                Some(t) => {
                    let mut all = bases[t].clone();
                    all.extend(own.into_iter().map(|b| Bump {
                        amp: b.amp * spec.contrast_offset,
                        ..b
                    }));
                    render(&all, spec.dims)
                }
                None => render(&own, spec.dims),
            }
        })
        .collect()
}

fn subject_field(spec: &SyntheticSpec, namespace: u64, tag: &str) -> Vec<f64> {
    let mut rng = stream(namespace, tag);
    let bumps = random_bumps(&mut rng, spec.subject_bumps, spec.dims, 2.0 * spec.sigma(), |d| {
        let (u1, u2) = (d().max(f64::MIN_POSITIVE), d());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    });
    render(&bumps, spec.dims)
}

/// One normalized, masked map.
fn synth_map(
    spec: &SyntheticSpec,
    template: &[f64],
    subject: &[f64],
    noise_ns: u64,
    noise_tag: &str,
    mask: &Volume,
) -> Result<Vec<f32>> {
    let mut rng = stream(noise_ns, noise_tag);
    let raw: Vec<f32> = template
        .iter()
        .zip(subject)
        .map(|(&t, &s)| {
            let e: f64 = StandardNormal.sample(&mut rng);
            (spec.class_amplitude * t + spec.subject_amplitude * s + spec.noise_sigma * e) as f32
        })
        .collect();
    let v = Volume::new(spec.dims, spec.affine(), raw)?;
    let v = match minmax_normalize(&v, Some(mask)) {
        Ok(n) => n,
        // Constant maps (all effects zero) normalize to zero.
        Err(selftaught_volume::VolumeError::DegenerateRange(_)) => Volume::filled(spec.dims, spec.affine(), 0.0)?,
        Err(e) => return Err(e.into()),
    };
    Ok(apply_mask(&v, mask)?.into_data())
}

/// Labeled synthetic corpus with one map per (subject, class in study).
#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub classes: Vec<ClassInfo>,
    /// Labeled by class name.
    pub manifest: DatasetManifest,
    /// Aligned with `manifest.rows`.
    pub maps: MapSet,
    /// Class index of every row.
    pub class_of_row: Vec<usize>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let templates = class_templates(spec);
    let classes = spec.class_info();
    let mask = spec.mask()?;
    let mut rows = Vec::new();
    let mut data = Vec::new();
    let mut class_of_row = Vec::new();
    for s in 0..spec.n_studies {
        for j in 0..spec.subjects_per_study {
            let subject = format!("st{s:02}-sub{j:03}");
            let field = subject_field(spec, spec.seed, &format!("subject/{subject}"));
            for c in spec.study_classes(s) {
                let id = format!("syn-{subject}-{c:02}");
                data.extend(synth_map(spec, &templates[c], &field, spec.seed, &format!("noise/{id}"), &mask)?);
                rows.push(ManifestRow {
                    image_id: id,
                    subject_id: Some(subject.clone()),
                    study_id: Some(format!("study{s:02}")),
                    label: Some(classes[c].name.clone()),
                    file_path: None,
                });
                class_of_row.push(c);
            }
        }
    }
    let vocab: Vec<String> = classes.iter().map(|c| c.name.clone()).collect();
    let manifest = DatasetManifest::new(Some(LabelKey::Contrast), vocab, rows);
    let ids = manifest.rows.iter().map(|r| r.image_id.clone()).collect();
    let maps = MapSet::new(spec.dims, ids, data)?
        .with_labels(class_of_row.clone(), spec.classes)?
        .with_mask(mask.into_data())?;
    Ok(SyntheticDataset {
        spec: spec.clone(),
        classes,
        manifest,
        maps,
        class_of_row,
    })
}

/// How a labeled view of a [`SyntheticDataset`] assigns classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelView {
    /// One class per contrast.
    Contrast,
    /// One class per task.
    Task,
    /// Only the first contrast of every task, labeled by task.
    OneContrastTask,
    /// Multi-study concept labels (class names).
    Concept,
}

impl SyntheticDataset {
    /// Manifest and aligned maps under `view`.
    pub fn view(&self, view: LabelView) -> Result<(DatasetManifest, MapSet)> {
        let needs_tasks = matches!(view, LabelView::Task | LabelView::OneContrastTask);
        if needs_tasks && self.spec.tasks == 0 {
            return Err(HarnessError::Spec("task labels need tasks > 0".into()));
        }
        let first_of_task: BTreeSet<usize> = (0..self.spec.tasks)
            .filter_map(|t| (0..self.spec.classes).find(|&c| self.spec.task_of(c) == Some(t)))
            .collect();
        let mut keep = Vec::new();
        let mut labels = Vec::new();
        for (i, &c) in self.class_of_row.iter().enumerate() {
            let label = match view {
                LabelView::Contrast | LabelView::Concept => self.classes[c].name.clone(),
                LabelView::Task => self.classes[c].task.clone().unwrap(),
                LabelView::OneContrastTask if first_of_task.contains(&c) => self.classes[c].task.clone().unwrap(),
                LabelView::OneContrastTask => continue,
            };
            keep.push(i);
            labels.push(label);
        }
        let vocab: Vec<String> = match view {
            LabelView::Contrast | LabelView::Concept => self.classes.iter().map(|c| c.name.clone()).collect(),
            _ => labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
        };
        let key = match view {
            LabelView::Contrast => LabelKey::Contrast,
            LabelView::Task => LabelKey::Task,
            LabelView::OneContrastTask => LabelKey::OneContrastTask,
            LabelView::Concept => LabelKey::Concept,
        };
        let rows = keep
            .iter()
            .zip(&labels)
            .map(|(&i, l)| ManifestRow {
                label: Some(l.clone()),
                ..self.manifest.rows[i].clone()
            })
            .collect();
        let manifest = DatasetManifest::new(Some(key), vocab, rows);
        let maps = self
            .maps
            .subset(&keep)
            .with_labels(manifest.label_indices()?, manifest.n_classes())?;
        Ok((manifest, maps))
    }
}

/// Maps each pool subject contributes.
pub const POOL_MAPS_PER_SUBJECT: usize = 4;

/// Unlabeled maps for pre-training. Class templates come from `spec`;
/// subjects, class draws and noise come from the `pool_seed` namespace, and
/// every id starts with `pool-`.
pub fn generate_pool(spec: &SyntheticSpec, n_maps: usize, pool_seed: u64) -> Result<(DatasetManifest, MapSet)> {
    spec.validate()?;
    let templates = class_templates(spec);
    let mask = spec.mask()?;
    let ns = pool_seed ^ 0x706f_6f6c_0000_0000;
    let mut pick = stream(ns, "pool/classes");
    let mut rows = Vec::with_capacity(n_maps);
    let mut data = Vec::with_capacity(n_maps * spec.dims.iter().product::<usize>());
    let mut field = Vec::new();
    for i in 0..n_maps {
        let subject = format!("pool-sub{:04}", i / POOL_MAPS_PER_SUBJECT);
        if i % POOL_MAPS_PER_SUBJECT == 0 {
            field = subject_field(spec, ns, &format!("pool/subject/{subject}"));
        }
        let c = pick.random_range(0..spec.classes);
        let id = format!("pool-{i:05}");
        data.extend(synth_map(spec, &templates[c], &field, ns, &format!("pool/noise/{id}"), &mask)?);
        rows.push(ManifestRow {
            image_id: id,
            subject_id: Some(subject),
            study_id: Some("pool".into()),
            label: None,
            file_path: None,
        });
    }
    let manifest = DatasetManifest::new(None, vec![], rows);
    let ids = manifest.rows.iter().map(|r| r.image_id.clone()).collect();
    let maps = MapSet::new(spec.dims, ids, data)?.with_mask(mask.into_data())?;
    Ok((manifest, maps))
}

/// Errors when two manifests share image or subject ids.
pub fn assert_disjoint(a: &DatasetManifest, b: &DatasetManifest) -> Result<()> {
    let ids = |m: &DatasetManifest| -> BTreeSet<String> {
        m.rows
            .iter()
            .flat_map(|r| [Some(r.image_id.clone()), r.subject_id.clone()])
            .flatten()
            .collect()
    };
    let shared: Vec<String> = ids(a).intersection(&ids(b)).cloned().collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::PoolOverlap(shared))
    }
}
