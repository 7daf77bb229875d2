//! Experiment recipes: split, pre-train, grid-search on the validation
//! half, then cross-validate both initializations on the test half at each
//! sample size.

use crate::error::{HarnessError, Result};
use crate::synth::{assert_disjoint, generate_pool, generate_synthetic, LabelView, SyntheticSpec};
use rand::RngCore;
use selftaught_core::nn::Checkpoint;
use selftaught_curation::DatasetManifest;
use selftaught_models::ArchId;
use selftaught_splits::{
    build_fold_plan, build_small_brainpedia, nested_subsample, stratified_study_split, stream, FoldPlan, Half,
    DEFAULT_FOLDS,
};
use selftaught_train::{
    config_matrix, crossval_run, grid_search, train_cae, CvFolds, CvResult, GridResult, InitMode, MapSet, RunDir,
    TrainConfig,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeName {
    HcpContrast,
    HcpTask,
    HcpOneContrast,
    Brainpedia,
    SmallBrainpedia,
}

impl RecipeName {
    pub const ALL: [RecipeName; 5] = [
        RecipeName::HcpContrast,
        RecipeName::HcpTask,
        RecipeName::HcpOneContrast,
        RecipeName::Brainpedia,
        RecipeName::SmallBrainpedia,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecipeName::HcpContrast => "hcp_contrast",
            RecipeName::HcpTask => "hcp_task",
            RecipeName::HcpOneContrast => "hcp_one_contrast",
            RecipeName::Brainpedia => "brainpedia",
            RecipeName::SmallBrainpedia => "small_brainpedia",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }

    pub fn view(self) -> LabelView {
        match self {
            RecipeName::HcpContrast => LabelView::Contrast,
            RecipeName::HcpTask => LabelView::Task,
            RecipeName::HcpOneContrast => LabelView::OneContrastTask,
            RecipeName::Brainpedia | RecipeName::SmallBrainpedia => LabelView::Concept,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            RecipeName::HcpContrast => "Contrast classification",
            RecipeName::HcpTask => "Task classification",
            RecipeName::HcpOneContrast => "Task classification, one contrast per task",
            RecipeName::Brainpedia => "Multi-study concept classification",
            RecipeName::SmallBrainpedia => "Reduced multi-study concept classification",
        }
    }
}

impl fmt::Display for RecipeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Subjects in the test-half subsample, or the whole test half.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSize {
    Subjects(usize),
    Global(GlobalTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlobalTag {
    Global,
}

impl SampleSize {
    pub const GLOBAL: SampleSize = SampleSize::Global(GlobalTag::Global);

    pub fn label(self) -> String {
        match self {
            SampleSize::Subjects(n) => n.to_string(),
            SampleSize::Global(_) => "global".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub archs: Vec<ArchId>,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            archs: vec![ArchId::Cnn4, ArchId::Cnn5],
            batch_sizes: selftaught_train::GRID_BATCH_SIZES.to_vec(),
            epochs: selftaught_train::GRID_EPOCHS.to_vec(),
        }
    }
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.archs.len() * self.batch_sizes.len() * self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainSpec {
    pub pool_maps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Seed namespace of the pool; independent of the labeled data seed.
    pub pool_seed: u64,
}

impl Default for PretrainSpec {
    fn default() -> Self {
        Self {
            pool_maps: 256,
            epochs: 20,
            batch_size: 16,
            lr: selftaught_train::DEFAULT_LR,
            pool_seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentRecipe {
    pub name: RecipeName,
    pub sample_sizes: Vec<SampleSize>,
    pub init_modes: Vec<InitMode>,
    pub grid: GridSpec,
    /// Shared settings (grid dims, width, lr, seed) for every config.
    pub base: TrainConfig,
    pub pretrain: PretrainSpec,
    pub folds: usize,
    pub seed: u64,
    pub save_checkpoints: bool,
}

impl Default for ExperimentRecipe {
    fn default() -> Self {
        Self {
            name: RecipeName::HcpTask,
            sample_sizes: vec![
                SampleSize::Subjects(50),
                SampleSize::Subjects(100),
                SampleSize::Subjects(200),
                SampleSize::GLOBAL,
            ],
            init_modes: InitMode::BOTH.to_vec(),
            grid: GridSpec::default(),
            base: TrainConfig {
                input_dims: crate::synth::DESK_DIMS,
                ..TrainConfig::default()
            },
            pretrain: PretrainSpec::default(),
            folds: DEFAULT_FOLDS,
            seed: 0,
            save_checkpoints: false,
        }
    }
}

impl ExperimentRecipe {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Recipe(m.into()));
        if self.sample_sizes.is_empty() {
            return bad("no sample sizes");
        }
        if self.init_modes.is_empty() {
            return bad("no init modes");
        }
        if self.grid.is_empty() {
            return bad("empty config grid");
        }
        if self.grid.archs.iter().any(|a| a.is_autoencoder()) {
            return bad("grid architectures must be classifiers");
        }
        if self.folds < 2 {
            return bad("at least 2 folds needed");
        }
        self.base.validate()?;
        Ok(())
    }

    fn configs(&self, init: InitMode) -> Vec<TrainConfig> {
        let base = TrainConfig {
            seed: self.seed,
            ..self.base.clone()
        };
        config_matrix(&base, init, &self.grid.archs, &self.grid.batch_sizes, &self.grid.epochs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeRuns {
    pub label: String,
    /// Test-half subjects in this sample.
    pub subjects: usize,
    /// Cross-validation results keyed by init mode name.
    pub runs: BTreeMap<String, CvResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecipeResults {
    pub recipe: RecipeName,
    /// Where the data came from, e.g. `synthetic`.
    pub provenance: String,
    pub n_classes: usize,
    pub selected: BTreeMap<String, TrainConfig>,
    pub grid: BTreeMap<String, GridResult>,
    pub sizes: Vec<SizeRuns>,
}

impl RecipeResults {
    pub const FILE: &'static str = "results.json";

    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join(Self::FILE);
        let text = std::fs::read_to_string(&p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => HarnessError::NoRuns,
            _ => e.into(),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Labeled data plus the pool used for pre-training.
pub struct RecipeInputs<'a> {
    pub manifest: &'a DatasetManifest,
    pub maps: &'a MapSet,
    pub pool: Option<&'a MapSet>,
    /// Pre-trained CAEs by autoencoder architecture; missing ones are
    /// trained on `pool`.
    pub checkpoints: BTreeMap<ArchId, Checkpoint>,
    pub provenance: String,
}

fn split(recipe: &ExperimentRecipe, m: &DatasetManifest, maps: &MapSet) -> Result<(DatasetManifest, MapSet, FoldPlan)> {
    let k = recipe.folds;
    match recipe.name {
        RecipeName::SmallBrainpedia => {
            let full = stratified_study_split(m, recipe.seed, k)?;
            let (small, plan) = build_small_brainpedia(&full, m, recipe.seed)?;
            let index: BTreeMap<&str, usize> = maps.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
            let rows: Vec<usize> = small.rows.iter().map(|r| index[r.image_id.as_str()]).collect();
            let sub = maps.subset(&rows).with_labels(small.label_indices()?, small.n_classes())?;
            Ok((small, sub, plan))
        }
        RecipeName::Brainpedia => Ok((m.clone(), maps.clone(), stratified_study_split(m, recipe.seed, k)?)),
        _ => Ok((m.clone(), maps.clone(), build_fold_plan(m, recipe.seed, k)?)),
    }
}

/// Nested test-half subsamples for every requested size, keyed by label.
fn subsamples(recipe: &ExperimentRecipe, plan: &FoldPlan) -> Result<Vec<(SampleSize, Option<FoldPlan>, usize)>> {
    let mut counts: Vec<usize> = recipe
        .sample_sizes
        .iter()
        .filter_map(|s| match s {
            SampleSize::Subjects(n) => Some(*n),
            SampleSize::Global(_) => None,
        })
        .collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    counts.dedup();
    let chain = nested_subsample(plan, Half::Test, &counts, recipe.seed).map_err(|e| HarnessError::Infeasible(e.to_string()))?;
    let by_size: BTreeMap<usize, FoldPlan> = counts.into_iter().zip(chain).collect();
    let global = plan.subjects(Half::Test).len();
    Ok(recipe
        .sample_sizes
        .iter()
        .map(|&s| match s {
            SampleSize::Subjects(n) => (s, Some(by_size[&n].clone()), n),
            SampleSize::Global(_) => (s, None, global),
        })
        .collect())
}

fn cae_config(recipe: &ExperimentRecipe, arch: ArchId) -> TrainConfig {
    TrainConfig {
        arch_id: arch,
        epochs: recipe.pretrain.epochs,
        batch_size: recipe.pretrain.batch_size,
        lr: recipe.pretrain.lr,
        seed: stream(recipe.seed, &format!("pretrain/{arch}")).next_u64(),
        init: InitMode::Default,
        ..recipe.base.clone()
    }
}

/// Runs `recipe` on prepared inputs, writing artifacts under `out`.
pub fn run_recipe_on(recipe: &ExperimentRecipe, inputs: RecipeInputs<'_>, out: &Path) -> Result<RecipeResults> {
    recipe.validate()?;
    if inputs.maps.dims() != recipe.base.input_dims {
        return Err(HarnessError::Recipe(format!(
            "maps are {:?} but the recipe expects {:?}",
            inputs.maps.dims(),
            recipe.base.input_dims
        )));
    }
    let root = RunDir::create(out)?;
    let root = if recipe.save_checkpoints { root } else { root.without_checkpoints() };
    root.write_json("recipe.json", recipe)?;
    let (manifest, maps, plan) = split(recipe, inputs.manifest, inputs.maps)?;
    root.write_json("fold_plan.json", &plan)?;
    let sizes = subsamples(recipe, &plan)?;
    for (s, sub, _) in &sizes {
        if let Some(p) = sub {
            root.write_json(&format!("fold_plan_{}.json", s.label()), p)?;
        }
    }

    let mut checkpoints = inputs.checkpoints;
    if recipe.init_modes.contains(&InitMode::Pretrained) {
        let pre = root.child("pretrain")?;
        for arch in recipe.grid.archs.iter().map(|a| a.autoencoder()) {
            if checkpoints.contains_key(&arch) {
                continue;
            }
            let pool = inputs.pool.ok_or_else(|| HarnessError::MissingCheckpoint(arch.to_string()))?;
            let cfg = cae_config(recipe, arch);
            log::info!("pre-training {arch} on {} pool maps", pool.len());
            let run = train_cae(pool, &cfg)?;
            pre.write_curve(&format!("{arch}_curve.csv"), &run.curve)?;
            run.checkpoint.save(pre.path().join(format!("{arch}.ckpt")))?;
            checkpoints.insert(arch, run.checkpoint);
        }
    }
    let cae_for = |a: ArchId| checkpoints.get(&a.autoencoder());

    let mut selected = BTreeMap::new();
    let mut grids = BTreeMap::new();
    for &init in &recipe.init_modes {
        let configs = recipe.configs(init);
        let best = if configs.len() == 1 {
            configs[0].clone()
        } else {
            let g = grid_search(&manifest, &maps, &CvFolds::within(&plan, Half::Validation), &configs, cae_for)?;
            let best = g.best_config().clone();
            grids.insert(init.as_str().to_string(), g);
            best
        };
        log::info!("{}: selected {}", init.as_str(), best.label());
        selected.insert(init.as_str().to_string(), best);
    }

    let mut results = Vec::new();
    for (size, sub, subjects) in &sizes {
        let folds = match sub {
            Some(p) => CvFolds::nested(p, &plan, Half::Test),
            None => CvFolds::within(&plan, Half::Test),
        };
        let mut runs = BTreeMap::new();
        for &init in &recipe.init_modes {
            let cfg = &selected[init.as_str()];
            let dir = root.child(&format!("cv/{}/{}", size.label(), init.as_str()))?;
            let res = crossval_run(&manifest, &maps, &folds, cfg, cae_for(cfg.arch_id), Some(&dir))?;
            log::info!("N={} {}: mean accuracy {:.3}", size.label(), init.as_str(), res.mean("accuracy"));
            runs.insert(init.as_str().to_string(), res);
        }
        results.push(SizeRuns {
            label: size.label(),
            subjects: *subjects,
            runs,
        });
    }
    let out = RecipeResults {
        recipe: recipe.name,
        provenance: inputs.provenance,
        n_classes: manifest.n_classes(),
        selected,
        grid: grids,
        sizes: results,
    };
    root.write_json(RecipeResults::FILE, &out)?;
    crate::report::render_report(&out)?.write(root.path())?;
    Ok(out)
}

/// Generates the labeled corpus and a disjoint pre-training pool from
/// `spec`, then runs `recipe`.
pub fn run_recipe(recipe: &ExperimentRecipe, spec: &SyntheticSpec, out: &Path) -> Result<RecipeResults> {
    let data = generate_synthetic(spec)?;
    let (manifest, maps) = data.view(recipe.name.view())?;
    let pool = if recipe.init_modes.contains(&InitMode::Pretrained) {
        let (pm, pmaps) = generate_pool(spec, recipe.pretrain.pool_maps, recipe.pretrain.pool_seed)?;
        assert_disjoint(&pm, &data.manifest)?;
        Some(pmaps)
    } else {
        None
    };
    run_recipe_on(
        recipe,
        RecipeInputs {
            manifest: &manifest,
            maps: &maps,
            pool: pool.as_ref(),
            checkpoints: BTreeMap::new(),
            provenance: "synthetic".into(),
        },
        out,
    )
}
