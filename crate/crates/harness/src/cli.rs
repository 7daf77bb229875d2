use crate::config::AppConfig;
use crate::error::{HarnessError, Result};
use crate::recipe::{run_recipe, RecipeName, RecipeResults};
use crate::report::render_report;
use crate::synth::{assert_disjoint, generate_pool, generate_synthetic};
use clap::{Args, Parser, Subcommand, ValueEnum};
use selftaught_core::nn::Checkpoint;
use selftaught_curation::{fetch_metadata_pages, filter_pretraining_maps, parse_jsonl, DatasetManifest, PageSource, RetryPolicy};
use selftaught_models::ArchId;
use selftaught_splits::{build_fold_plan, FoldPlan, Half};
use selftaught_train::{crossval_run, train_cae, train_classifier, CvFolds, InitMode, MapSet, RunDir, TrainConfig};
use selftaught_volume::{ellipsoid_mask, preprocess, save_volb, Volume};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "selftaught", version, about = "Self-taught learning on 3D statistic maps")]
pub struct Cli {
    /// Seed for every random stream (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Disable parallel kernels for bit-reproducible runs.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// TOML config with [synthetic], [train] and [recipe] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for batch math.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch metadata and filter it into a pre-training manifest.
    Curate(CurateArgs),
    /// Resample, normalize and mask the volumes of a manifest.
    Preprocess(PreprocessArgs),
    /// Write a synthetic labeled corpus and a disjoint unlabeled pool.
    Synth(SynthArgs),
    /// Train a CAE on an unlabeled manifest.
    Pretrain(TrainArgs),
    /// Train a classifier on a labeled manifest.
    Finetune(TrainArgs),
    /// Subject-aware k-fold cross-validation of a classifier.
    Cv(CvArgs),
    /// Run an experiment recipe on synthetic data.
    Recipe(RecipeArgs),
    /// Re-render reports from a recipe's results.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Directory of recorded `page_NNNN.json` files.
    #[arg(long, conflicts_with_all = ["jsonl", "endpoint"])]
    pub pages: Option<PathBuf>,
    /// One JSON record per line.
    #[arg(long, conflicts_with = "endpoint")]
    pub jsonl: Option<PathBuf>,
    /// Live paginated endpoint.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Record live pages here for offline replay.
    #[arg(long)]
    pub record_to: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub page_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory relative file paths resolve against (default: the
    /// manifest's directory).
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, num_args = 3, value_names = ["D", "H", "W"])]
    pub dims: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.95)]
    pub mask_fill: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Unlabeled pool size (default: the recipe's pre-training pool).
    #[arg(long)]
    pub pool: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// CAE checkpoint for pre-trained initialization.
    #[arg(long)]
    pub cae: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum HalfArg {
    Validation,
    Test,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Fold plan JSON (default: a fresh subject-level plan).
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "validation")]
    pub half: HalfArg,
}

#[derive(Debug, Args)]
pub struct RecipeArgs {
    /// Recipe name (default: the config's recipe).
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Recipe output directory holding `results.json`.
    #[arg(long)]
    pub results: PathBuf,
    /// Where to write reports (default: the results directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.deterministic {
        selftaught_core::set_parallel(false);
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    match cli.command {
        Command::Curate(a) => curate(a),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Synth(a) => synth(&cfg, a),
        Command::Pretrain(a) => pretrain(&cfg, a),
        Command::Finetune(a) => finetune(&cfg, a),
        Command::Cv(a) => cv(&cfg, a),
        Command::Recipe(a) => recipe(cfg, a),
        Command::Report(a) => report(a),
    }
}

fn curate(a: CurateArgs) -> Result<()> {
    let records = match (&a.pages, &a.jsonl, &a.endpoint) {
        (Some(dir), _, _) => fetch_metadata_pages(&PageSource::Offline { dir: dir.clone() }, a.page_size)?.records,
        (_, Some(file), _) => parse_jsonl(&std::fs::read_to_string(file)?),
        (_, _, Some(url)) => {
            let source = PageSource::Live {
                endpoint: url.clone(),
                retry: RetryPolicy::default(),
                record_to: a.record_to.clone(),
            };
            fetch_metadata_pages(&source, a.page_size)?.records
        }
        _ => return Err(HarnessError::Config("one of --pages, --jsonl or --endpoint is required".into())),
    };
    let (manifest, report) = filter_pretraining_maps(records);
    manifest.save(&a.out)?;
    let rejections: serde_json::Map<String, serde_json::Value> =
        report.rejections.iter().map(|(c, n)| (c.name().to_string(), (*n).into())).collect();
    let summary = serde_json::json!({
        "total": report.total,
        "kept": report.kept,
        "rejections": rejections,
    });
    let mut p = a.out.clone().into_os_string();
    p.push(".report.json");
    std::fs::write(&p, serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("kept {} of {} records", report.kept, report.total);
    Ok(())
}

fn base_dir(manifest: &Path, base: &Option<PathBuf>) -> PathBuf {
    base.clone()
        .unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn preprocess_cmd(a: PreprocessArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let base = base_dir(&a.manifest, &a.base);
    let dims: [usize; 3] = match &a.dims {
        Some(d) => [d[0], d[1], d[2]],
        None => selftaught_volume::DEFAULT_TARGET_DIMS,
    };
    let spec = crate::synth::SyntheticSpec {
        dims,
        mask_fill: a.mask_fill,
        ..Default::default()
    };
    let affine = spec.affine();
    let mask = ellipsoid_mask(dims, affine, a.mask_fill)?;
    std::fs::create_dir_all(a.out.join("maps"))?;
    let mut out = manifest.clone();
    for row in &mut out.rows {
        let rel = row
            .file_path
            .clone()
            .ok_or_else(|| HarnessError::Config(format!("row {} has no file_path", row.image_id)))?;
        let src = selftaught_volume::load_volume(base.join(rel))?;
        let v = preprocess(&src, dims, &affine, &mask)?;
        let name = format!("maps/{}.volb", row.image_id);
        save_volb(&v, a.out.join(&name))?;
        row.file_path = Some(name);
    }
    out.save(a.out.join("manifest.csv"))?;
    println!("preprocessed {} volumes", out.len());
    Ok(())
}

fn write_maps(dir: &Path, manifest: &DatasetManifest, maps: &MapSet, affine: selftaught_volume::Affine) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir.join("maps"))?;
    let mut out = manifest.clone();
    for (i, row) in out.rows.iter_mut().enumerate() {
        let name = format!("maps/{}.volb", row.image_id);
        let v = Volume::new(maps.dims(), affine, maps.map(i).to_vec())?;
        save_volb(&v, dir.join(&name))?;
        row.file_path = Some(name);
    }
    Ok(out)
}

fn synth(cfg: &AppConfig, a: SynthArgs) -> Result<()> {
    let spec = &cfg.synthetic;
    let data = generate_synthetic(spec)?;
    let n_pool = a.pool.unwrap_or(cfg.recipe.pretrain.pool_maps);
    let (pool_m, pool_maps) = generate_pool(spec, n_pool, cfg.recipe.pretrain.pool_seed)?;
    assert_disjoint(&pool_m, &data.manifest)?;
    let labeled = write_maps(&a.out.join("labeled"), &data.manifest, &data.maps, spec.affine())?;
    labeled.save(a.out.join("labeled/manifest.csv"))?;
    let pool = write_maps(&a.out.join("pool"), &pool_m, &pool_maps, spec.affine())?;
    pool.save(a.out.join("pool/manifest.csv"))?;
    std::fs::write(a.out.join("spec.json"), serde_json::to_string_pretty(spec)? + "\n")?;
    println!("wrote {} labeled and {} pool maps", labeled.len(), pool.len());
    Ok(())
}

fn load_maps(manifest_path: &Path, base: &Option<PathBuf>, dims: [usize; 3]) -> Result<(DatasetManifest, MapSet)> {
    let m = DatasetManifest::load(manifest_path)?;
    let base = base_dir(manifest_path, base);
    let maps = MapSet::from_manifest(&m, &base, dims)?;
    Ok((m, maps))
}

fn train_config(cfg: &AppConfig, a: &TrainArgs, default_arch: ArchId) -> Result<TrainConfig> {
    let mut t = cfg.train.clone();
    t.arch_id = match &a.arch {
        Some(s) => ArchId::parse(s).ok_or_else(|| HarnessError::Config(format!("unknown architecture {s}")))?,
        None if t.arch_id.is_autoencoder() == default_arch.is_autoencoder() => t.arch_id,
        None => default_arch,
    };
    if let Some(e) = a.epochs {
        t.epochs = e;
    }
    if let Some(b) = a.batch_size {
        t.batch_size = b;
    }
    if a.cae.is_some() {
        t.init = InitMode::Pretrained;
    }
    t.validate()?;
    Ok(t)
}

fn load_cae(a: &TrainArgs) -> Result<Option<Checkpoint>> {
    a.cae.as_ref().map(|p| Checkpoint::load(p).map_err(HarnessError::from)).transpose()
}

fn pretrain(cfg: &AppConfig, a: TrainArgs) -> Result<()> {
    let t = train_config(cfg, &a, ArchId::Cae4)?;
    if !t.arch_id.is_autoencoder() {
        return Err(HarnessError::Config(format!("{} is not an autoencoder", t.arch_id)));
    }
    let (_, maps) = load_maps(&a.manifest, &a.base, t.input_dims)?;
    let run = train_cae(&maps, &t)?;
    let dir = RunDir::create(&a.out)?;
    dir.write_json("config.json", &t)?;
    dir.write_curve("curve.csv", &run.curve)?;
    dir.write_checkpoint("model.ckpt", &run.checkpoint)?;
    println!("final loss {:.6}", run.losses().last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn finetune(cfg: &AppConfig, a: TrainArgs) -> Result<()> {
    let t = train_config(cfg, &a, ArchId::Cnn4)?;
    let (_, maps) = load_maps(&a.manifest, &a.base, t.input_dims)?;
    let cae = load_cae(&a)?;
    let run = train_classifier(&maps, &t, cae.as_ref(), None)?;
    let dir = RunDir::create(&a.out)?;
    dir.write_json("config.json", &t)?;
    dir.write_curve("curve.csv", &run.curve)?;
    dir.write_checkpoint("model.ckpt", &run.checkpoint)?;
    println!("final loss {:.6}", run.curve.last().map_or(f64::NAN, |r| r.train_loss));
    Ok(())
}

fn cv(cfg: &AppConfig, a: CvArgs) -> Result<()> {
    let t = train_config(cfg, &a.train, ArchId::Cnn4)?;
    let (m, maps) = load_maps(&a.train.manifest, &a.train.base, t.input_dims)?;
    let plan = match &a.plan {
        Some(p) => FoldPlan::load(p)?,
        None => build_fold_plan(&m, t.seed, cfg.recipe.folds)?,
    };
    let half = match a.half {
        HalfArg::Validation => Half::Validation,
        HalfArg::Test => Half::Test,
    };
    let cae = load_cae(&a.train)?;
    let dir = RunDir::create(&a.train.out)?;
    let res = crossval_run(&m, &maps, &CvFolds::within(&plan, half), &t, cae.as_ref(), Some(&dir))?;
    for s in res.scores(t.init.as_str()) {
        let (mean, sem) = s.mean_sem()?;
        println!("{}: {}", s.metric, selftaught_stats::format_mean_sem(100.0 * mean, 100.0 * sem));
    }
    Ok(())
}

fn recipe(cfg: AppConfig, a: RecipeArgs) -> Result<()> {
    let mut r = cfg.recipe;
    if let Some(n) = &a.name {
        r.name = RecipeName::parse(n).ok_or_else(|| HarnessError::Config(format!("unknown recipe {n}")))?;
    }
    r.base.input_dims = cfg.synthetic.dims;
    let res = run_recipe(&r, &cfg.synthetic, &a.out)?;
    print!("{}", render_report(&res)?.text);
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let res = RecipeResults::load(&a.results)?;
    let rep = render_report(&res)?;
    rep.write(a.out.as_deref().unwrap_or(&a.results))?;
    print!("{}", rep.text);
    Ok(())
}
