use crate::classifier::{evaluate_classifier, train_classifier};
use crate::config::TrainConfig;
use crate::data::MapSet;
use crate::error::{Result, TrainError};
use crate::record::EpochRecord;
use crate::rundir::RunDir;
use rand::RngCore;
use selftaught_core::nn::Checkpoint;
use selftaught_curation::DatasetManifest;
use selftaught_splits::{assert_no_leakage, stream, FoldPlan, Half};
use selftaught_stats::{ClassificationMetrics, FoldScores};
use serde::{Deserialize, Serialize};

/// Where training and evaluation rows for each fold come from. Training
/// uses every fold but `i` of `train_plan`; evaluation uses fold `i` of
/// `eval_plan`.
#[derive(Clone, Copy, Debug)]
pub struct CvFolds<'a> {
    pub train_plan: &'a FoldPlan,
    pub train_half: Half,
    pub eval_plan: &'a FoldPlan,
    pub eval_half: Half,
}

impl<'a> CvFolds<'a> {
    pub fn within(plan: &'a FoldPlan, half: Half) -> Self {
        Self {
            train_plan: plan,
            train_half: half,
            eval_plan: plan,
            eval_half: half,
        }
    }

    /// Train on a nested subsample, evaluate on the matching fold of the
    /// plan it was drawn from.
    pub fn nested(subsample: &'a FoldPlan, global: &'a FoldPlan, half: Half) -> Self {
        Self {
            train_plan: subsample,
            train_half: half,
            eval_plan: global,
            eval_half: half,
        }
    }

    pub fn k(&self) -> usize {
        self.train_plan.k
    }

    /// `(fold, train rows, eval rows)` for every fold, leakage-checked.
    pub fn resolve(&self, manifest: &DatasetManifest) -> Result<Vec<(usize, Vec<usize>, Vec<usize>)>> {
        if self.train_plan.k != self.eval_plan.k {
            return Err(TrainError::Config(format!(
                "train plan has {} folds, eval plan {}",
                self.train_plan.k, self.eval_plan.k
            )));
        }
        let mut out = Vec::with_capacity(self.k());
        for (train_folds, held) in self.train_plan.cv_folds() {
            let train = self.train_plan.rows(manifest, self.train_half, &train_folds)?;
            let eval = self.eval_plan.rows(manifest, self.eval_half, &[held])?;
            if train.is_empty() || eval.is_empty() {
                return Err(TrainError::EmptyFold(held));
            }
            assert_no_leakage(manifest, self.train_plan.keying, &train, &eval)?;
            out.push((held, train, eval));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRun {
    pub fold: usize,
    pub train_maps: usize,
    pub eval_maps: usize,
    pub initial_loss: f64,
    pub metrics: ClassificationMetrics,
    pub curve: Vec<EpochRecord>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub config: TrainConfig,
    /// Ordered by fold index.
    pub folds: Vec<FoldRun>,
}

pub const METRICS: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

impl CvResult {
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.folds
            .iter()
            .map(|f| match metric {
                "accuracy" => f.metrics.accuracy,
                "precision" => f.metrics.precision_macro,
                "recall" => f.metrics.recall_macro,
                "f1" => f.metrics.f1_macro,
                other => panic!("unknown metric {other}"),
            })
            .collect()
    }

    pub fn scores(&self, model: &str) -> Vec<FoldScores> {
        METRICS.iter().map(|m| FoldScores::new(*m, model, self.values(m))).collect()
    }

    pub fn mean(&self, metric: &str) -> f64 {
        selftaught_stats::mean(&self.values(metric))
    }
}

/// Seed for fold `fold` of a run seeded with `seed`. Both init modes of
/// one fold share it.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    stream(seed, &format!("fold/{fold}")).next_u64()
}

/// Trains one classifier per fold and evaluates it on the held-out fold.
/// All folds are resolved and leakage-checked before any training starts.
pub fn crossval_run(
    manifest: &DatasetManifest,
    maps: &MapSet,
    folds: &CvFolds<'_>,
    cfg: &TrainConfig,
    cae: Option<&Checkpoint>,
    out: Option<&RunDir>,
) -> Result<CvResult> {
    if maps.len() != manifest.len() {
        return Err(TrainError::Config(format!(
            "{} maps for {} manifest rows",
            maps.len(),
            manifest.len()
        )));
    }
    let resolved = folds.resolve(manifest)?;
    if let Some(d) = out {
        d.write_json("config.json", cfg)?;
        d.write_json("train_plan.json", folds.train_plan)?;
        d.write_json("eval_plan.json", folds.eval_plan)?;
    }
    let mut runs = Vec::with_capacity(resolved.len());
    for (fold, train_rows, eval_rows) in resolved {
        let fold_cfg = TrainConfig {
            seed: fold_seed(cfg.seed, fold),
            ..cfg.clone()
        };
        let train = maps.subset(&train_rows);
        let eval = maps.subset(&eval_rows);
        let mut run = train_classifier(&train, &fold_cfg, cae, None)?;
        let (_, metrics) = evaluate_classifier(&mut run.network, &eval)?;
        log::info!(
            "{} {} fold {fold}: accuracy {:.3}",
            cfg.label(),
            cfg.init.as_str(),
            metrics.accuracy
        );
        let fr = FoldRun {
            fold,
            train_maps: train.len(),
            eval_maps: eval.len(),
            initial_loss: run.initial_loss,
            metrics,
            curve: run.curve,
            warnings: run.warnings,
        };
        if let Some(d) = out {
            let fd = d.child(&format!("fold_{fold}"))?;
            fd.write_curve("curve.csv", &fr.curve)?;
            fd.write_json("metrics.json", &fr.metrics)?;
            fd.write_checkpoint("model.ckpt", &run.checkpoint)?;
        }
        runs.push(fr);
    }
    let result = CvResult {
        config: cfg.clone(),
        folds: runs,
    };
    if let Some(d) = out {
        d.write_json("cv.json", &result)?;
    }
    Ok(result)
}
