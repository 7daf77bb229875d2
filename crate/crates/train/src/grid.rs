use crate::config::{InitMode, TrainConfig};
use crate::cv::{crossval_run, CvFolds};
use crate::data::MapSet;
use crate::error::{Result, TrainError};
use selftaught_core::nn::Checkpoint;
use selftaught_curation::DatasetManifest;
use selftaught_models::ArchId;
use serde::{Deserialize, Serialize};

/// Every `(arch, batch, epochs)` combination on top of `base`, for one
/// init mode.
pub fn config_matrix(
    base: &TrainConfig,
    init: InitMode,
    archs: &[ArchId],
    batch_sizes: &[usize],
    epochs: &[usize],
) -> Vec<TrainConfig> {
    let mut out = Vec::new();
    for &arch_id in archs {
        for &batch_size in batch_sizes {
            for &e in epochs {
                out.push(TrainConfig {
                    arch_id,
                    batch_size,
                    epochs: e,
                    init,
                    ..base.clone()
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub config: TrainConfig,
    pub mean_accuracy: f64,
    pub mean_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub entries: Vec<GridEntry>,
    pub best: usize,
}

impl GridResult {
    pub fn best_config(&self) -> &TrainConfig {
        &self.entries[self.best].config
    }
}

/// Index of the best entry by mean accuracy, then mean F1; the earliest
/// entry wins full ties.
pub fn select_best(entries: &[GridEntry]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let o = &entries[b];
                e.mean_accuracy > o.mean_accuracy || (e.mean_accuracy == o.mean_accuracy && e.mean_f1 > o.mean_f1)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Cross-validates every config and picks the best one. `cae_for` supplies
/// the pre-trained checkpoint matching a classifier architecture.
pub fn grid_search<'c>(
    manifest: &DatasetManifest,
    maps: &MapSet,
    folds: &CvFolds<'_>,
    configs: &[TrainConfig],
    cae_for: impl Fn(ArchId) -> Option<&'c Checkpoint>,
) -> Result<GridResult> {
    let mut entries = Vec::with_capacity(configs.len());
    for cfg in configs {
        let cv = crossval_run(manifest, maps, folds, cfg, cae_for(cfg.arch_id), None)?;
        entries.push(GridEntry {
            config: cfg.clone(),
            mean_accuracy: cv.mean("accuracy"),
            mean_f1: cv.mean("f1"),
        });
    }
    let best = select_best(&entries).ok_or_else(|| TrainError::Config("empty config grid".into()))?;
    Ok(GridResult { entries, best })
}
