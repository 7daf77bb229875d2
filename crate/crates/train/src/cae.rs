use crate::config::TrainConfig;
use crate::data::MapSet;
use crate::engine::optimize;
use crate::error::{Result, TrainError};
use crate::record::EpochRecord;
use selftaught_core::nn::Checkpoint;
use selftaught_core::Tensor;
use selftaught_models::Network;
use selftaught_splits::stream;
use selftaught_stats::{format_mean_sem, mean_sem, pearson_r_masked, StatsError};

/// Maps per inference batch during evaluation.
pub const EVAL_BATCH: usize = 8;

#[derive(Clone, Debug)]
pub struct CaeRun {
    pub network: Network<f32>,
    pub checkpoint: Checkpoint,
    pub curve: Vec<EpochRecord>,
}

impl CaeRun {
    pub fn losses(&self) -> Vec<f64> {
        self.curve.iter().map(|r| r.train_loss).collect()
    }
}

/// Checkpoint of `net` tagged with the run's configuration and the
/// normalization mode its buffers are meant for.
pub fn tagged_checkpoint(net: &Network<f32>, cfg: &TrainConfig) -> Result<Checkpoint> {
    let mut ck = net.to_checkpoint()?;
    ck.metadata.insert("norm_mode".into(), "eval".into());
    ck.metadata.insert("config".into(), serde_json::to_string(cfg)?);
    Ok(ck)
}

pub(crate) fn init_network(cfg: &TrainConfig, n_classes: usize) -> Result<Network<f32>> {
    Ok(Network::new(cfg.plan(n_classes)?, &mut stream(cfg.seed, "init"))?)
}

/// Trains a CAE to reconstruct `train` under MSE.
pub fn train_cae(train: &MapSet, cfg: &TrainConfig) -> Result<CaeRun> {
    cfg.validate()?;
    if !cfg.arch_id.is_autoencoder() {
        return Err(TrainError::Config(format!("{} is not an autoencoder", cfg.arch_id)));
    }
    if train.dims() != cfg.input_dims {
        return Err(TrainError::Dims {
            id: train.ids().first().cloned().unwrap_or_default(),
            expected: cfg.input_dims,
            found: train.dims(),
        });
    }
    let mut network = init_network(cfg, 0)?;
    let mut curve = Vec::with_capacity(cfg.epochs);
    optimize(
        &mut network,
        train,
        cfg,
        |tape, ctx| Ok((tape.mse_loss(ctx.pass.output, ctx.input)?, 0)),
        |epoch, stats, _| {
            log::debug!("cae epoch {epoch}: loss {:.6}", stats.loss);
            curve.push(EpochRecord::loss_only(epoch, stats.loss));
            Ok(())
        },
    )?;
    network.set_training(false);
    let checkpoint = tagged_checkpoint(&network, cfg)?;
    Ok(CaeRun {
        network,
        checkpoint,
        curve,
    })
}

/// Anything that maps a `(N, 1, D, H, W)` batch to a same-shaped
/// reconstruction.
pub trait Reconstructor {
    fn reconstruct(&mut self, batch: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Reconstructor for Network<f32> {
    fn reconstruct(&mut self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.set_training(false);
        Ok(self.infer(batch)?.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaeEval {
    /// Per-map correlation; `None` where it is undefined.
    pub per_map: Vec<Option<f64>>,
    pub mean: f64,
    pub sem: f64,
    pub undefined: usize,
}

impl CaeEval {
    /// Correlation as a percentage with its sem, e.g. `86.9 (0.18)`.
    pub fn summary(&self) -> String {
        format_mean_sem(100.0 * self.mean, 100.0 * self.sem)
    }
}

/// Pearson correlation between each map and its reconstruction over the
/// mask voxels (all voxels when `maps` carries no mask).
pub fn evaluate_cae<R: Reconstructor + ?Sized>(model: &mut R, maps: &MapSet) -> Result<CaeEval> {
    if maps.is_empty() {
        return Err(TrainError::Empty("evaluation set".into()));
    }
    let full = vec![1.0f32; maps.voxels()];
    let mask = maps.mask().unwrap_or(&full);
    let mut per_map = Vec::with_capacity(maps.len());
    let all: Vec<usize> = (0..maps.len()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let batch = maps.batch(chunk);
        let recon = model.reconstruct(&batch)?;
        if recon.shape() != batch.shape() {
            return Err(TrainError::Config(format!(
                "reconstruction shape {:?} differs from input {:?}",
                recon.shape(),
                batch.shape()
            )));
        }
        for (j, &i) in chunk.iter().enumerate() {
            let v = maps.voxels();
            match pearson_r_masked(maps.map(i), &recon.data()[j * v..(j + 1) * v], mask) {
                Ok(r) => per_map.push(Some(r)),
                Err(StatsError::Constant) => {
                    log::warn!("map {}: correlation undefined, excluded", maps.ids()[i]);
                    per_map.push(None);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    let defined: Vec<f64> = per_map.iter().flatten().copied().collect();
    let undefined = per_map.len() - defined.len();
    if defined.is_empty() {
        return Err(TrainError::Empty("no map has a defined correlation".into()));
    }
    let (mean, sem) = if defined.len() == 1 { (defined[0], 0.0) } else { mean_sem(&defined)? };
    Ok(CaeEval {
        per_map,
        mean,
        sem,
        undefined,
    })
}
