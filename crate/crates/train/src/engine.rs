//! Shared optimization loop: one tape per batch, Adam over every parameter.

use crate::batch::epoch_batches;
use crate::config::TrainConfig;
use crate::data::MapSet;
use crate::error::{Result, TrainError};
use selftaught_core::nn::{Adam, AdamConfig};
use selftaught_core::{Tape, TensorError, Var};
use selftaught_models::{ForwardPass, ModelError, Network};

/// Per-batch context handed to the loss closure.
pub(crate) struct BatchCtx<'a> {
    pub input: Var,
    pub pass: &'a ForwardPass,
    pub indices: &'a [usize],
}

pub(crate) struct EpochStats {
    pub loss: f64,
    pub correct: usize,
    pub seen: usize,
}

/// Runs `cfg.epochs` epochs over `data`. `loss_fn` returns the batch loss
/// and the number of correct predictions (0 for regression).
/// `after_epoch` sees the 1-based epoch number and its statistics.
pub(crate) fn optimize(
    net: &mut Network<f32>,
    data: &MapSet,
    cfg: &TrainConfig,
    mut loss_fn: impl FnMut(&mut Tape<f32>, &BatchCtx<'_>) -> Result<(Var, usize)>,
    mut after_epoch: impl FnMut(usize, &EpochStats, &mut Network<f32>) -> Result<()>,
) -> Result<()> {
    if data.is_empty() {
        return Err(TrainError::Empty("training set".into()));
    }
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    net.set_training(true);
    for epoch in 0..cfg.epochs {
        let mut stats = EpochStats {
            loss: 0.0,
            correct: 0,
            seen: 0,
        };
        for (b, idx) in epoch_batches(data.len(), cfg.batch_size, cfg.shuffle, cfg.seed, epoch)
            .iter()
            .enumerate()
        {
            let at = |e: TrainError| match e {
                TrainError::Tensor(TensorError::NonFinite { op })
                | TrainError::Model(ModelError::Tensor(TensorError::NonFinite { op })) => {
                    TrainError::NonFiniteLoss { epoch: epoch + 1, batch: b, op }
                }
                other => other,
            };
            let mut tape = Tape::new();
            let (value, correct) = (|| -> Result<(f64, usize)> {
                let input = tape.constant(data.batch(idx))?;
                let pass = net.forward(&mut tape, input)?;
                let ctx = BatchCtx {
                    input,
                    pass: &pass,
                    indices: idx,
                };
                let (loss, correct) = loss_fn(&mut tape, &ctx)?;
                let value = tape.value(loss).data()[0] as f64;
                if !value.is_finite() {
                    return Err(TensorError::NonFinite { op: "loss" }.into());
                }
                tape.backward(loss)?;
                let grads: Vec<_> = pass.params.iter().map(|&p| tape.grad(p)).collect();
                adam.step(&mut net.params_mut(), &grads)?;
                Ok((value, correct))
            })()
            .map_err(at)?;
            stats.loss += value * idx.len() as f64;
            stats.correct += correct;
            stats.seen += idx.len();
        }
        stats.loss /= stats.seen as f64;
        after_epoch(epoch + 1, &stats, net)?;
        net.set_training(true);
    }
    net.set_training(false);
    Ok(())
}

/// Row-wise argmax of `(N, K)` logits.
pub(crate) fn argmax_rows(values: &[f32], k: usize) -> Vec<usize> {
    values
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect()
}
