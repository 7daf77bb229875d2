use crate::cae::{init_network, tagged_checkpoint, EVAL_BATCH};
use crate::config::{InitMode, TrainConfig};
use crate::data::MapSet;
use crate::engine::{argmax_rows, optimize};
use crate::error::{Result, TrainError};
use crate::record::EpochRecord;
use selftaught_core::nn::Checkpoint;
use selftaught_core::Tape;
use selftaught_models::Network;
use selftaught_splits::stream;
use selftaught_stats::{classification_metrics, ClassificationMetrics};

#[derive(Clone, Debug)]
pub struct ClassifierRun {
    pub network: Network<f32>,
    pub checkpoint: Checkpoint,
    pub curve: Vec<EpochRecord>,
    /// Mean cross-entropy over the training set before any update.
    pub initial_loss: f64,
    pub warnings: Vec<String>,
}

/// Classifier for `cfg`, freshly initialized or transferred from `cae`.
pub fn build_classifier(cfg: &TrainConfig, n_classes: usize, cae: Option<&Checkpoint>) -> Result<Network<f32>> {
    if cfg.arch_id.is_autoencoder() {
        return Err(TrainError::Config(format!("{} is not a classifier", cfg.arch_id)));
    }
    match cfg.init {
        InitMode::Default => init_network(cfg, n_classes),
        InitMode::Pretrained => {
            let ck = cae.ok_or(TrainError::MissingCheckpoint)?;
            let plan = cfg.plan(n_classes)?;
            Ok(Network::from_cae(plan, ck, cfg.transfer.into(), &mut stream(cfg.seed, "init"))?)
        }
    }
}

/// Predictions and macro metrics in evaluation mode. Running statistics
/// are left untouched.
pub fn evaluate_classifier(net: &mut Network<f32>, maps: &MapSet) -> Result<(Vec<usize>, ClassificationMetrics)> {
    let truths = maps.batch_labels(&(0..maps.len()).collect::<Vec<_>>())?;
    if maps.is_empty() {
        return Err(TrainError::Empty("evaluation set".into()));
    }
    let was_training = net.is_training();
    net.set_training(false);
    let k = maps.n_classes();
    let mut preds = Vec::with_capacity(maps.len());
    let all: Vec<usize> = (0..maps.len()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let (logits, _) = net.infer(&maps.batch(chunk))?;
        preds.extend(argmax_rows(logits.data(), k));
    }
    net.set_training(was_training);
    let metrics = classification_metrics(&preds, &truths, k)?;
    Ok((preds, metrics))
}

/// Mean train-mode cross-entropy of `net` on `data` without touching its
/// running statistics.
fn untrained_loss(net: &Network<f32>, data: &MapSet, cfg: &TrainConfig) -> Result<f64> {
    let mut probe = net.clone();
    probe.set_training(true);
    let mut total = 0.0;
    for idx in crate::batch::epoch_batches(data.len(), cfg.batch_size, false, cfg.seed, 0) {
        let mut tape = Tape::new();
        let x = tape.constant(data.batch(&idx))?;
        let pass = probe.forward(&mut tape, x)?;
        let loss = tape.cross_entropy(pass.output, &data.batch_labels(&idx)?)?;
        total += tape.value(loss).data()[0] as f64 * idx.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Trains a classifier with cross-entropy on `train`. With `heldout`,
/// accuracy and F1 are recorded every `cfg.eval_every` epochs and after
/// the last one.
pub fn train_classifier(
    train: &MapSet,
    cfg: &TrainConfig,
    cae: Option<&Checkpoint>,
    heldout: Option<&MapSet>,
) -> Result<ClassifierRun> {
    cfg.validate()?;
    let labels = train.labels().ok_or(TrainError::Unlabeled)?;
    let k = train.n_classes();
    if k < 2 {
        return Err(TrainError::Config(format!("{k} classes; at least 2 needed")));
    }
    let mut warnings = Vec::new();
    for c in 0..k {
        if !labels.contains(&c) {
            let w = format!("class {c} is absent from the training set");
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    let mut network = build_classifier(cfg, k, cae)?;
    let initial_loss = untrained_loss(&network, train, cfg)?;
    let mut curve = Vec::with_capacity(cfg.epochs);
    optimize(
        &mut network,
        train,
        cfg,
        |tape, ctx| {
            let targets = train.batch_labels(ctx.indices)?;
            let loss = tape.cross_entropy(ctx.pass.output, &targets)?;
            let preds = argmax_rows(tape.value(ctx.pass.output).data(), k);
            let correct = preds.iter().zip(&targets).filter(|(p, t)| p == t).count();
            Ok((loss, correct))
        },
        |epoch, stats, net| {
            let mut rec = EpochRecord::loss_only(epoch, stats.loss);
            rec.train_accuracy = Some(stats.correct as f64 / stats.seen as f64);
            let due = epoch == cfg.epochs || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0);
            if let (Some(h), true) = (heldout, due) {
                let (_, m) = evaluate_classifier(net, h)?;
                rec.heldout_accuracy = Some(m.accuracy);
                rec.heldout_f1 = Some(m.f1_macro);
            }
            log::debug!("classifier epoch {epoch}: loss {:.6}", stats.loss);
            curve.push(rec);
            Ok(())
        },
    )?;
    let mut checkpoint = tagged_checkpoint(&network, cfg)?;
    checkpoint.metadata.insert("init".into(), cfg.init.as_str().into());
    Ok(ClassifierRun {
        network,
        checkpoint,
        curve,
        initial_loss,
        warnings,
    })
}

/// FNV-1a over the bit patterns of every normalization running buffer.
pub fn norm_buffer_checksum(net: &Network<f32>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (name, t) in net.named_tensors() {
        if name.contains("running_") {
            for v in t.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
    }
    h
}
