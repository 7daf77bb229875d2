use serde::{Deserialize, Serialize};

/// One row of a training curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// In-batch accuracy during the epoch (classifiers only).
    pub train_accuracy: Option<f64>,
    pub heldout_accuracy: Option<f64>,
    pub heldout_f1: Option<f64>,
}

impl EpochRecord {
    pub fn loss_only(epoch: usize, train_loss: f64) -> Self {
        Self {
            epoch,
            train_loss,
            train_accuracy: None,
            heldout_accuracy: None,
            heldout_f1: None,
        }
    }
}
