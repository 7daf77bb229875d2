use crate::error::{Result, TrainError};
use selftaught_models::{ArchId, ArchitecturePlan, PlanOptions, TransferMode};
use serde::{Deserialize, Serialize};

/// Batch sizes and epoch counts of the full-scale grid search.
pub const GRID_BATCH_SIZES: [usize; 2] = [32, 64];
pub const GRID_EPOCHS: [usize; 2] = [200, 500];
pub const DEFAULT_LR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Kaiming-uniform initialization.
    #[default]
    Default,
    /// Convolution stack copied from a pre-trained CAE.
    Pretrained,
}

impl InitMode {
    pub const BOTH: [InitMode; 2] = [InitMode::Default, InitMode::Pretrained];

    pub fn as_str(self) -> &'static str {
        match self {
            InitMode::Default => "default",
            InitMode::Pretrained => "pretrained",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transfer {
    #[default]
    WithNorm,
    ConvOnly,
}

impl From<Transfer> for TransferMode {
    fn from(t: Transfer) -> Self {
        match t {
            Transfer::WithNorm => TransferMode::WithNorm,
            Transfer::ConvOnly => TransferMode::ConvOnly,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub arch_id: ArchId,
    pub init: InitMode,
    pub transfer: Transfer,
    pub seed: u64,
    pub shuffle: bool,
    /// Held-out evaluation period in epochs; 0 evaluates only after the
    /// final epoch.
    pub eval_every: usize,
    pub input_dims: [usize; 3],
    pub width_divisor: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let plan = PlanOptions::default();
        Self {
            batch_size: GRID_BATCH_SIZES[0],
            epochs: GRID_EPOCHS[0],
            lr: DEFAULT_LR,
            arch_id: ArchId::Cnn4,
            init: InitMode::Default,
            transfer: Transfer::WithNorm,
            seed: 0,
            shuffle: true,
            eval_every: 0,
            input_dims: plan.input_dims,
            width_divisor: plan.width_divisor,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::Config(format!("learning rate {} is not positive", self.lr)));
        }
        if self.width_divisor == 0 {
            return Err(TrainError::Config("width_divisor must be positive".into()));
        }
        Ok(())
    }

    pub fn plan_options(&self) -> PlanOptions {
        PlanOptions {
            input_dims: self.input_dims,
            width_divisor: self.width_divisor,
            ..PlanOptions::default()
        }
    }

    /// Plan for `arch_id`; classifiers get `n_classes` outputs.
    pub fn plan(&self, n_classes: usize) -> Result<ArchitecturePlan> {
        let opts = self.plan_options();
        let plan = if self.arch_id.is_autoencoder() {
            ArchitecturePlan::cae(self.arch_id.depth(), opts)?
        } else {
            ArchitecturePlan::cnn(self.arch_id.depth(), n_classes, opts)?
        };
        Ok(plan)
    }

    /// Short identifier used for run directories and grid reports.
    pub fn label(&self) -> String {
        format!("{}-b{}-e{}", self.arch_id, self.batch_size, self.epochs)
    }
}
