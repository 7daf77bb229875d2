//! Convolutional autoencoder and classifier architectures built from
//! declarative plans, plus encoder-to-classifier weight transfer.

mod error;
mod network;
mod plan;

pub use error::{ModelError, Result};
pub use network::{ForwardPass, Network, TransferMode};
pub use plan::{
    plan_shapes, ActivationSpec, ArchId, ArchitecturePlan, LayerKind, LayerShape, LayerSpec,
    PlanOptions, OutputActivation, FULL_INPUT_DIMS,
};
