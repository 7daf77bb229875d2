//! Layers, initializers, optimizer and parameter checkpoints.

mod adam;
mod checkpoint;
mod init;
mod layers;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use init::{fan_in, kaiming_bound, kaiming_uniform, uniform_bias, DEFAULT_KAIMING_A};
pub use layers::{Activation, BatchNorm3d, Conv3d, ConvTranspose3d, Linear, DEFAULT_LEAKY_SLOPE};
