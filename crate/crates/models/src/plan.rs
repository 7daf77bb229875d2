//! Architecture plans: the single source of truth for layer configuration
//! and shape arithmetic.

use crate::error::{ModelError, Result};
use selftaught_core::nn::DEFAULT_LEAKY_SLOPE;
use selftaught_core::ConvGeometry;
use serde::{Deserialize, Serialize};

/// Grid every statistic map is resampled to.
pub const FULL_INPUT_DIMS: [usize; 3] = [48, 56, 48];

const ENCODER_CHANNELS_4: [usize; 4] = [64, 128, 256, 512];
const ENCODER_CHANNELS_5: [usize; 5] = [32, 64, 128, 256, 512];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchId {
    Cae4,
    Cae5,
    Cnn4,
    Cnn5,
}

impl ArchId {
    pub fn depth(self) -> usize {
        match self {
            ArchId::Cae4 | ArchId::Cnn4 => 4,
            ArchId::Cae5 | ArchId::Cnn5 => 5,
        }
    }

    pub fn is_autoencoder(self) -> bool {
        matches!(self, ArchId::Cae4 | ArchId::Cae5)
    }

    /// The autoencoder whose encoder matches this classifier (or itself).
    pub fn autoencoder(self) -> ArchId {
        match self.depth() {
            4 => ArchId::Cae4,
            _ => ArchId::Cae5,
        }
    }

    pub fn classifier(self) -> ArchId {
        match self.depth() {
            4 => ArchId::Cnn4,
            _ => ArchId::Cnn5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArchId::Cae4 => "cae4",
            ArchId::Cae5 => "cae5",
            ArchId::Cnn4 => "cnn4",
            ArchId::Cnn5 => "cnn5",
        }
    }

    pub fn parse(s: &str) -> Option<ArchId> {
        match s {
            "cae4" => Some(ArchId::Cae4),
            "cae5" => Some(ArchId::Cae5),
            "cnn4" => Some(ArchId::Cnn4),
            "cnn5" => Some(ArchId::Cnn5),
            _ => None,
        }
    }
}

impl std::fmt::Display for ArchId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Tconv,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActivationSpec {
    LeakyRelu { slope: f64 },
    ScaledSigmoid,
    Sigmoid,
    None,
}

impl ActivationSpec {
    pub fn to_activation(self) -> selftaught_core::nn::Activation {
        use selftaught_core::nn::Activation;
        match self {
            ActivationSpec::LeakyRelu { slope } => Activation::LeakyRelu(slope),
            ActivationSpec::ScaledSigmoid => Activation::ScaledSigmoid,
            ActivationSpec::Sigmoid => Activation::Sigmoid,
            ActivationSpec::None => Activation::Identity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default)]
    pub kernel: [usize; 3],
    #[serde(default)]
    pub stride: [usize; 3],
    #[serde(default)]
    pub padding: [usize; 3],
    pub norm: bool,
    pub activation: ActivationSpec,
}

impl LayerSpec {
    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry::new(self.kernel, self.stride, self.padding)
    }

    fn encoder(in_channels: usize, out_channels: usize, slope: f64) -> Self {
        Self {
            kind: LayerKind::Conv,
            in_channels,
            out_channels,
            kernel: [3; 3],
            stride: [2; 3],
            padding: [1; 3],
            norm: true,
            activation: ActivationSpec::LeakyRelu { slope },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    ScaledSigmoid,
    Sigmoid,
}

/// Knobs for the plan constructors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub input_dims: [usize; 3],
    /// Every channel count is divided by this factor (1 = full width).
    pub width_divisor: usize,
    pub leaky_slope: f64,
    pub output_activation: OutputActivation,
    /// Batch-normalize the decoder's output layer.
    pub output_norm: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            input_dims: FULL_INPUT_DIMS,
            width_divisor: 1,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            output_activation: OutputActivation::ScaledSigmoid,
            output_norm: false,
        }
    }
}

impl PlanOptions {
    pub fn with_dims(input_dims: [usize; 3]) -> Self {
        Self {
            input_dims,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitecturePlan {
    pub arch_id: ArchId,
    pub input_dims: [usize; 3],
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub n_classes: Option<usize>,
}

/// Output of one layer: channels (or features, for linear layers) and
/// spatial extent (`[1, 1, 1]` for linear layers).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub channels: usize,
    pub spatial: [usize; 3],
}

impl LayerShape {
    pub fn numel(&self) -> usize {
        self.channels * self.spatial.iter().product::<usize>()
    }
}

fn encoder_channels(depth: usize, divisor: usize) -> Result<Vec<usize>> {
    let base: &[usize] = match depth {
        4 => &ENCODER_CHANNELS_4,
        5 => &ENCODER_CHANNELS_5,
        d => return Err(ModelError::Plan(format!("unsupported depth {d}"))),
    };
    if divisor == 0 {
        return Err(ModelError::Plan("width divisor must be positive".into()));
    }
    Ok(base.iter().map(|c| (c / divisor).max(1)).collect())
}

fn encoder_layers(depth: usize, opts: &PlanOptions) -> Result<Vec<LayerSpec>> {
    let ch = encoder_channels(depth, opts.width_divisor)?;
    let mut layers = Vec::with_capacity(depth);
    let mut prev = 1;
    for &c in &ch {
        layers.push(LayerSpec::encoder(prev, c, opts.leaky_slope));
        prev = c;
    }
    Ok(layers)
}

fn encoder_chain(layers: &[LayerSpec], input: [usize; 3]) -> Result<Vec<[usize; 3]>> {
    let mut dims = vec![input];
    for (i, l) in layers.iter().enumerate() {
        let next = l.geometry().conv_output(*dims.last().unwrap()).ok_or_else(|| {
            ModelError::Plan(format!("encoder layer {i} has a non-positive output extent"))
        })?;
        dims.push(next);
    }
    Ok(dims)
}

impl ArchitecturePlan {
    /// Autoencoder. Decoder kernels are chosen per axis so each transposed
    /// convolution restores the extent of the mirrored encoder input:
    /// `k = target - (n - 1) * s + 2p`.
    pub fn cae(depth: usize, opts: PlanOptions) -> Result<Self> {
        let arch_id = match depth {
            4 => ArchId::Cae4,
            5 => ArchId::Cae5,
            d => return Err(ModelError::Plan(format!("unsupported depth {d}"))),
        };
        let mut layers = encoder_layers(depth, &opts)?;
        let chain = encoder_chain(&layers, opts.input_dims)?;
        let (stride, padding) = (2usize, 1usize);
        for i in (0..depth).rev() {
            let enc = &layers[i];
            let (from, to) = (chain[i + 1], chain[i]);
            let mut kernel = [0; 3];
            for a in 0..3 {
                let k = to[a] as isize - (from[a] as isize - 1) * stride as isize + 2 * padding as isize;
                if k <= padding as isize {
                    return Err(ModelError::Plan(format!(
                        "no transposed kernel restores extent {} from {} on axis {a}",
                        to[a], from[a]
                    )));
                }
                kernel[a] = k as usize;
            }
            let last = i == 0;
            layers.push(LayerSpec {
                kind: LayerKind::Tconv,
                in_channels: enc.out_channels,
                out_channels: enc.in_channels,
                kernel,
                stride: [stride; 3],
                padding: [padding; 3],
                norm: !last || opts.output_norm,
                activation: if last {
                    match opts.output_activation {
                        OutputActivation::ScaledSigmoid => ActivationSpec::ScaledSigmoid,
                        OutputActivation::Sigmoid => ActivationSpec::Sigmoid,
                    }
                } else {
                    ActivationSpec::LeakyRelu {
                        slope: opts.leaky_slope,
                    }
                },
            });
        }
        let plan = Self {
            arch_id,
            input_dims: opts.input_dims,
            layers,
            n_classes: None,
        };
        plan_shapes(&plan)?;
        Ok(plan)
    }

    /// Classifier: the autoencoder's encoder followed by one fully-connected
    /// layer over the channel-major flattened latent tensor.
    pub fn cnn(depth: usize, n_classes: usize, opts: PlanOptions) -> Result<Self> {
        let arch_id = match depth {
            4 => ArchId::Cnn4,
            5 => ArchId::Cnn5,
            d => return Err(ModelError::Plan(format!("unsupported depth {d}"))),
        };
        if n_classes == 0 {
            return Err(ModelError::Plan("n_classes must be positive".into()));
        }
        let mut layers = encoder_layers(depth, &opts)?;
        let chain = encoder_chain(&layers, opts.input_dims)?;
        let latent = layers.last().unwrap().out_channels * chain.last().unwrap().iter().product::<usize>();
        layers.push(LayerSpec {
            kind: LayerKind::Linear,
            in_channels: latent,
            out_channels: n_classes,
            kernel: [1; 3],
            stride: [1; 3],
            padding: [0; 3],
            norm: false,
            activation: ActivationSpec::None,
        });
        let plan = Self {
            arch_id,
            input_dims: opts.input_dims,
            layers,
            n_classes: Some(n_classes),
        };
        plan_shapes(&plan)?;
        Ok(plan)
    }

    pub fn from_arch(arch: ArchId, n_classes: Option<usize>, opts: PlanOptions) -> Result<Self> {
        if arch.is_autoencoder() {
            Self::cae(arch.depth(), opts)
        } else {
            let k = n_classes.ok_or_else(|| ModelError::Plan("classifier needs n_classes".into()))?;
            Self::cnn(arch.depth(), k, opts)
        }
    }

    /// Leading convolution layers.
    pub fn encoder(&self) -> &[LayerSpec] {
        let n = self.layers.iter().take_while(|l| l.kind == LayerKind::Conv).count();
        &self.layers[..n]
    }

    pub fn latent_shape(&self) -> Result<LayerShape> {
        let shapes = plan_shapes(self)?;
        Ok(shapes[self.encoder().len() - 1])
    }

    /// Trainable parameters: weights, biases and normalization affines.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                let kvol: usize = match l.kind {
                    LayerKind::Linear => 1,
                    _ => l.kernel.iter().product(),
                };
                let norm = if l.norm { 2 * l.out_channels } else { 0 };
                l.in_channels * l.out_channels * kvol + l.out_channels + norm
            })
            .sum()
    }
}

/// Per-layer output shapes. Autoencoder plans must end at `input_dims`.
pub fn plan_shapes(plan: &ArchitecturePlan) -> Result<Vec<LayerShape>> {
    if plan.layers.is_empty() {
        return Err(ModelError::Plan("no layers".into()));
    }
    let mut channels = 1;
    let mut dims = plan.input_dims;
    let mut flat = false;
    let mut shapes = Vec::with_capacity(plan.layers.len());
    for (i, l) in plan.layers.iter().enumerate() {
        let expected_in = if flat { channels } else if l.kind == LayerKind::Linear {
            channels * dims.iter().product::<usize>()
        } else {
            channels
        };
        if l.in_channels != expected_in {
            return Err(ModelError::Plan(format!(
                "layer {i} expects {} inputs but receives {expected_in}",
                l.in_channels
            )));
        }
        let out = match l.kind {
            LayerKind::Conv if !flat => l.geometry().conv_output(dims),
            LayerKind::Tconv if !flat => l.geometry().tconv_output(dims),
            LayerKind::Linear => {
                flat = true;
                Some([1, 1, 1])
            }
            _ => None,
        }
        .ok_or_else(|| ModelError::Plan(format!("layer {i} has a non-positive output extent")))?;
        channels = l.out_channels;
        dims = out;
        shapes.push(LayerShape {
            channels,
            spatial: dims,
        });
    }
    if plan.arch_id.is_autoencoder() && (channels != 1 || dims != plan.input_dims) {
        return Err(ModelError::Plan(format!(
            "decoder terminates at {channels}x{dims:?}, expected 1x{:?}",
            plan.input_dims
        )));
    }
    Ok(shapes)
}
