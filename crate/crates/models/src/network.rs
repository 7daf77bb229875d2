use crate::error::{ModelError, Result};
use crate::plan::{plan_shapes, ArchId, ArchitecturePlan, LayerKind, LayerSpec};
use selftaught_core::nn::{
    Activation, BatchNorm3d, Checkpoint, Conv3d, ConvTranspose3d, Linear, DEFAULT_KAIMING_A,
};
use selftaught_core::{Element, Tape, Tensor, Var};
use rand::Rng;

/// Which encoder tensors [`Network::from_cae`] copies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TransferMode {
    /// Conv weights and biases plus normalization affine and running stats.
    #[default]
    WithNorm,
    /// Conv weights and biases only; normalization starts fresh.
    ConvOnly,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Conv(Conv3d<T>),
    Tconv(ConvTranspose3d<T>),
    Linear(Linear<T>),
}

#[derive(Clone, Debug)]
struct Block<T> {
    op: Op<T>,
    norm: Option<BatchNorm3d<T>>,
    activation: Activation,
    prefix: String,
}

impl<T: Element> Block<T> {
    fn op_name(&self) -> &'static str {
        match self.op {
            Op::Conv(_) => "conv",
            Op::Tconv(_) => "tconv",
            Op::Linear(_) => "",
        }
    }

    fn param_name(&self, field: &str) -> String {
        match self.op {
            Op::Linear(_) => format!("{}.{field}", self.prefix),
            _ => format!("{}.{}.{field}", self.prefix, self.op_name()),
        }
    }
}

/// Result of one recorded forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub output: Var,
    /// Activation after the last convolution block.
    pub encoder_output: Var,
    /// Parameter leaves, in the order of [`Network::params_mut`].
    pub params: Vec<Var>,
}

/// A parameterized CAE or CNN.
#[derive(Clone, Debug)]
pub struct Network<T> {
    plan: ArchitecturePlan,
    blocks: Vec<Block<T>>,
}

fn build_blocks<T: Element>(plan: &ArchitecturePlan) -> Vec<Block<T>> {
    let n_enc = plan.encoder().len();
    plan.layers
        .iter()
        .enumerate()
        .map(|(i, l): (usize, &LayerSpec)| {
            let (op, prefix) = match l.kind {
                LayerKind::Conv => (
                    Op::Conv(Conv3d::new(l.in_channels, l.out_channels, l.geometry())),
                    format!("encoder.{i}"),
                ),
                LayerKind::Tconv => (
                    Op::Tconv(ConvTranspose3d::new(l.in_channels, l.out_channels, l.geometry())),
                    format!("decoder.{}", i - n_enc),
                ),
                LayerKind::Linear => (Op::Linear(Linear::new(l.in_channels, l.out_channels)), "head".to_string()),
            };
            Block {
                op,
                norm: (l.norm && l.kind != LayerKind::Linear).then(|| BatchNorm3d::new(l.out_channels)),
                activation: l.activation.to_activation(),
                prefix,
            }
        })
        .collect()
}

impl<T: Element> Network<T> {
    /// Kaiming-uniform initialization of every conv, tconv and linear layer.
    pub fn new<R: Rng + ?Sized>(plan: ArchitecturePlan, rng: &mut R) -> Result<Self> {
        plan_shapes(&plan)?;
        let mut blocks = build_blocks(&plan);
        for b in &mut blocks {
            match &mut b.op {
                Op::Conv(c) => c.reset_parameters(DEFAULT_KAIMING_A, rng)?,
                Op::Tconv(c) => c.reset_parameters(DEFAULT_KAIMING_A, rng)?,
                Op::Linear(c) => c.reset_parameters(DEFAULT_KAIMING_A, rng)?,
            }
        }
        Ok(Self { plan, blocks })
    }

    pub fn plan(&self) -> &ArchitecturePlan {
        &self.plan
    }

    pub fn arch_id(&self) -> ArchId {
        self.plan.arch_id
    }

    pub fn set_training(&mut self, training: bool) {
        for b in &mut self.blocks {
            if let Some(n) = &mut b.norm {
                n.training = training;
            }
        }
    }

    pub fn is_training(&self) -> bool {
        self.blocks.iter().filter_map(|b| b.norm.as_ref()).any(|n| n.training)
    }

    /// Records the network on `tape`. In training mode normalization layers
    /// update their running statistics.
    pub fn forward(&mut self, tape: &mut Tape<T>, x: Var) -> Result<ForwardPass> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 5 || shape[1] != 1 || shape[2..] != self.plan.input_dims[..] {
            let mut expected = vec![shape.first().copied().unwrap_or(0), 1];
            expected.extend_from_slice(&self.plan.input_dims);
            return Err(ModelError::InputDims { expected, found: shape });
        }
        let mut params = Vec::new();
        let mut h = x;
        let mut encoder_output = x;
        for b in &mut self.blocks {
            h = match &b.op {
                Op::Conv(c) => c.forward(tape, h, &mut params)?,
                Op::Tconv(c) => c.forward(tape, h, &mut params)?,
                Op::Linear(c) => c.forward(tape, h, &mut params)?,
            };
            if let Some(n) = &mut b.norm {
                h = n.forward(tape, h, &mut params)?;
            }
            h = b.activation.apply(tape, h)?;
            if matches!(b.op, Op::Conv(_)) {
                encoder_output = h;
            }
        }
        Ok(ForwardPass {
            output: h,
            encoder_output,
            params,
        })
    }

    /// Forward pass on a throwaway tape; returns `(output, encoder_output)`.
    pub fn infer(&mut self, batch: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut tape = Tape::new();
        let x = tape.constant(batch.clone())?;
        let fp = self.forward(&mut tape, x)?;
        Ok((tape.value(fp.output).clone(), tape.value(fp.encoder_output).clone()))
    }

    /// Trainable tensors in binding order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            match &mut b.op {
                Op::Conv(c) => out.extend(c.params_mut().into_iter().map(|(_, t)| t)),
                Op::Tconv(c) => out.extend(c.params_mut().into_iter().map(|(_, t)| t)),
                Op::Linear(c) => out.extend(c.params_mut().into_iter().map(|(_, t)| t)),
            }
            if let Some(n) = &mut b.norm {
                out.extend(n.params_mut().into_iter().map(|(_, t)| t));
            }
        }
        out
    }

    /// Every named tensor: parameters followed by each block's norm buffers.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for b in &self.blocks {
            let ps = match &b.op {
                Op::Conv(c) => c.params(),
                Op::Tconv(c) => c.params(),
                Op::Linear(c) => c.params(),
            };
            out.extend(ps.into_iter().map(|(n, t)| (b.param_name(n), t)));
            if let Some(n) = &b.norm {
                for (f, t) in n.params().into_iter().chain(n.buffers()) {
                    out.push((format!("{}.norm.{f}", b.prefix), t));
                }
            }
        }
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            let prefix = b.prefix.clone();
            let op_name = b.op_name();
            let name = |f: &str| match op_name {
                "" => format!("{prefix}.{f}"),
                o => format!("{prefix}.{o}.{f}"),
            };
            let ps = match &mut b.op {
                Op::Conv(c) => c.params_mut(),
                Op::Tconv(c) => c.params_mut(),
                Op::Linear(c) => c.params_mut(),
            };
            out.extend(ps.into_iter().map(|(n, t)| (name(n), t)));
            if let Some(n) = &mut b.norm {
                let fields: Vec<(&'static str, &mut Tensor<T>)> = {
                    let BatchNorm3d {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                        ..
                    } = n;
                    vec![
                        ("gamma", gamma),
                        ("beta", beta),
                        ("running_mean", running_mean),
                        ("running_var", running_var),
                    ]
                };
                for (f, t) in fields {
                    out.push((format!("{prefix}.norm.{f}"), t));
                }
            }
        }
        out
    }

    /// Trainable scalar count (normalization buffers excluded).
    pub fn parameter_count(&self) -> usize {
        self.named_tensors()
            .iter()
            .filter(|(n, _)| !n.ends_with("running_mean") && !n.ends_with("running_var"))
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(self.plan.arch_id.as_str());
        let plan = serde_json::to_string(&self.plan).map_err(|e| ModelError::Plan(e.to_string()))?;
        ck.metadata.insert("plan".into(), plan);
        for (name, t) in self.named_tensors() {
            ck.insert(name, t.cast::<f32>());
        }
        Ok(ck)
    }

    /// Plan stored in a checkpoint written by [`Network::to_checkpoint`].
    pub fn checkpoint_plan(ck: &Checkpoint) -> Result<ArchitecturePlan> {
        let s = ck
            .metadata
            .get("plan")
            .ok_or_else(|| ModelError::MissingTensor("plan metadata".into()))?;
        serde_json::from_str(s).map_err(|e| ModelError::Plan(e.to_string()))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let plan = Self::checkpoint_plan(ck)?;
        plan_shapes(&plan)?;
        let mut net = Self {
            blocks: build_blocks(&plan),
            plan,
        };
        for (name, t) in net.named_tensors_mut() {
            copy_from(ck, &name, t)?;
        }
        Ok(net)
    }

    /// Classifier whose convolution stack is copied from a CAE checkpoint;
    /// the head (and, in [`TransferMode::ConvOnly`], normalization) is freshly
    /// initialized.
    pub fn from_cae<R: Rng + ?Sized>(
        plan: ArchitecturePlan,
        ck: &Checkpoint,
        mode: TransferMode,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::new(plan, rng)?;
        let network = net.plan.encoder().len();
        let checkpoint = (0..)
            .take_while(|i| ck.get(&format!("encoder.{i}.conv.weight")).is_some())
            .count();
        if network != checkpoint {
            return Err(ModelError::LayerCountMismatch { network, checkpoint });
        }
        for (name, t) in net.named_tensors_mut() {
            if !name.starts_with("encoder.") {
                continue;
            }
            if mode == TransferMode::ConvOnly && name.contains(".norm.") {
                continue;
            }
            copy_from(ck, &name, t)?;
        }
        Ok(net)
    }
}

fn copy_from<T: Element>(ck: &Checkpoint, name: &str, dst: &mut Tensor<T>) -> Result<()> {
    let src = ck.get(name).ok_or_else(|| ModelError::MissingTensor(name.to_string()))?;
    if src.shape() != dst.shape() {
        return Err(ModelError::ShapeMismatch {
            name: name.to_string(),
            expected: dst.shape().to_vec(),
            found: src.shape().to_vec(),
        });
    }
    *dst = src.cast::<T>();
    Ok(())
}
