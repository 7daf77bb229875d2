use crate::element::Element;
use crate::error::Result;
use crate::kernels::ConvGeometry;
use crate::nn::init::{fan_in, kaiming_uniform, uniform_bias};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use rand::Rng;

/// Negative slope of leaky ReLU unless configured otherwise.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct Conv3d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub geometry: ConvGeometry,
}

impl<T: Element> Conv3d<T> {
    pub fn new(in_channels: usize, out_channels: usize, geometry: ConvGeometry) -> Self {
        let [kd, kh, kw] = geometry.kernel;
        Self {
            weight: Tensor::zeros(&[out_channels, in_channels, kd, kh, kw]),
            bias: Tensor::zeros(&[out_channels]),
            geometry,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn reset_parameters<R: Rng + ?Sized>(&mut self, a: f64, rng: &mut R) -> Result<()> {
        kaiming_uniform(&mut self.weight, a, rng)?;
        uniform_bias(&mut self.bias, fan_in(self.weight.shape())?, rng)?;
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, bound: &mut Vec<Var>) -> Result<Var> {
        let w = tape.param(self.weight.clone())?;
        let b = tape.param(self.bias.clone())?;
        bound.extend([w, b]);
        tape.conv3d(x, w, Some(b), self.geometry)
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![("weight", &self.weight), ("bias", &self.bias)]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }
}

/// Transposed convolution; weight layout `(in, out, kD, kH, kW)`.
#[derive(Clone, Debug)]
pub struct ConvTranspose3d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub geometry: ConvGeometry,
}

impl<T: Element> ConvTranspose3d<T> {
    pub fn new(in_channels: usize, out_channels: usize, geometry: ConvGeometry) -> Self {
        let [kd, kh, kw] = geometry.kernel;
        Self {
            weight: Tensor::zeros(&[in_channels, out_channels, kd, kh, kw]),
            bias: Tensor::zeros(&[out_channels]),
            geometry,
        }
    }

    pub fn reset_parameters<R: Rng + ?Sized>(&mut self, a: f64, rng: &mut R) -> Result<()> {
        kaiming_uniform(&mut self.weight, a, rng)?;
        uniform_bias(&mut self.bias, fan_in(self.weight.shape())?, rng)?;
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, bound: &mut Vec<Var>) -> Result<Var> {
        let w = tape.param(self.weight.clone())?;
        let b = tape.param(self.bias.clone())?;
        bound.extend([w, b]);
        tape.tconv3d(x, w, Some(b), self.geometry)
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![("weight", &self.weight), ("bias", &self.bias)]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }
}

/// Per-channel batch normalization over `(N, D, H, W)`.
#[derive(Clone, Debug)]
pub struct BatchNorm3d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
    pub training: bool,
}

impl<T: Element> BatchNorm3d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::ones(&[channels]),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::ones(&[channels]),
            eps: 1e-5,
            momentum: 0.1,
            training: true,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    /// Train mode normalizes with batch statistics and folds them into the
    /// running buffers (unbiased variance); eval mode uses the buffers only.
    pub fn forward(&mut self, tape: &mut Tape<T>, x: Var, bound: &mut Vec<Var>) -> Result<Var> {
        let g = tape.param(self.gamma.clone())?;
        let b = tape.param(self.beta.clone())?;
        bound.extend([g, b]);
        if self.training {
            let (y, stats) = tape.batch_norm_train(x, g, b, self.eps)?;
            let m = self.momentum;
            let unbias = stats.count as f64 / (stats.count as f64 - 1.0);
            for (c, (rm, rv)) in self
                .running_mean
                .data_mut()
                .iter_mut()
                .zip(self.running_var.data_mut().iter_mut())
                .enumerate()
            {
                *rm = T::from_f64((1.0 - m) * rm.to_f64() + m * stats.mean[c]);
                *rv = T::from_f64((1.0 - m) * rv.to_f64() + m * stats.var[c] * unbias);
            }
            Ok(y)
        } else {
            let mean = self.running_mean.to_f64_vec();
            let var = self.running_var.to_f64_vec();
            tape.batch_norm_eval(x, g, b, &mean, &var, self.eps)
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![("gamma", &self.gamma), ("beta", &self.beta)]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![("gamma", &mut self.gamma), ("beta", &mut self.beta)]
    }

    pub fn buffers(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![("running_mean", &self.running_mean), ("running_var", &self.running_var)]
    }

    pub fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![
            ("running_mean", &mut self.running_mean),
            ("running_var", &mut self.running_var),
        ]
    }
}

/// Fully-connected layer, weight `(out, in)`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Element> Linear<T> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[out_features, in_features]),
            bias: Tensor::zeros(&[out_features]),
        }
    }

    pub fn reset_parameters<R: Rng + ?Sized>(&mut self, a: f64, rng: &mut R) -> Result<()> {
        kaiming_uniform(&mut self.weight, a, rng)?;
        uniform_bias(&mut self.bias, fan_in(self.weight.shape())?, rng)?;
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, bound: &mut Vec<Var>) -> Result<Var> {
        let w = tape.param(self.weight.clone())?;
        let b = tape.param(self.bias.clone())?;
        bound.extend([w, b]);
        let x = if tape.shape(x).len() == 2 { x } else { tape.flatten(x)? };
        tape.linear(x, w, Some(b))
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![("weight", &self.weight), ("bias", &self.bias)]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    /// `2 * sigmoid(x) - 1`.
    ScaledSigmoid,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply<T: Element>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        match *self {
            Activation::LeakyRelu(s) => tape.leaky_relu(x, s),
            Activation::ScaledSigmoid => tape.scaled_sigmoid(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Identity => Ok(x),
        }
    }
}
