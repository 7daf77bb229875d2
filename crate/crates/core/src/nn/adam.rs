use crate::element::Element;
use crate::error::{invalid, Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are created on the first step
/// and must keep the shapes of their parameters afterwards.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Element> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Option<&Tensor<T>>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(invalid(
                "adam_step",
                format!("{} parameters but {} gradients", params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let g = g.ok_or(TensorError::MissingGrad(i))?;
            if g.shape() != p.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::ZERO; p.numel()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.numel())
        {
            return Err(invalid("adam_step", "parameter set changed between steps"));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].expect("checked above").data();
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (k, w) in p.data_mut().iter_mut().enumerate() {
                let gk = g[k].to_f64();
                let mk = beta1 * m[k].to_f64() + (1.0 - beta1) * gk;
                let vk = beta2 * v[k].to_f64() + (1.0 - beta2) * gk * gk;
                m[k] = T::from_f64(mk);
                v[k] = T::from_f64(vk);
                let update = lr * (mk / bc1) / ((vk / bc2).sqrt() + eps);
                *w = T::from_f64(w.to_f64() - update);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = Adam::<f64>::new(AdamConfig::default());
        let mut p = Tensor::from_f64(&[3], &[0.5, -1.0, 2.0]).unwrap();
        let orig = p.clone();
        let g = Tensor::ones(&[3]);
        adam.step(&mut [&mut p], &[Some(&g)]).unwrap();
        for (a, b) in p.data().iter().zip(orig.data()) {
            assert!((a - b + 1e-4).abs() < 1e-10);
        }
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut adam = Adam::<f64>::new(AdamConfig::default());
        let mut p = Tensor::from_f64(&[2], &[0.5, -1.0]).unwrap();
        let orig = p.clone();
        let g = Tensor::zeros(&[2]);
        for _ in 0..3 {
            adam.step(&mut [&mut p], &[Some(&g)]).unwrap();
        }
        assert_eq!(p, orig);
        assert_eq!(adam.steps(), 3);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut adam = Adam::<f64>::new(AdamConfig::default());
        let mut p = Tensor::zeros(&[2]);
        assert_eq!(
            adam.step(&mut [&mut p], &[None]).unwrap_err(),
            TensorError::MissingGrad(0)
        );
    }
}
