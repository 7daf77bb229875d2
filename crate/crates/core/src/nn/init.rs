use crate::element::Element;
use crate::error::{invalid, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// Negative-slope parameter of the default convolution/linear initializer.
pub const DEFAULT_KAIMING_A: f64 = 2.236_067_977_499_79; // sqrt(5)

/// Fan-in of a weight tensor laid out `(dim0, dim1, k...)`: `dim1 * prod(k)`.
///
/// This gives `in_channels * kernel_volume` for convolutions and
/// `in_features` for linear layers. Transposed-convolution weights are
/// stored `(in, out, k...)`, so their fan-in is `out * kernel_volume`.
pub fn fan_in(shape: &[usize]) -> Result<usize> {
    if shape.len() < 2 {
        return Err(invalid("kaiming_uniform", format!("cannot compute fan-in of {shape:?}")));
    }
    let f = shape[1] * shape[2..].iter().product::<usize>();
    if f == 0 {
        return Err(invalid("kaiming_uniform", "zero fan-in"));
    }
    Ok(f)
}

/// `gain * sqrt(3 / fan_in)` with `gain = sqrt(2 / (1 + a^2))`.
pub fn kaiming_bound(fan_in: usize, a: f64) -> f64 {
    let gain = (2.0 / (1.0 + a * a)).sqrt();
    gain * (3.0 / fan_in as f64).sqrt()
}

fn fill_uniform<T: Element, R: Rng + ?Sized>(t: &mut Tensor<T>, bound: f64, rng: &mut R) {
    for v in t.data_mut() {
        let mut x = rng.random_range(-bound..bound);
        while x <= -bound {
            x = rng.random_range(-bound..bound);
        }
        *v = T::from_f64(x);
    }
}

pub fn kaiming_uniform<T: Element, R: Rng + ?Sized>(
    weight: &mut Tensor<T>,
    a: f64,
    rng: &mut R,
) -> Result<f64> {
    let f = fan_in(weight.shape())?;
    let b = kaiming_bound(f, a);
    fill_uniform(weight, b, rng);
    Ok(b)
}

/// `Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn uniform_bias<T: Element, R: Rng + ?Sized>(
    bias: &mut Tensor<T>,
    fan_in: usize,
    rng: &mut R,
) -> Result<f64> {
    if fan_in == 0 {
        return Err(invalid("kaiming_uniform", "zero fan-in"));
    }
    let b = 1.0 / (fan_in as f64).sqrt();
    fill_uniform(bias, b, rng);
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bound_reduces_to_inverse_sqrt_fan_in() {
        let f = fan_in(&[128, 64, 3, 3, 3]).unwrap();
        assert_eq!(f, 1728);
        let b = kaiming_bound(f, DEFAULT_KAIMING_A);
        assert!((b - 1.0 / 1728f64.sqrt()).abs() < 1e-15);
        assert!((b - 0.024056).abs() < 1e-6);
        assert!(fan_in(&[4]).is_err());
        assert!(fan_in(&[4, 0, 3]).is_err());
    }

    #[test]
    fn samples_stay_inside_support_with_uniform_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut w = Tensor::<f64>::zeros(&[100, 64, 3, 3, 3]);
        let b = kaiming_uniform(&mut w, DEFAULT_KAIMING_A, &mut rng).unwrap();
        assert!(w.data().iter().all(|v| v.abs() < b));
        let n = w.numel() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = b * b / 3.0;
        assert!(((var - expected) / expected).abs() < 0.05, "{var} vs {expected}");
    }
}
