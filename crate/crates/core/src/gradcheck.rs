//! Central finite-difference gradient checking in 64-bit precision.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

/// Relative error floor: gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

/// Compare tape gradients of `f` against central differences with step `eps`
/// for every element of every input.
pub fn check<F>(inputs: &[Tensor<f64>], eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.param(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            tape.grad(*v)
                .map(|g| g.data().to_vec())
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = inputs
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (which, grads) in analytic.iter().enumerate() {
        for k in 0..grads.len() {
            let orig = work[which].data()[k];
            work[which].data_mut()[k] = orig + eps;
            let plus = eval(&work)?;
            work[which].data_mut()[k] = orig - eps;
            let minus = eval(&work)?;
            work[which].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let abs = (numeric - grads[k]).abs();
            let rel = abs / numeric.abs().max(grads[k].abs()).max(REL_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_passes() {
        let x = Tensor::from_f64(&[3], &[0.5, -1.5, 2.0]).unwrap();
        let r = check(&[x], 1e-4, |t, v| {
            let sq = t.mul(v[0], v[0])?;
            t.reduce_sum(sq)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.checked, 3);
    }
}
