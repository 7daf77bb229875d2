use crate::error::{Result, StatsError};
use crate::special::student_t_two_tailed;
use crate::summary::sample_std;
use serde::{Deserialize, Serialize};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// Every difference is zero: t = 0, p = 1.
    AllZero,
    /// Differences are identical and nonzero: t = ±inf, p = 0.
    ZeroVariance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub t_statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub significant: bool,
    pub degeneracy: Option<Degeneracy>,
}

/// Two-tailed paired t-test on `d = a - b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<PairedTestResult> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooShort { need: 2, have: n });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let sd = sample_std(&d);
    let dof = n - 1;
    let (t, p, degeneracy) = if d.iter().all(|&v| v == 0.0) {
        (0.0, 1.0, Some(Degeneracy::AllZero))
    } else if sd == 0.0 || sd <= 1e-15 * mean.abs() {
        (f64::INFINITY.copysign(mean), 0.0, Some(Degeneracy::ZeroVariance))
    } else {
        let t = mean / (sd / (n as f64).sqrt());
        (t, student_t_two_tailed(t, dof as f64), None)
    };
    Ok(PairedTestResult {
        t_statistic: t,
        dof,
        p_value: p,
        significant: p < SIGNIFICANCE_LEVEL,
        degeneracy,
    })
}
