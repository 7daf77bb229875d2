use crate::error::{Result, StatsError};
use serde::{Deserialize, Serialize};

/// One metric's value per CV fold for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub metric: String,
    pub model: String,
    pub values: Vec<f64>,
}

impl FoldScores {
    pub fn new(metric: impl Into<String>, model: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            metric: metric.into(),
            model: model.into(),
            values,
        }
    }

    pub fn mean_sem(&self) -> Result<(f64, f64)> {
        mean_sem(&self.values)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than 2 values.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Mean and standard error of the mean.
pub fn mean_sem(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(StatsError::TooShort { need: 2, have: values.len() });
    }
    Ok((mean(values), sample_std(values) / (values.len() as f64).sqrt()))
}

/// `"83.6 (0.61)"`: one decimal for the mean, two for the error.
pub fn format_mean_sem(mean: f64, sem: f64) -> String {
    format!("{mean:.1} ({sem:.2})")
}
