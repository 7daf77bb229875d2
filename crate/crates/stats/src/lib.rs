//! Evaluation statistics: Pearson correlation, macro-averaged
//! classification metrics, fold summaries and paired t-tests.

mod classification;
mod correlation;
mod error;
mod special;
mod summary;
mod table;
mod ttest;

pub use classification::{classification_metrics, confusion_matrix, ClassStats, ClassificationMetrics};
pub use correlation::{pearson_r, pearson_r_masked};
pub use error::{Result, StatsError};
pub use special::{ln_gamma, regularized_incomplete_beta, student_t_two_tailed};
pub use summary::{format_mean_sem, mean, mean_sem, sample_std, FoldScores};
pub use table::{ComparisonCell, ComparisonTable, TextTable};
pub use ttest::{paired_ttest, Degeneracy, PairedTestResult, SIGNIFICANCE_LEVEL};
