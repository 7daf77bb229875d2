use crate::error::Result;
use crate::summary::{format_mean_sem, mean_sem};
use crate::ttest::{paired_ttest, PairedTestResult};
use serde::{Deserialize, Serialize};

/// Plain string table rendered as CSV or whitespace-aligned text.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TextTable {
    pub fn new(headers: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: impl IntoIterator<Item = impl Into<String>>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        let _ = w.write_record(&self.headers);
        for r in &self.rows {
            let _ = w.write_record(r);
        }
        String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
    }

    pub fn to_text(&self) -> String {
        let ncol = self.rows.iter().map(Vec::len).chain([self.headers.len()]).max().unwrap_or(0);
        let mut width = vec![0usize; ncol];
        for r in std::iter::once(&self.headers).chain(&self.rows) {
            for (i, c) in r.iter().enumerate() {
                width[i] = width[i].max(c.chars().count());
            }
        }
        let line = |r: &[String]| {
            let cells: Vec<String> = (0..ncol)
                .map(|i| {
                    let c = r.get(i).map_or("", String::as_str);
                    if i == 0 {
                        format!("{c:<w$}", w = width[i])
                    } else {
                        format!("{c:>w$}", w = width[i])
                    }
                })
                .collect();
            cells.join("  ").trim_end().to_string()
        };
        let mut out = line(&self.headers);
        out.push('\n');
        out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * ncol.saturating_sub(1)));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

/// Baseline vs treatment fold scores for one group (e.g. a sample size).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub group: String,
    pub baseline: Vec<f64>,
    pub treatment: Vec<f64>,
    pub baseline_mean_sem: (f64, f64),
    pub treatment_mean_sem: (f64, f64),
    /// Paired test on `baseline - treatment`.
    pub test: PairedTestResult,
}

impl ComparisonCell {
    pub fn new(group: impl Into<String>, baseline: Vec<f64>, treatment: Vec<f64>) -> Result<Self> {
        Ok(Self {
            group: group.into(),
            baseline_mean_sem: mean_sem(&baseline)?,
            treatment_mean_sem: mean_sem(&treatment)?,
            test: paired_ttest(&baseline, &treatment)?,
            baseline,
            treatment,
        })
    }
}

/// Grouped comparison of two initializations: mean (sem) per model and the
/// paired t statistic with its p-value per group. Values are rendered in
/// percent when `percent` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub title: String,
    pub metric: String,
    pub baseline_name: String,
    pub treatment_name: String,
    pub percent: bool,
    pub cells: Vec<ComparisonCell>,
}

fn stars(p: f64) -> &'static str {
    if p < crate::ttest::SIGNIFICANCE_LEVEL {
        "*"
    } else {
        ""
    }
}

impl ComparisonTable {
    pub fn to_table(&self) -> TextTable {
        let scale = if self.percent { 100.0 } else { 1.0 };
        let mut headers = vec![String::from("group")];
        for c in &self.cells {
            headers.push(format!("{} {}", c.group, self.baseline_name));
            headers.push(format!("{} {}", c.group, self.treatment_name));
        }
        let mut t = TextTable::new(headers);
        let mut mean_row = vec![format!("Mean {} (sem)", self.metric)];
        let mut t_row = vec![format!("Paired T-test ({} dof)", self.cells.first().map_or(0, |c| c.test.dof))];
        let mut p_row = vec![String::from("p-value")];
        for c in &self.cells {
            let (bm, bs) = c.baseline_mean_sem;
            let (tm, ts) = c.treatment_mean_sem;
            mean_row.push(format_mean_sem(bm * scale, bs * scale));
            mean_row.push(format_mean_sem(tm * scale, ts * scale));
            t_row.push(String::new());
            t_row.push(format!("{:.2}{}", c.test.t_statistic, stars(c.test.p_value)));
            p_row.push(String::new());
            p_row.push(format!("{:.4}{}", c.test.p_value, stars(c.test.p_value)));
        }
        t.rows = vec![mean_row, t_row, p_row];
        t
    }

    /// One row per group with raw numbers.
    pub fn to_csv(&self) -> String {
        let mut t = TextTable::new([
            "group",
            "metric",
            "baseline_mean",
            "baseline_sem",
            "treatment_mean",
            "treatment_sem",
            "t",
            "dof",
            "p",
            "significant",
        ]);
        for c in &self.cells {
            t.push([
                c.group.clone(),
                self.metric.clone(),
                c.baseline_mean_sem.0.to_string(),
                c.baseline_mean_sem.1.to_string(),
                c.treatment_mean_sem.0.to_string(),
                c.treatment_mean_sem.1.to_string(),
                c.test.t_statistic.to_string(),
                c.test.dof.to_string(),
                c.test.p_value.to_string(),
                c.test.significant.to_string(),
            ]);
        }
        t.to_csv()
    }

    pub fn to_text(&self) -> String {
        format!("{}\n{}", self.title, self.to_table().to_text())
    }
}
