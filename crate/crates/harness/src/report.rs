//! Text tables, CSV tables and plot series from recipe results.

use crate::error::{HarnessError, Result};
use crate::recipe::RecipeResults;
use selftaught_stats::{mean_sem, ComparisonCell, ComparisonTable, TextTable};
use std::path::Path;

/// Metrics reported per recipe, with their table labels.
pub const REPORT_METRICS: [(&str, &str); 2] = [("accuracy", "Acc"), ("f1", "F1")];

const BASELINE: &str = "default";
const TREATMENT: &str = "pretrained";

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub text: String,
    /// `(file name, contents)` of every CSV table and plot series.
    pub files: Vec<(String, String)>,
}

impl Report {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), &self.text)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_str())
    }
}

/// Comparison tables (when both init modes ran) and `(x, mean, sem)`
/// series per init mode and metric.
pub fn render_report(results: &RecipeResults) -> Result<Report> {
    if results.sizes.iter().all(|s| s.runs.is_empty()) {
        return Err(HarnessError::NoRuns);
    }
    let mut text = format!(
        "{} ({} classes, {} data)\n",
        results.recipe.title(),
        results.n_classes,
        results.provenance
    );
    for (init, cfg) in &results.selected {
        text.push_str(&format!("selected {init}: {}\n", cfg.label()));
    }
    let mut files = Vec::new();
    for (metric, short) in REPORT_METRICS {
        let both = results
            .sizes
            .iter()
            .all(|s| s.runs.contains_key(BASELINE) && s.runs.contains_key(TREATMENT));
        if both {
            let cells = results
                .sizes
                .iter()
                .map(|s| ComparisonCell::new(s.label.clone(), s.runs[BASELINE].values(metric), s.runs[TREATMENT].values(metric)))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let table = ComparisonTable {
                title: format!("{} [{}]", results.recipe.title(), short),
                metric: short.into(),
                baseline_name: BASELINE.into(),
                treatment_name: TREATMENT.into(),
                percent: true,
                cells,
            };
            text.push('\n');
            text.push_str(&table.to_text());
            files.push((format!("table_{metric}.csv"), table.to_csv()));
        }
        let mut plot = TextTable::new(["metric", "init", "x", "mean", "sem"]);
        for s in &results.sizes {
            for (init, cv) in &s.runs {
                let (m, e) = mean_sem(&cv.values(metric))?;
                plot.push([metric.to_string(), init.clone(), s.subjects.to_string(), m.to_string(), e.to_string()]);
            }
        }
        files.push((format!("plot_{metric}.csv"), plot.to_csv()));
    }
    Ok(Report { text, files })
}
